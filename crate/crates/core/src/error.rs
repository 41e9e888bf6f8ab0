use thiserror::Error;

pub type Result<T> = std::result::Result<T, TbnnError>;

#[derive(Debug, Error)]
pub enum TbnnError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("point {index} has an empty local PCA neighborhood")]
    EmptyNeighborhood { index: usize },

    #[error("point {index} has a degenerate neighborhood (all singular values are zero)")]
    DegenerateNeighborhood { index: usize },

    #[error("transport on edge ({i}, {j}) is not orthogonal (deviation {deviation:e})")]
    NonOrthogonalTransport { i: usize, j: usize, deviation: f64 },

    #[error("eigensolver did not converge: {0}")]
    EigenFailure(String),

    #[error("matrix exponential overflowed during squaring")]
    ExpOverflow,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize, trace: Vec<f64> },

    #[error("mask is empty")]
    EmptyMask,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("unknown experiment kind `{0}` (valid kinds: denoise-torus, reconstruct-wind, forecast-wind, classify, converge)")]
    UnknownKind(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no retained runs to aggregate")]
    EmptyAggregate,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TbnnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TbnnError::InvalidInput(msg.into())
    }
}
