//! Trainable tangent bundle networks with hand-written reverse-mode gradients.

mod adam;
mod checkpoint;
mod classifier;
mod ddtnn;
mod loss;
mod mlp;
mod rtnn;
mod train;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TbnnError};

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, LayerCheckpoint};
pub use classifier::{GraphClassifier, GraphSample};
pub use ddtnn::{TnnForward, TnnLayer, TnnModel};
pub use loss::{loss_masked_mse, masked_sse, softmax_cross_entropy, MaskedLoss};
pub use mlp::{Dense, Mlp, MlpForward};
pub use rtnn::{RtnnForward, RtnnLayer, RtnnModel};
pub use train::{train, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Tanh => z.map(f64::tanh),
            Activation::Identity => z.clone(),
            Activation::Relu => z.map(|v| v.max(0.0)),
        }
    }

    /// `upstream ∘ σ'(z)`, using the cached output `y = σ(z)` where convenient.
    /// The relu derivative at exactly 0 is taken as 0.
    pub fn backprop(self, z: &DMatrix<f64>, y: &DMatrix<f64>, upstream: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Tanh => upstream.zip_map(y, |g, v| g * (1.0 - v * v)),
            Activation::Identity => upstream.clone(),
            Activation::Relu => upstream.zip_map(z, |g, v| if v > 0.0 { g } else { 0.0 }),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "identity" | "id" | "linear" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            other => Err(TbnnError::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Models expose their weights as an ordered list of matrices; gradients use the same order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&DMatrix<f64>>;
    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>>;
    fn parameter_names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn zero_gradients(&self) -> Vec<DMatrix<f64>> {
        self.parameters()
            .iter()
            .map(|p| DMatrix::zeros(p.nrows(), p.ncols()))
            .collect()
    }
}

pub(crate) fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

pub(crate) fn add_into(acc: &mut [DMatrix<f64>], grads: &[DMatrix<f64>]) {
    for (a, g) in acc.iter_mut().zip(grads) {
        *a += g;
    }
}
