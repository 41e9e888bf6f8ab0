use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, GraphClassifier, Mlp, RtnnLayer, RtnnModel, TnnLayer, TnnModel};
use crate::error::{Result, TbnnError};

/// Matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(TbnnError::invalid(format!(
                "tensor declares {}×{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub activation: Activation,
    /// DD-TNN: one `F_in × F_out` tensor per tap. Recurrent: input taps then state taps.
    /// Dense: weight then bias.
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// `ddtnn`, `rtnn` or `classifier`.
    pub model: String,
    pub layers: Vec<LayerCheckpoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub readout: Vec<LayerCheckpoint>,
}

fn layer(activation: Activation, tensors: impl IntoIterator<Item = DMatrix<f64>>) -> LayerCheckpoint {
    LayerCheckpoint {
        activation,
        tensors: tensors.into_iter().map(|m| Tensor::from_matrix(&m)).collect(),
    }
}

fn dense_layers(mlp: &Mlp) -> Vec<LayerCheckpoint> {
    mlp.layers
        .iter()
        .map(|d| layer(d.activation, [d.weight.clone(), d.bias.clone()]))
        .collect()
}

fn mlp_from(layers: &[LayerCheckpoint]) -> Result<Mlp> {
    Mlp::new(
        layers
            .iter()
            .map(|l| match l.tensors.as_slice() {
                [w, b] => Ok(Dense {
                    weight: w.to_matrix()?,
                    bias: b.to_matrix()?,
                    activation: l.activation,
                }),
                _ => Err(TbnnError::invalid("dense layer needs a weight and a bias tensor")),
            })
            .collect::<Result<_>>()?,
    )
}

fn tnn_from(layers: &[LayerCheckpoint]) -> Result<TnnModel> {
    TnnModel::new(
        layers
            .iter()
            .map(|l| {
                Ok(TnnLayer {
                    taps: l.tensors.iter().map(Tensor::to_matrix).collect::<Result<_>>()?,
                    activation: l.activation,
                })
            })
            .collect::<Result<_>>()?,
    )
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    fn expect(&self, model: &str) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(TbnnError::invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.model != model {
            return Err(TbnnError::invalid(format!("checkpoint holds a `{}` model, not `{model}`", self.model)));
        }
        Ok(())
    }

    pub fn from_tnn(model: &TnnModel) -> Self {
        Self {
            version: Self::VERSION,
            model: "ddtnn".into(),
            layers: model
                .layers
                .iter()
                .map(|l| layer(l.activation, l.taps.iter().cloned()))
                .collect(),
            readout: Vec::new(),
        }
    }

    pub fn to_tnn(&self) -> Result<TnnModel> {
        self.expect("ddtnn")?;
        tnn_from(&self.layers)
    }

    pub fn from_rtnn(model: &RtnnModel) -> Self {
        Self {
            version: Self::VERSION,
            model: "rtnn".into(),
            layers: model
                .layers
                .iter()
                .map(|l| layer(l.activation, [l.input_taps.clone(), l.state_taps.clone()]))
                .collect(),
            readout: Vec::new(),
        }
    }

    pub fn to_rtnn(&self) -> Result<RtnnModel> {
        self.expect("rtnn")?;
        RtnnModel::new(
            self.layers
                .iter()
                .map(|l| match l.tensors.as_slice() {
                    [h, w] => Ok(RtnnLayer {
                        input_taps: h.to_matrix()?,
                        state_taps: w.to_matrix()?,
                        activation: l.activation,
                    }),
                    _ => Err(TbnnError::invalid("recurrent layer needs input and state taps")),
                })
                .collect::<Result<_>>()?,
        )
    }

    pub fn from_classifier(model: &GraphClassifier) -> Self {
        Self {
            model: "classifier".into(),
            readout: dense_layers(&model.readout),
            ..Self::from_tnn(&model.tnn)
        }
    }

    pub fn to_classifier(&self) -> Result<GraphClassifier> {
        self.expect("classifier")?;
        GraphClassifier::new(tnn_from(&self.layers)?, mlp_from(&self.readout)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
