use nalgebra::DMatrix;
use rand::Rng;

use super::{softmax_cross_entropy, Activation, Mlp, MlpForward, Parameterized, TnnForward, TnnModel};
use crate::error::{Result, TbnnError};
use crate::filtering::ShiftOperator;

/// One labelled point cloud: its own shift operator and input signal.
#[derive(Clone, Debug)]
pub struct GraphSample {
    pub shift: ShiftOperator,
    pub input: DMatrix<f64>,
    pub label: usize,
}

/// DD-TNN feature extractor, per-feature pooling of `X` and `X∘X` over all rows, then an MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphClassifier {
    pub tnn: TnnModel,
    pub readout: Mlp,
}

struct BatchCache {
    tnn: Vec<TnnForward>,
    mlp: MlpForward,
}

fn pool(x: &DMatrix<f64>) -> Vec<f64> {
    let r = x.nrows() as f64;
    let f = x.ncols();
    let mut out = vec![0.0; 2 * f];
    for c in 0..f {
        let col = x.column(c);
        out[c] = col.sum() / r;
        out[f + c] = col.iter().map(|v| v * v).sum::<f64>() / r;
    }
    out
}

impl GraphClassifier {
    pub fn new(tnn: TnnModel, readout: Mlp) -> Result<Self> {
        if readout.input_width() != 2 * tnn.output_width() {
            return Err(TbnnError::DimensionMismatch {
                context: "readout input vs pooled features",
                expected: 2 * tnn.output_width(),
                found: readout.input_width(),
            });
        }
        Ok(Self { tnn, readout })
    }

    pub fn random<R: Rng>(
        rng: &mut R,
        tnn_widths: &[usize],
        k: usize,
        activation: Activation,
        hidden: usize,
        classes: usize,
    ) -> Result<Self> {
        let tnn = TnnModel::random(rng, tnn_widths, k, activation, activation)?;
        let f = tnn.output_width();
        let readout = Mlp::random(rng, &[2 * f, hidden, classes], Activation::Relu, Activation::Identity)?;
        Self::new(tnn, readout)
    }

    fn run(&self, samples: &[GraphSample]) -> Result<BatchCache> {
        let f = self.tnn.output_width();
        let mut pooled = DMatrix::zeros(samples.len(), 2 * f);
        let mut tnn = Vec::with_capacity(samples.len());
        for (s, sample) in samples.iter().enumerate() {
            let cache = self.tnn.forward(&sample.shift, &sample.input)?;
            for (c, v) in pool(cache.output()).into_iter().enumerate() {
                pooled[(s, c)] = v;
            }
            tnn.push(cache);
        }
        Ok(BatchCache {
            tnn,
            mlp: self.readout.forward(&pooled)?,
        })
    }

    pub fn logits(&self, samples: &[GraphSample]) -> Result<DMatrix<f64>> {
        Ok(self.run(samples)?.mlp.output().clone())
    }

    pub fn predict(&self, samples: &[GraphSample]) -> Result<Vec<usize>> {
        let logits = self.logits(samples)?;
        Ok(logits.row_iter().map(|r| r.transpose().argmax().0).collect())
    }

    pub fn accuracy(&self, samples: &[GraphSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(TbnnError::invalid("no samples to score"));
        }
        let hits = self
            .predict(samples)?
            .iter()
            .zip(samples)
            .filter(|(p, s)| **p == s.label)
            .count();
        Ok(hits as f64 / samples.len() as f64)
    }

    /// Mean cross-entropy and its gradients in parameter order.
    pub fn loss_and_gradients(&self, samples: &[GraphSample]) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let cache = self.run(samples)?;
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let (loss, d_logits) = softmax_cross_entropy(cache.mlp.output(), &labels)?;
        let (mlp_grads, d_pooled) = self.readout.backward(&cache.mlp, &d_logits);
        let f = self.tnn.output_width();
        let mut tnn_grads = self.tnn.zero_gradients();
        for (s, sample) in samples.iter().enumerate() {
            let x = cache.tnn[s].output();
            let r = x.nrows() as f64;
            let dx = DMatrix::from_fn(x.nrows(), f, |row, c| {
                d_pooled[(s, c)] / r + 2.0 * x[(row, c)] * d_pooled[(s, f + c)] / r
            });
            let (g, _) = self.tnn.backward(&sample.shift, &cache.tnn[s], &dx);
            super::add_into(&mut tnn_grads, &g);
        }
        tnn_grads.extend(mlp_grads);
        Ok((loss, tnn_grads))
    }
}

impl Parameterized for GraphClassifier {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        let mut p = self.tnn.parameters();
        p.extend(self.readout.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut p = self.tnn.parameters_mut();
        p.extend(self.readout.parameters_mut());
        p
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut n = self.tnn.parameter_names();
        n.extend(self.readout.parameter_names());
        n
    }
}
