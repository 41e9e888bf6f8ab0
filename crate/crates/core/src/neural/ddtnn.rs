use nalgebra::DMatrix;
use rand::Rng;

use super::{uniform_matrix, Activation, Parameterized};
use crate::error::{Result, TbnnError};
use crate::filtering::ShiftOperator;

/// One layer `X' = σ(Σ_k E^k X H_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TnnLayer {
    /// `K` matrices of shape `F_in × F_out`.
    pub taps: Vec<DMatrix<f64>>,
    pub activation: Activation,
}

impl TnnLayer {
    pub fn new<R: Rng>(rng: &mut R, f_in: usize, f_out: usize, k: usize, activation: Activation) -> Self {
        let bound = (1.0 / (f_in * k) as f64).sqrt();
        Self {
            taps: (0..k).map(|_| uniform_matrix(rng, f_in, f_out, bound)).collect(),
            activation,
        }
    }

    pub fn order(&self) -> usize {
        self.taps.len()
    }

    pub fn f_in(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn f_out(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// Stack of DD-TNN layers. The same type drives the manifold (scalar-shift) baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct TnnModel {
    pub layers: Vec<TnnLayer>,
}

/// Cached activations for backpropagation.
#[derive(Clone, Debug)]
pub struct TnnForward {
    /// `outputs[l]` is `X_l`; `outputs[0]` is the input.
    pub outputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
    /// `powers[l][k] = E^k X_l`.
    powers: Vec<Vec<DMatrix<f64>>>,
}

impl TnnForward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("at least the input")
    }
}

impl TnnModel {
    pub fn new(layers: Vec<TnnLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(TbnnError::invalid("a network needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.taps.is_empty() {
                return Err(TbnnError::invalid(format!("layer {l} has no taps")));
            }
            let shape = layer.taps[0].shape();
            if layer.taps.iter().any(|t| t.shape() != shape) {
                return Err(TbnnError::invalid(format!("layer {l} taps differ in shape")));
            }
            if layer.taps.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(TbnnError::invalid(format!("layer {l} has non-finite taps")));
            }
            if l > 0 && layers[l - 1].f_out() != layer.f_in() {
                return Err(TbnnError::DimensionMismatch {
                    context: "adjacent layer widths",
                    expected: layers[l - 1].f_out(),
                    found: layer.f_in(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// `widths = [F_0, F_1, ..., F_L]`; hidden layers use `hidden`, the last uses `output`.
    pub fn random<R: Rng>(
        rng: &mut R,
        widths: &[usize],
        k: usize,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) || k == 0 {
            return Err(TbnnError::invalid("need at least two positive widths and K >= 1"));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| TnnLayer::new(rng, w[0], w[1], k, if l == last { output } else { hidden }))
            .collect();
        Self::new(layers)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].f_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").f_out()
    }

    pub fn forward(&self, shift: &ShiftOperator, x0: &DMatrix<f64>) -> Result<TnnForward> {
        if x0.ncols() != self.input_width() {
            return Err(TbnnError::DimensionMismatch {
                context: "input features",
                expected: self.input_width(),
                found: x0.ncols(),
            });
        }
        if x0.nrows() != shift.dim() {
            return Err(TbnnError::DimensionMismatch {
                context: "input rows vs shift operator",
                expected: shift.dim(),
                found: x0.nrows(),
            });
        }
        let mut outputs = vec![x0.clone()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut powers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = outputs.last().expect("nonempty");
            let mut pk = Vec::with_capacity(layer.order());
            pk.push(x.clone());
            for k in 1..layer.order() {
                let next = shift.apply(&pk[k - 1]);
                pk.push(next);
            }
            let mut z = DMatrix::zeros(x.nrows(), layer.f_out());
            for (p, h) in pk.iter().zip(&layer.taps) {
                z.gemm(1.0, p, h, 1.0);
            }
            outputs.push(layer.activation.apply(&z));
            pre_activations.push(z);
            powers.push(pk);
        }
        Ok(TnnForward {
            outputs,
            pre_activations,
            powers,
        })
    }

    pub fn predict(&self, shift: &ShiftOperator, x0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(shift, x0)?.outputs.pop().expect("nonempty"))
    }

    /// Gradients w.r.t. every tap (in [`Parameterized`] order) and w.r.t. the input.
    pub fn backward(
        &self,
        shift: &ShiftOperator,
        cache: &TnnForward,
        d_output: &DMatrix<f64>,
    ) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let mut grads: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut upstream = d_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer
                .activation
                .backprop(&cache.pre_activations[l], &cache.outputs[l + 1], &upstream);
            grads[l] = cache.powers[l].iter().map(|p| p.transpose() * &dz).collect();
            let dp: Vec<DMatrix<f64>> = layer.taps.iter().map(|h| &dz * h.transpose()).collect();
            // Σ_k (Eᵀ)^k dP_k by Horner
            let mut acc = dp.last().expect("K >= 1").clone();
            for d in dp.iter().rev().skip(1) {
                acc = shift.apply_transpose(&acc);
                acc += d;
            }
            upstream = acc;
        }
        (grads.into_iter().flatten().collect(), upstream)
    }

    /// Per-layer taps of a single-feature layer as scalar FIR coefficients.
    pub fn scalar_taps(&self, layer: usize) -> Option<Vec<f64>> {
        let l = self.layers.get(layer)?;
        (l.f_in() == 1 && l.f_out() == 1).then(|| l.taps.iter().map(|h| h[(0, 0)]).collect())
    }
}

impl Parameterized for TnnModel {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        self.layers.iter().flat_map(|l| l.taps.iter()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.layers.iter_mut().flat_map(|l| l.taps.iter_mut()).collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| (0..layer.order()).map(move |k| format!("H[{l}][{k}]")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_shift(rng: &mut ChaCha8Rng, dim: usize) -> ShiftOperator {
        ShiftOperator::from_matrix(uniform_matrix(rng, dim, dim, 0.4), crate::ExpMethod::Pade).unwrap()
    }

    #[test]
    fn zero_taps_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = TnnModel::random(&mut rng, &[2, 3, 1], 2, Activation::Tanh, Activation::Tanh).unwrap();
        for p in model.parameters_mut() {
            p.fill(0.0);
        }
        let shift = random_shift(&mut rng, 6);
        let out = model.predict(&shift, &uniform_matrix(&mut rng, 6, 2, 1.0)).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = TnnLayer {
            taps: vec![DMatrix::identity(3, 3)],
            activation: Activation::Identity,
        };
        let model = TnnModel::new(vec![layer]).unwrap();
        let shift = random_shift(&mut rng, 10);
        let x = uniform_matrix(&mut rng, 10, 3, 1.0);
        assert_eq!(model.predict(&shift, &x).unwrap(), x);
    }

    #[test]
    fn matches_naive_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d, f) = (5, 2, 3);
        let model = TnnModel::random(&mut rng, &[f, 4, 2], 2, Activation::Tanh, Activation::Identity).unwrap();
        let shift = random_shift(&mut rng, n * d);
        let x0 = uniform_matrix(&mut rng, n * d, f, 1.0);
        let fast = model.predict(&shift, &x0).unwrap();

        // per output feature u: σ(Σ_q Σ_k h_k^{uq} E^k x^q), computed with explicit loops
        let e = shift.matrix();
        let mut x = x0.clone();
        for layer in &model.layers {
            let rows = x.nrows();
            let mut out = DMatrix::zeros(rows, layer.f_out());
            for u in 0..layer.f_out() {
                for q in 0..layer.f_in() {
                    let mut power: Vec<f64> = x.column(q).iter().copied().collect();
                    for (k, h) in layer.taps.iter().enumerate() {
                        if k > 0 {
                            let mut next = vec![0.0; rows];
                            for r in 0..rows {
                                for c in 0..rows {
                                    next[r] += e[(r, c)] * power[c];
                                }
                            }
                            power = next;
                        }
                        for r in 0..rows {
                            out[(r, u)] += h[(q, u)] * power[r];
                        }
                    }
                }
            }
            x = layer.activation.apply(&out);
        }
        assert!(crate::linalg::max_abs_diff(&fast, &x) < 1e-12);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = TnnModel::random(&mut rng, &[2, 1], 1, Activation::Tanh, Activation::Tanh).unwrap();
        let shift = random_shift(&mut rng, 4);
        assert!(model.forward(&shift, &DMatrix::zeros(4, 3)).is_err());
        let a = TnnLayer::new(&mut rng, 2, 3, 1, Activation::Tanh);
        let b = TnnLayer::new(&mut rng, 2, 1, 1, Activation::Tanh);
        assert!(TnnModel::new(vec![a, b]).is_err());
    }

    #[test]
    fn single_tap_layer_equals_fir_helper() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shift = random_shift(&mut rng, 6);
        let taps = [0.3, -1.2, 0.7];
        let layer = TnnLayer {
            taps: taps.iter().map(|h| DMatrix::from_element(1, 1, *h)).collect(),
            activation: Activation::Identity,
        };
        let model = TnnModel::new(vec![layer]).unwrap();
        let x = uniform_matrix(&mut rng, 6, 1, 1.0);
        let diff = crate::linalg::max_abs_diff(&model.predict(&shift, &x).unwrap(), &crate::filtering::apply_fir(shift.matrix(), &taps, &x));
        assert!(diff < 1e-14);
        assert_eq!(model.scalar_taps(0).unwrap(), taps.to_vec());
    }
}
