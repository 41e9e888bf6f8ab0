use nalgebra::DMatrix;
use rand::Rng;

use super::{uniform_matrix, Activation, Parameterized};
use crate::error::{Result, TbnnError};

/// Affine layer `y = σ(x W + b)` acting on rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `F_in × F_out`.
    pub weight: DMatrix<f64>,
    /// `1 × F_out`.
    pub bias: DMatrix<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, f_in: usize, f_out: usize, activation: Activation) -> Self {
        let bound = (1.0 / f_in as f64).sqrt();
        Self {
            weight: uniform_matrix(rng, f_in, f_out, bound),
            bias: DMatrix::zeros(1, f_out),
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug)]
pub struct MlpForward {
    pub outputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
}

impl MlpForward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("nonempty")
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(TbnnError::invalid("an MLP needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.shape() != (1, layer.weight.ncols()) {
                return Err(TbnnError::invalid(format!("layer {l} bias must be 1 × F_out")));
            }
            if l > 0 && layers[l - 1].weight.ncols() != layer.weight.nrows() {
                return Err(TbnnError::DimensionMismatch {
                    context: "adjacent MLP widths",
                    expected: layers[l - 1].weight.ncols(),
                    found: layer.weight.nrows(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn random<R: Rng>(rng: &mut R, widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(TbnnError::invalid("need at least two positive widths"));
        }
        let last = widths.len() - 2;
        Self::new(
            widths
                .windows(2)
                .enumerate()
                .map(|(l, w)| Dense::new(rng, w[0], w[1], if l == last { output } else { hidden }))
                .collect(),
        )
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<MlpForward> {
        if x.ncols() != self.input_width() {
            return Err(TbnnError::DimensionMismatch {
                context: "MLP input width",
                expected: self.input_width(),
                found: x.ncols(),
            });
        }
        let mut outputs = vec![x.clone()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = outputs.last().expect("nonempty") * &layer.weight;
            for mut row in z.row_iter_mut() {
                row += &layer.bias;
            }
            outputs.push(layer.activation.apply(&z));
            pre_activations.push(z);
        }
        Ok(MlpForward { outputs, pre_activations })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(x)?.outputs.pop().expect("nonempty"))
    }

    /// Parameter gradients (weight, bias per layer) and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpForward, d_output: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let mut grads = vec![DMatrix::zeros(0, 0); 2 * self.layers.len()];
        let mut upstream = d_output.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer
                .activation
                .backprop(&cache.pre_activations[l], &cache.outputs[l + 1], &upstream);
            grads[2 * l] = cache.outputs[l].transpose() * &dz;
            grads[2 * l + 1] = DMatrix::from_fn(1, dz.ncols(), |_, c| dz.column(c).sum());
            upstream = &dz * layer.weight.transpose();
        }
        (grads, upstream)
    }
}

impl Parameterized for Mlp {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("W[{l}]"), format!("b[{l}]")])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::random(&mut rng, &[3, 4, 2], Activation::Tanh, Activation::Tanh).unwrap();
        for p in mlp.parameters_mut() {
            p.fill(0.0);
        }
        let out = mlp.predict(&uniform_matrix(&mut rng, 5, 3, 1.0)).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passthrough() {
        let mlp = Mlp::new(vec![Dense {
            weight: DMatrix::identity(3, 3),
            bias: DMatrix::zeros(1, 3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        assert_eq!(mlp.predict(&x).unwrap(), x);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mlp = Mlp::random(&mut rng, &[3, 5, 2], Activation::Relu, Activation::Tanh).unwrap();
        for l in &mut mlp.layers {
            l.bias = uniform_matrix(&mut rng, 1, l.bias.ncols(), 0.5);
        }
        let x = uniform_matrix(&mut rng, 4, 3, 1.0);
        let fast = mlp.predict(&x).unwrap();
        for r in 0..x.nrows() {
            let mut h: Vec<f64> = x.row(r).iter().copied().collect();
            for layer in &mlp.layers {
                let mut next = vec![0.0; layer.weight.ncols()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut s = layer.bias[(0, o)];
                    for (i, hv) in h.iter().enumerate() {
                        s += hv * layer.weight[(i, o)];
                    }
                    *slot = match layer.activation {
                        Activation::Tanh => s.tanh(),
                        Activation::Relu => s.max(0.0),
                        Activation::Identity => s,
                    };
                }
                h = next;
            }
            for (c, v) in h.iter().enumerate() {
                assert!((fast[(r, c)] - v).abs() < 1e-12);
            }
        }
    }
}
