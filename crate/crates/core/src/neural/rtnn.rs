use nalgebra::DMatrix;
use rand::Rng;

use super::{uniform_matrix, Activation, Parameterized};
use crate::error::{Result, TbnnError};
use crate::filtering::{apply_fir, ShiftOperator};

/// `z_{l,t} = σ(Σ_k h_k E^k z_{l−1,t} + Σ_k w_k E^k z_{l,t−1})` with scalar taps
/// shared across feature columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RtnnLayer {
    /// `1 × K` input-filter taps.
    pub input_taps: DMatrix<f64>,
    /// `1 × K` state-filter taps.
    pub state_taps: DMatrix<f64>,
    pub activation: Activation,
}

impl RtnnLayer {
    pub fn new<R: Rng>(rng: &mut R, k: usize, activation: Activation) -> Self {
        let bound = (1.0 / k as f64).sqrt();
        Self {
            input_taps: uniform_matrix(rng, 1, k, bound),
            state_taps: uniform_matrix(rng, 1, k, bound),
            activation,
        }
    }

    pub fn order(&self) -> usize {
        self.input_taps.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RtnnModel {
    pub layers: Vec<RtnnLayer>,
}

#[derive(Clone, Debug)]
pub struct RtnnForward {
    /// `states[l][t]`: `l = 0` holds the inputs; `t = 0` is the zero initial state.
    pub states: Vec<Vec<DMatrix<f64>>>,
    pre_activations: Vec<Vec<DMatrix<f64>>>,
    input_powers: Vec<Vec<Vec<DMatrix<f64>>>>,
    state_powers: Vec<Vec<Vec<DMatrix<f64>>>>,
}

impl RtnnForward {
    /// `z_{L,1..T}`.
    pub fn outputs(&self) -> &[DMatrix<f64>] {
        &self.states.last().expect("nonempty")[1..]
    }
}

fn powers(shift: &ShiftOperator, x: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(k);
    out.push(x.clone());
    for i in 1..k {
        let next = shift.apply(&out[i - 1]);
        out.push(next);
    }
    out
}

fn tap_row(m: &DMatrix<f64>) -> Vec<f64> {
    m.row(0).iter().copied().collect()
}

impl RtnnModel {
    pub fn new(layers: Vec<RtnnLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(TbnnError::invalid("a recurrent network needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            let k = layer.order();
            if k == 0 || layer.input_taps.nrows() != 1 || layer.state_taps.shape() != (1, k) {
                return Err(TbnnError::invalid(format!("layer {l} taps must both be 1 × K with K >= 1")));
            }
            if layer.input_taps.iter().chain(layer.state_taps.iter()).any(|v| !v.is_finite()) {
                return Err(TbnnError::invalid(format!("layer {l} has non-finite taps")));
            }
        }
        Ok(Self { layers })
    }

    pub fn random<R: Rng>(rng: &mut R, depth: usize, k: usize, hidden: Activation, output: Activation) -> Result<Self> {
        if depth == 0 || k == 0 {
            return Err(TbnnError::invalid("need L >= 1 and K >= 1"));
        }
        Self::new(
            (0..depth)
                .map(|l| RtnnLayer::new(rng, k, if l + 1 == depth { output } else { hidden }))
                .collect(),
        )
    }

    pub fn forward(&self, shift: &ShiftOperator, sequence: &[DMatrix<f64>]) -> Result<RtnnForward> {
        let first = sequence
            .first()
            .ok_or_else(|| TbnnError::invalid("input sequence is empty"))?;
        let shape = first.shape();
        if shape.0 != shift.dim() {
            return Err(TbnnError::DimensionMismatch {
                context: "sequence rows vs shift operator",
                expected: shift.dim(),
                found: shape.0,
            });
        }
        if sequence.iter().any(|s| s.shape() != shape) {
            return Err(TbnnError::invalid("sequence elements differ in shape"));
        }
        let t_len = sequence.len();
        let zero = DMatrix::zeros(shape.0, shape.1);
        let mut states = Vec::with_capacity(self.layers.len() + 1);
        let mut inputs = vec![zero.clone()];
        inputs.extend(sequence.iter().cloned());
        states.push(inputs);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut input_powers = Vec::with_capacity(self.layers.len());
        let mut state_powers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let k = layer.order();
            let h = tap_row(&layer.input_taps);
            let w = tap_row(&layer.state_taps);
            let mut z = vec![zero.clone()];
            let mut pre = vec![zero.clone()];
            let mut ip = vec![Vec::new()];
            let mut sp = vec![Vec::new()];
            for t in 1..=t_len {
                let pin = powers(shift, &states[l][t], k);
                let pst = powers(shift, &z[t - 1], k);
                let mut a = DMatrix::zeros(shape.0, shape.1);
                for i in 0..k {
                    a += &pin[i] * h[i];
                    a += &pst[i] * w[i];
                }
                z.push(layer.activation.apply(&a));
                pre.push(a);
                ip.push(pin);
                sp.push(pst);
            }
            states.push(z);
            pre_activations.push(pre);
            input_powers.push(ip);
            state_powers.push(sp);
        }
        Ok(RtnnForward {
            states,
            pre_activations,
            input_powers,
            state_powers,
        })
    }

    pub fn predict(&self, shift: &ShiftOperator, sequence: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.forward(shift, sequence)?.outputs().to_vec())
    }

    /// Backpropagation through time. `d_outputs[t]` is `∂L/∂z_{L,t+1}`.
    pub fn backward(&self, shift: &ShiftOperator, cache: &RtnnForward, d_outputs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let t_len = d_outputs.len();
        let shape = d_outputs[0].shape();
        let mut grads = vec![DMatrix::zeros(0, 0); 2 * self.layers.len()];
        let mut external: Vec<DMatrix<f64>> = d_outputs.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let k = layer.order();
            let h = tap_row(&layer.input_taps);
            let w = tap_row(&layer.state_taps);
            let mut dh = DMatrix::zeros(1, k);
            let mut dw = DMatrix::zeros(1, k);
            let mut carry = DMatrix::zeros(shape.0, shape.1);
            let mut below = vec![DMatrix::zeros(shape.0, shape.1); t_len];
            for t in (1..=t_len).rev() {
                let g = &external[t - 1] + &carry;
                let da = layer.activation.backprop(
                    &cache.pre_activations[l][t],
                    &cache.states[l + 1][t],
                    &g,
                );
                for i in 0..k {
                    dh[(0, i)] += cache.input_powers[l][t][i].dot(&da);
                    dw[(0, i)] += cache.state_powers[l][t][i].dot(&da);
                }
                below[t - 1] = apply_fir(&shift.matrix().transpose(), &h, &da);
                carry = apply_fir(&shift.matrix().transpose(), &w, &da);
            }
            grads[2 * l] = dh;
            grads[2 * l + 1] = dw;
            external = below;
        }
        grads
    }
}

impl Parameterized for RtnnModel {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.input_taps, &l.state_taps])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.input_taps, &mut l.state_taps])
            .collect()
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("h[{l}]"), format!("w[{l}]")])
            .collect()
    }
}
