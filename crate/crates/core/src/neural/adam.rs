use nalgebra::DMatrix;

use crate::error::{Result, TbnnError};

/// Adam with bias correction. Moments are allocated lazily on the first step.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `names` is used only for error messages.
    pub fn step(&mut self, params: &mut [&mut DMatrix<f64>], grads: &[DMatrix<f64>], names: &[String]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(TbnnError::DimensionMismatch {
                context: "parameter vs gradient count",
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TbnnError::invalid(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                let name = names.get(idx).cloned().unwrap_or_else(|| format!("#{idx}"));
                return Err(TbnnError::NonFiniteGradient(name));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| DMatrix::zeros(g.nrows(), g.ncols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for idx in 0..g.len() {
                let gi = g[idx];
                m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * gi;
                v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[idx] / c1;
                let vhat = v[idx] / c2;
                p[idx] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(0.1);
        let mut p = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 3.0]);
        let before = p.clone();
        adam.step(&mut [&mut p], &[DMatrix::zeros(1, 3)], &[]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let lr = 0.01;
        let mut adam = AdamState::new(lr);
        let mut p = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        adam.step(&mut [&mut p], &[DMatrix::from_row_slice(1, 2, &[3.0, -0.5])], &[]).unwrap();
        assert!((p[0] + lr).abs() < 1e-9);
        assert!((p[1] - lr).abs() < 1e-9);
    }

    #[test]
    fn identical_gradients_do_not_grow_the_step() {
        let mut adam = AdamState::new(0.5);
        let mut p = scalar(0.0);
        adam.step(&mut [&mut p], &[scalar(2.0)], &[]).unwrap();
        let first = -p[0];
        let before = p[0];
        adam.step(&mut [&mut p], &[scalar(2.0)], &[]).unwrap();
        let second = before - p[0];
        assert!(second <= first + 1e-15);
        assert!((second - first).abs() < 1e-12);
    }

    #[test]
    fn repeated_gradient_shrinks_step_after_decay() {
        // scalar trace with g = 1 then g = 0.1: m̂/√v̂ drops below 1
        let mut adam = AdamState::new(1.0);
        let mut p = scalar(0.0);
        adam.step(&mut [&mut p], &[scalar(1.0)], &[]).unwrap();
        let first = -p[0];
        let before = p[0];
        adam.step(&mut [&mut p], &[scalar(0.1)], &[]).unwrap();
        let second = before - p[0];
        assert!(second > 0.0 && second < first);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut adam = AdamState::new(0.1);
        let mut p = scalar(0.0);
        let err = adam
            .step(&mut [&mut p], &[scalar(f64::NAN)], &["H[0][1]".to_string()])
            .unwrap_err();
        assert!(err.to_string().contains("H[0][1]"));
    }
}
