//! Eigendecomposition of the sheaf Laplacian, frequency representations,
//! and FIR frequency responses `ĥ(λ) = Σ_k h_k e^{−kλ}`.
//!
//! `Δ_n` is similar to a symmetric matrix through `D^{1/2}`, so its eigenvector
//! fields are orthonormal in the node-weighted product
//! `⟨f, g⟩_ω = (1/n) Σ_i ω_i f(x_i)·g(x_i)` with `ω_i = ndeg(i) / mean(ndeg)`.
//! On near-uniform samples `ω ≈ 1` and this is the plain sheaf inner product;
//! using the weighted form keeps analysis/synthesis and pointwise filtering exact.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TbnnError};
use crate::linalg::sorted_symmetric_eigen;
use crate::sheaf::{BundleSignal, SheafLaplacian};

const CLIP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// `λ_i ≥ 0` (up to the positivity warning), nondecreasing, with `Δ_n φ_i = −λ_i φ_i`.
    eigenvalues: Vec<f64>,
    /// Columns are eigenvector fields `φ_i`.
    modes: DMatrix<f64>,
    /// Per-row metric weights (node weight repeated `d̂` times).
    row_weights: DVector<f64>,
    n: usize,
    d_hat: usize,
}

pub fn eigendecompose(lap: &SheafLaplacian, count: Option<usize>) -> Result<SpectralDecomposition> {
    let sym = lap.symmetric_form();
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(TbnnError::invalid("Laplacian has non-finite entries"));
    }
    let n = lap.node_count();
    let d = lap.d_hat();
    let (mu, psi) = sorted_symmetric_eigen(sym)?;
    let dim = mu.len();
    let keep = count.unwrap_or(dim).min(dim);
    // λ = −μ, ascending λ means descending μ
    let mut eigenvalues = Vec::with_capacity(keep);
    let mut cols = Vec::with_capacity(keep);
    let node_w = lap.node_weights();
    let row_weights = DVector::from_iterator(dim, (0..dim).map(|r| node_w[r / d]));
    let scale = (n as f64).sqrt();
    for k in 0..keep {
        let idx = dim - 1 - k;
        let mut lambda = -mu[idx];
        if lambda < 0.0 {
            if lambda > -CLIP_TOL {
                lambda = 0.0;
            } else {
                log::warn!("Laplacian eigenvalue {:.3e} above +{CLIP_TOL:e}", -lambda);
            }
        }
        eigenvalues.push(lambda);
        let mut phi = psi.column(idx).into_owned();
        for r in 0..dim {
            phi[r] *= scale / row_weights[r].sqrt();
        }
        cols.push(phi);
    }
    let modes = if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(SpectralDecomposition {
        eigenvalues,
        modes,
        row_weights,
        n,
        d_hat: d,
    })
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn row_weights(&self) -> &DVector<f64> {
        &self.row_weights
    }

    pub fn mode(&self, i: usize) -> BundleSignal {
        BundleSignal::from_vector(self.modes.column(i).into_owned(), self.n, self.d_hat).expect("mode layout")
    }

    /// `⟨f, g⟩_ω`, the metric the modes are orthonormal in.
    pub fn weighted_inner_product(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        f.iter()
            .zip(g.iter())
            .zip(self.row_weights.iter())
            .map(|((a, b), w)| a * b * w)
            .sum::<f64>()
            / self.n as f64
    }

    /// `(1/n) Φᵀ W f` for a single-feature signal.
    pub fn analyze(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        if f.len() != self.modes.nrows() {
            return Err(TbnnError::DimensionMismatch {
                context: "signal vs eigenbasis",
                expected: self.modes.nrows(),
                found: f.len(),
            });
        }
        let weighted = f.component_mul(&self.row_weights);
        Ok(self.modes.transpose() * weighted / self.n as f64)
    }

    /// `Σ_i c_i φ_i`.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Result<BundleSignal> {
        if coeffs.len() != self.len() {
            return Err(TbnnError::DimensionMismatch {
                context: "coefficients vs eigenbasis",
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        BundleSignal::from_vector(&self.modes * coeffs, self.n, self.d_hat)
    }

    /// Gram matrix of the modes in the weighted metric (identity for a complete decomposition).
    pub fn gram(&self) -> DMatrix<f64> {
        let weighted = DMatrix::from_fn(self.modes.nrows(), self.modes.ncols(), |r, c| {
            self.modes[(r, c)] * self.row_weights[r]
        });
        self.modes.transpose() * weighted / self.n as f64
    }

    /// `Σ_i ĝ(λ_i) φ_i φ_i^* ` as a dense operator, where `φ_i^*` is the dual functional.
    pub fn spectral_operator(&self, response: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let dim = self.modes.nrows();
        let mut scaled = self.modes.clone();
        for (k, lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(response(*lambda));
        }
        let dual = DMatrix::from_fn(dim, self.len(), |r, c| self.modes[(r, c)] * self.row_weights[r]);
        scaled * dual.transpose() / self.n as f64
    }
}

/// `[f̂]_i = ⟨f, φ_i⟩_ω`.
pub fn frequency_representation(f: &BundleSignal, dec: &SpectralDecomposition) -> Result<DVector<f64>> {
    if f.features() != 1 {
        return Err(TbnnError::invalid("frequency representation expects a single-feature signal"));
    }
    dec.analyze(&f.values().column(0).into_owned())
}

/// FIR taps `h_0..h_{K−1}` acting through the shift `e^{Δ_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    taps: Vec<f64>,
}

impl FrequencyResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(TbnnError::invalid("a filter needs at least one tap"));
        }
        if taps.iter().any(|h| !h.is_finite()) {
            return Err(TbnnError::invalid("filter taps must be finite"));
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let z = (-lambda).exp();
        self.taps.iter().rev().fold(0.0, |acc, h| acc * z + h)
    }
}

pub fn evaluate_response(resp: &FrequencyResponse, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().map(|&l| resp.eval(l)).collect()
}

/// Finite-spectrum summaries of a frequency response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseProfile {
    /// `max |ĥ(λ_i)|`; the filter is non-amplifying iff this is ≤ 1.
    pub max_abs: f64,
    /// Largest slope between consecutive (sorted) eigenvalues.
    pub lipschitz_est: f64,
    /// `max |ĥ(λ)|·λ²` over the top decile of the spectrum.
    pub lowpass_score: f64,
    /// Whether `|ĥ(λ)|·λ²` is flat or decaying across the top decile.
    pub lowpass_decaying: bool,
}

impl ResponseProfile {
    pub fn non_amplifying(&self) -> bool {
        self.max_abs <= 1.0
    }
}

pub fn classify_response(resp: &FrequencyResponse, lambdas: &[f64]) -> Result<ResponseProfile> {
    let values = evaluate_response(resp, lambdas);
    profile_samples(lambdas, &values)
}

/// Same summaries for a response given directly as samples `(λ_i, ĥ(λ_i))`.
pub fn profile_samples(lambdas: &[f64], values: &[f64]) -> Result<ResponseProfile> {
    if lambdas.len() != values.len() {
        return Err(TbnnError::DimensionMismatch {
            context: "response samples",
            expected: lambdas.len(),
            found: values.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = lambdas.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let distinct = pairs.windows(2).filter(|w| w[1].0 > w[0].0).count() + usize::from(!pairs.is_empty());
    if distinct < 2 {
        return Err(TbnnError::invalid("need at least two distinct eigenvalues"));
    }
    let max_abs = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let lipschitz_est = pairs
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0))
        .fold(0.0, f64::max);
    let m = pairs.len();
    let top = m.div_ceil(10).max(1);
    let tail: Vec<f64> = pairs[m - top..].iter().map(|(l, h)| h.abs() * l * l).collect();
    let lowpass_score = tail.iter().copied().fold(0.0, f64::max);
    let lowpass_decaying = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    Ok(ResponseProfile {
        max_abs,
        lipschitz_est,
        lowpass_score,
        lowpass_decaying,
    })
}
