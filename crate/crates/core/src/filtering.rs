//! The shift operator `E = exp(Δ_n)` and FIR filtering `g = Σ_k h_k E^k f`.

use nalgebra::DMatrix;

use crate::error::{Result, TbnnError};
use crate::geometry::WeightedGraph;
use crate::sheaf::{BundleSignal, SheafLaplacian};
use crate::spectral::{eigendecompose, FrequencyResponse};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpMethod {
    Pade,
    Eigen,
}

impl std::str::FromStr for ExpMethod {
    type Err = TbnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pade" => Ok(Self::Pade),
            "eigen" => Ok(Self::Eigen),
            other => Err(TbnnError::Config(format!("unknown exponential method `{other}`"))),
        }
    }
}

/// Dense `exp(Δ_n)`, computed once per sheaf and shared by every layer.
#[derive(Clone, Debug)]
pub struct ShiftOperator {
    matrix: DMatrix<f64>,
    transpose: DMatrix<f64>,
    method: ExpMethod,
}

impl ShiftOperator {
    pub fn from_matrix(matrix: DMatrix<f64>, method: ExpMethod) -> Result<Self> {
        if !matrix.is_square() {
            return Err(TbnnError::invalid("shift operator must be square"));
        }
        Ok(Self {
            transpose: matrix.transpose(),
            matrix,
            method,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim), ExpMethod::Pade).expect("square")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> ExpMethod {
        self.method
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.transpose * x
    }

    /// Largest eigenvalue magnitude (dense eigensolve; diagnostics only).
    pub fn spectral_radius(&self) -> f64 {
        self.matrix
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub fn matrix_exponential(lap: &SheafLaplacian, method: ExpMethod) -> Result<ShiftOperator> {
    let matrix = match method {
        ExpMethod::Pade => expm(lap.matrix())?,
        ExpMethod::Eigen => eigendecompose(lap, None)?.spectral_operator(|l| (-l).exp()),
    };
    ShiftOperator::from_matrix(matrix, method)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Scaling-and-squaring matrix exponential with diagonal Padé approximants up to order 13.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(TbnnError::invalid("expm needs a square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(TbnnError::invalid("expm input has non-finite entries"));
    }
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = one_norm(a);
    for (m, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let a2 = a * a;
            let mut u = &ident * coeffs[1];
            let mut v = &ident * coeffs[0];
            let mut power = ident.clone();
            for k in 1..=m / 2 {
                power = &power * &a2;
                u += &power * coeffs[2 * k + 1];
                v += &power * coeffs[2 * k];
            }
            let u = a * u;
            return solve_pade(u, v);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = &scaled * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = solve_pade(u, v)?;
    for _ in 0..s {
        r = &r * &r;
        if r.iter().any(|x| !x.is_finite()) {
            return Err(TbnnError::ExpOverflow);
        }
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    let lu = q.lu();
    let r = lu
        .solve(&p)
        .ok_or_else(|| TbnnError::invalid("singular Padé denominator"))?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(TbnnError::ExpOverflow);
    }
    Ok(r)
}

/// Horner accumulation of `Σ_k h_k E^k x` with `K − 1` products by `E`.
pub fn apply_fir(shift: &DMatrix<f64>, taps: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let (last, rest) = taps.split_last().expect("at least one tap");
    let mut acc = x * *last;
    for h in rest.iter().rev() {
        acc = shift * acc;
        acc += x * *h;
    }
    acc
}

pub fn apply_fir_filter(shift: &ShiftOperator, taps: &FrequencyResponse, f: &BundleSignal) -> Result<BundleSignal> {
    if f.values().nrows() != shift.dim() {
        return Err(TbnnError::DimensionMismatch {
            context: "signal vs shift operator",
            expected: shift.dim(),
            found: f.values().nrows(),
        });
    }
    let out = apply_fir(shift.matrix(), taps.taps(), f.values());
    BundleSignal::new(out, f.node_count(), f.d_hat())
}

/// Row-normalized scalar operator `ε_n⁻¹(D_s⁻¹S_s − I) = −L_n` on the same kernel weights.
pub fn scalar_diffusion_generator(graph: &WeightedGraph) -> DMatrix<f64> {
    let n = graph.node_count();
    let eps = graph.eps_n();
    let deg = graph.degrees();
    let ndeg = graph.normalized_degrees();
    let w = graph.weight_matrix();
    DMatrix::from_fn(n, n, |r, c| {
        let s = w[(r, c)] / (deg[r] * deg[c]);
        let identity = if r == c { 1.0 } else { 0.0 };
        (s / ndeg[r] - identity) / eps
    })
}

/// `exp(−L_n)`: the scalar (bundle-blind) shift used by manifold networks.
pub fn scalar_shift(graph: &WeightedGraph) -> Result<ShiftOperator> {
    ShiftOperator::from_matrix(expm(&scalar_diffusion_generator(graph))?, ExpMethod::Pade)
}

/// `g = Σ_k h_k exp(−L_n)^k f` for an `n × F` graph signal.
pub fn scalar_graph_filter(graph: &WeightedGraph, taps: &FrequencyResponse, signal: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if signal.nrows() != graph.node_count() {
        return Err(TbnnError::DimensionMismatch {
            context: "graph signal rows",
            expected: graph.node_count(),
            found: signal.nrows(),
        });
    }
    let shift = scalar_shift(graph)?;
    Ok(apply_fir(shift.matrix(), taps.taps(), signal))
}
