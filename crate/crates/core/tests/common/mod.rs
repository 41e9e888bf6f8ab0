#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbnn_core::geometry::{build_geometric_graph, local_pca, Edge, PcaKernel, WeightedGraph};
use tbnn_core::neural::Parameterized;
use tbnn_core::sheaf::{assemble_sheaf_laplacian, SheafLaplacian, SheafStructure};
use tbnn_core::{data, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric graph on `n` nodes with positive weights and unit self weights.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, eps_n: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < 0.4 {
                edges.push(Edge {
                    i,
                    j,
                    weight: rng.random_range(0.05..1.0),
                });
            }
        }
    }
    WeightedGraph::from_edges(n, edges, vec![1.0; n], eps_n).unwrap()
}

/// Scalar operator `ε⁻¹(D⁻¹ S − I)` computed from the dense weight matrix alone.
pub fn scalar_operator_oracle(w: &DMatrix<f64>, eps_n: f64) -> DMatrix<f64> {
    let n = w.nrows();
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (deg[i] * deg[j]));
    let d: Vec<f64> = (0..n).map(|i| s.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| (s[(i, j)] / d[i] - if i == j { 1.0 } else { 0.0 }) / eps_n)
}

/// `A ⊗ I_d` written out entry by entry.
pub fn kron_eye(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows() * d, a.ncols() * d, |r, c| if r % d == c % d { a[(r / d, c / d)] } else { 0.0 })
}

pub fn sheaf_of(cloud: &PointCloud, eps_n: f64, eps_pca: f64, d_hat: usize) -> (SheafStructure, SheafLaplacian) {
    let graph = build_geometric_graph(cloud, eps_n).unwrap();
    let basis = local_pca(cloud, eps_pca, PcaKernel::Epanechnikov).unwrap().basis(d_hat).unwrap();
    assemble_sheaf_laplacian(graph, basis).unwrap()
}

/// Ring torus (a = 0.1, b = 0.3) sheaf with the experiment scales.
pub fn torus_sheaf(expected_n: f64, seed: u64, eps_n: f64) -> (PointCloud, SheafStructure, SheafLaplacian) {
    let cloud = data::sample_torus(expected_n, 0.1, 0.3, seed).unwrap();
    let (s, l) = sheaf_of(&cloud, eps_n, 0.8, 2);
    (cloud, s, l)
}

/// Central differences of `loss` with respect to every parameter entry.
pub fn numeric_gradients<M, F>(model: &M, h: f64, loss: F) -> Vec<DMatrix<f64>>
where
    M: Parameterized + Clone,
    F: Fn(&M) -> f64,
{
    let shapes: Vec<(usize, usize)> = model.parameters().iter().map(|p| (p.nrows(), p.ncols())).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (pi, &(r, c)) in shapes.iter().enumerate() {
        let mut g = DMatrix::zeros(r, c);
        for idx in 0..r * c {
            let mut plus = model.clone();
            plus.parameters_mut()[pi].as_mut_slice()[idx] += h;
            let mut minus = model.clone();
            minus.parameters_mut()[pi].as_mut_slice()[idx] -= h;
            g.as_mut_slice()[idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all parameter blocks together.
pub fn gradient_relative_error(analytic: &[DMatrix<f64>], numeric: &[DMatrix<f64>]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape());
        diff += (a - n).norm_squared();
        na += a.norm_squared();
        nn += n.norm_squared();
    }
    let scale = na.max(nn).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

use tbnn_core::filtering::{matrix_exponential, ShiftOperator};
use tbnn_core::neural::{masked_sse, Activation, RtnnModel, TnnModel};
use tbnn_core::ExpMethod;

pub const ACTIVATIONS: [Activation; 3] = [Activation::Tanh, Activation::Identity, Activation::Relu];

/// Shift operator of a small torus sheaf.
pub fn small_shift(seed: u64) -> (usize, ShiftOperator) {
    let (_, sheaf, lap) = torus_sheaf(30.0, seed, 0.5);
    (sheaf.node_count(), matrix_exponential(&lap, ExpMethod::Pade).unwrap())
}

pub struct GradientCase {
    pub label: String,
    pub relative_error: f64,
}

/// Analytic vs central-difference gradients over the `(model, K, L, σ)` grid.
pub fn gradient_suite(h: f64) -> Vec<GradientCase> {
    let (n, shift) = small_shift(7);
    let rows = shift.dim();
    let mut out = Vec::new();
    let mut r = rng(99);
    for k in 1..=3 {
        for depth in 1..=3 {
            for act in ACTIVATIONS {
                let mut widths = vec![2];
                widths.extend(std::iter::repeat_n(3, depth - 1));
                widths.push(2);
                let model = TnnModel::random(&mut r, &widths, k, act, act).unwrap();
                let x = random_matrix(&mut r, rows, 2);
                let y = random_matrix(&mut r, rows, 2);
                let loss = |m: &TnnModel| masked_sse(&m.predict(&shift, &x).unwrap(), &y, n, None).unwrap().0;
                let cache = model.forward(&shift, &x).unwrap();
                let (_, d) = masked_sse(cache.output(), &y, n, None).unwrap();
                let (analytic, _) = model.backward(&shift, &cache, &d);
                let numeric = numeric_gradients(&model, h, loss);
                out.push(GradientCase {
                    label: format!("ddtnn K={k} L={depth} {act:?}"),
                    relative_error: gradient_relative_error(&analytic, &numeric),
                });

                let rnn = RtnnModel::random(&mut r, depth, k, act, act).unwrap();
                let steps = 4;
                let xs: Vec<_> = (0..steps).map(|_| random_matrix(&mut r, rows, 2)).collect();
                let ys: Vec<_> = (0..steps).map(|_| random_matrix(&mut r, rows, 2)).collect();
                let seq_loss = |m: &RtnnModel| {
                    m.predict(&shift, &xs)
                        .unwrap()
                        .iter()
                        .zip(&ys)
                        .map(|(p, t)| masked_sse(p, t, n, None).unwrap().0)
                        .sum::<f64>()
                };
                let cache = rnn.forward(&shift, &xs).unwrap();
                let d_out: Vec<_> = cache
                    .outputs()
                    .iter()
                    .zip(&ys)
                    .map(|(p, t)| masked_sse(p, t, n, None).unwrap().1)
                    .collect();
                let analytic = rnn.backward(&shift, &cache, &d_out);
                let numeric = numeric_gradients(&rnn, h, seq_loss);
                out.push(GradientCase {
                    label: format!("rtnn K={k} L={depth} {act:?}"),
                    relative_error: gradient_relative_error(&analytic, &numeric),
                });
            }
        }
    }
    out
}
