mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use tbnn_core::filtering::{apply_fir_filter, matrix_exponential};
use tbnn_core::geometry::{build_geometric_graph, kernel_weight, local_dimension, local_pca, PcaKernel};
use tbnn_core::linalg::{max_abs_diff, orthonormality_error};
use tbnn_core::sheaf::{align_transport, assemble_sheaf_laplacian, SheafStructure};
use tbnn_core::spectral::{classify_response, eigendecompose};
use tbnn_core::{BundleSignal, ExpMethod, FrequencyResponse, PointCloud};

fn cloud_strategy(max_n: usize, p: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, p), 4..=max_n)
        .prop_map(|rows| PointCloud::from_rows(&rows).unwrap())
}

fn frame(seed: u64, p: usize, d: usize) -> DMatrix<f64> {
    let m = random_matrix(&mut rng(seed), p, d);
    m.qr().q().columns(0, d).into_owned()
}

/// Sheaf on a random cloud with a PCA scale covering every neighborhood.
fn random_sheaf(cloud: &PointCloud, d: usize) -> (SheafStructure, tbnn_core::SheafLaplacian) {
    let graph = build_geometric_graph(cloud, 1.5).unwrap();
    let basis = local_pca(cloud, 16.0, PcaKernel::Epanechnikov).unwrap().basis(d).unwrap();
    assemble_sheaf_laplacian(graph, basis).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_weights_are_symmetric(cloud in cloud_strategy(25, 3), eps in 0.1f64..3.0) {
        let g = build_geometric_graph(&cloud, eps).unwrap();
        for i in 0..cloud.len() {
            for j in 0..cloud.len() {
                prop_assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    #[test]
    fn kernel_decreases_with_distance(eps in 0.01f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kernel_weight(lo * eps, eps) > kernel_weight(hi * eps, eps));
    }

    #[test]
    fn pca_frames_are_orthonormal(cloud in cloud_strategy(20, 4), d in 1usize..=3) {
        let basis = local_pca(&cloud, 16.0, PcaKernel::Epanechnikov).unwrap().basis(d).unwrap();
        prop_assert!(basis.max_orthonormality_error() < 1e-10);
    }

    #[test]
    fn dimension_estimate_ignores_scale(
        mut sv in prop::collection::vec(1e-6f64..10.0, 1..8),
        gamma in 0.05f64..=1.0,
        c in 1e-3f64..1e3,
    ) {
        sv.sort_by(|a, b| b.total_cmp(a));
        let scaled: Vec<f64> = sv.iter().map(|v| v * c).collect();
        prop_assert_eq!(local_dimension(&sv, gamma), local_dimension(&scaled, gamma));
    }

    #[test]
    fn transports_are_orthogonal(seed in any::<u64>(), p in 2usize..6, d in 1usize..3) {
        prop_assume!(d <= p);
        let t = align_transport(&frame(seed, p, d), &frame(seed ^ 1, p, d)).unwrap();
        prop_assert!(orthonormality_error(&t.matrix) < 1e-10);
    }

    #[test]
    fn sheaf_blocks_are_symmetric(cloud in cloud_strategy(14, 3), d in 1usize..=2) {
        let (sheaf, lap) = random_sheaf(&cloud, d);
        let (orth, sym) = sheaf.transport_errors();
        prop_assert!(orth < 1e-10 && sym < 1e-10);
        let s = sheaf.s_matrix();
        prop_assert!(max_abs_diff(&s, &s.transpose()) < 1e-12);
        let m = lap.symmetric_form();
        prop_assert!(max_abs_diff(m, &m.transpose()) < 1e-10);
        let dec = eigendecompose(&lap, None).unwrap();
        prop_assert!(dec.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(dec.eigenvalues()[0] >= 0.0);
    }

    #[test]
    fn filters_are_linear(
        cloud in cloud_strategy(12, 3),
        taps in prop::collection::vec(-2.0f64..2.0, 1..4),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let (sheaf, lap) = random_sheaf(&cloud, 2);
        let shift = matrix_exponential(&lap, ExpMethod::Pade).unwrap();
        let taps = FrequencyResponse::new(taps).unwrap();
        let n = sheaf.node_count();
        let mut r = rng(seed);
        let f = random_matrix(&mut r, lap.dim(), 1);
        let g = random_matrix(&mut r, lap.dim(), 1);
        let filt = |m: DMatrix<f64>| apply_fir_filter(&shift, &taps, &BundleSignal::new(m, n, 2).unwrap()).unwrap().into_values();
        let lhs = filt(&f * alpha + &g * beta);
        let rhs = filt(f) * alpha + filt(g) * beta;
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-12 * (1.0 + rhs.amax()));
    }

    #[test]
    fn response_profile_ignores_grid_order(
        taps in prop::collection::vec(-2.0f64..2.0, 1..5),
        mut lambdas in prop::collection::vec(0.0f64..10.0, 2..30),
        seed in any::<u64>(),
    ) {
        let taps = FrequencyResponse::new(taps).unwrap();
        prop_assume!(lambdas.iter().any(|l| *l != lambdas[0]));
        let a = classify_response(&taps, &lambdas).unwrap();
        lambdas.shuffle(&mut rng(seed));
        let b = classify_response(&taps, &lambdas).unwrap();
        prop_assert_eq!(a, b);
    }
}
