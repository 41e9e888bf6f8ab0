mod common;

use common::*;
use nalgebra::DMatrix;
use tbnn_core::filtering::ShiftOperator;
use tbnn_core::neural::{
    loss_masked_mse, masked_sse, Activation, GraphClassifier, GraphSample, Mlp, Parameterized, TnnLayer, TnnModel,
};

#[test]
fn tnn_and_rtnn_gradients_match_finite_differences() {
    let cases = gradient_suite(1e-5);
    assert_eq!(cases.len(), 54);
    for c in &cases {
        assert!(c.relative_error < 1e-5, "{}: {:.3e}", c.label, c.relative_error);
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut r = rng(3);
    for act in ACTIVATIONS {
        let model = Mlp::random(&mut r, &[3, 5, 4, 2], act, Activation::Identity).unwrap();
        let x = random_matrix(&mut r, 11, 3);
        let y = random_matrix(&mut r, 11, 2);
        let cache = model.forward(&x).unwrap();
        let (_, d) = masked_sse(cache.output(), &y, 11, None).unwrap();
        let (analytic, _) = model.backward(&cache, &d);
        let numeric = numeric_gradients(&model, 1e-5, |m| masked_sse(&m.predict(&x).unwrap(), &y, 11, None).unwrap().0);
        let err = gradient_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "{act:?}: {err:e}");
    }
}

#[test]
fn classifier_gradients_match_finite_differences() {
    let mut r = rng(4);
    let (_, shift) = small_shift(2);
    let samples: Vec<GraphSample> = (0..6)
        .map(|s| GraphSample {
            shift: shift.clone(),
            input: random_matrix(&mut r, shift.dim(), 1),
            label: s % 2,
        })
        .collect();
    for act in ACTIVATIONS {
        let model = GraphClassifier::random(&mut r, &[1, 3, 2], 2, act, 4, 2).unwrap();
        let (_, analytic) = model.loss_and_gradients(&samples).unwrap();
        let numeric = numeric_gradients(&model, 1e-5, |m| m.loss_and_gradients(&samples).unwrap().0);
        let err = gradient_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "{act:?}: {err:e}");
    }
}

#[test]
fn linear_least_squares_gradient_has_closed_form() {
    // one identity layer with K = 1 is Y = X H; d/dH ‖XH − T‖² = 2 Xᵀ(XH − T)
    let mut r = rng(5);
    let x = random_matrix(&mut r, 12, 3);
    let t = random_matrix(&mut r, 12, 2);
    let h = random_matrix(&mut r, 3, 2);
    let model = TnnModel::new(vec![TnnLayer {
        taps: vec![h.clone()],
        activation: Activation::Identity,
    }])
    .unwrap();
    let shift = ShiftOperator::identity(12);
    let cache = model.forward(&shift, &x).unwrap();
    let (_, d) = masked_sse(cache.output(), &t, 12, None).unwrap();
    let (grads, d_in) = model.backward(&shift, &cache, &d);
    let expected = 2.0 * x.transpose() * (&x * &h - &t);
    assert!((&grads[0] - &expected).amax() < 1e-12);
    let expected_in = 2.0 * (&x * &h - &t) * h.transpose();
    assert!((d_in - expected_in).amax() < 1e-12);
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let mut r = rng(6);
    let (n, shift) = small_shift(1);
    let model = TnnModel::random(&mut r, &[2, 4, 2], 3, Activation::Tanh, Activation::Identity).unwrap();
    let x = random_matrix(&mut r, shift.dim(), 2);
    let target = model.predict(&shift, &x).unwrap();
    let cache = model.forward(&shift, &x).unwrap();
    let (loss, d) = masked_sse(cache.output(), &target, n, None).unwrap();
    assert_eq!(loss, 0.0);
    let (grads, _) = model.backward(&shift, &cache, &d);
    assert!(grads.iter().all(|g| g.amax() == 0.0));
}

#[test]
fn masked_loss_counts_only_masked_nodes() {
    let pred = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
    let target = DMatrix::zeros(4, 1);
    // two nodes with d̂ = 2
    let (raw, grad) = masked_sse(&pred, &target, 2, Some(&[1])).unwrap();
    assert_eq!(raw, 9.0 + 16.0);
    assert_eq!(grad.as_slice(), &[0.0, 0.0, 6.0, 8.0]);
    let all = loss_masked_mse(&pred, &target, 2, None).unwrap();
    assert_eq!(all.raw, 30.0);
    assert_eq!(all.metric, 15.0);
}

#[test]
fn parameter_order_matches_gradient_order() {
    let mut r = rng(8);
    let model = TnnModel::random(&mut r, &[1, 3, 1], 2, Activation::Relu, Activation::Identity).unwrap();
    let names = model.parameter_names();
    let shapes: Vec<_> = model.parameters().iter().map(|p| p.shape()).collect();
    assert_eq!(names.len(), 4);
    assert_eq!(shapes, vec![(1, 3), (1, 3), (3, 1), (3, 1)]);
    assert_eq!(model.zero_gradients().len(), names.len());
}
