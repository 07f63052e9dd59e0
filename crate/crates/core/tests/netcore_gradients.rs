//! Analytic gradients against central finite differences.

mod common;

const TOL: f64 = 1e-4;

#[test]
fn dense_gradients_match_finite_differences() {
    let worst = common::dense_gradient_error(0..25);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn rank_one_factor_gradients_match_finite_differences() {
    let worst = common::rank_one_gradient_error(100..120);
    assert!(worst <= TOL, "worst relative error {worst}");
}
