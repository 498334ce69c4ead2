//! Central finite-difference harness. This is the independent oracle for
//! every analytic backward pass: it only ever calls forward code.

use super::tensor::Tensor;

/// Central-difference gradient of a scalar function of one f64 tensor.
pub fn fd_gradient<F>(f: F, x: &Tensor<f64>, step: f64) -> Tensor<f64>
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let mut grad = Tensor::zeros(x.shape.clone());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let original = probe.data[i];
        probe.data[i] = original + step;
        let plus = f(&probe);
        probe.data[i] = original - step;
        let minus = f(&probe);
        probe.data[i] = original;
        grad.data[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst per-element relative error, with a floor of 1 on the denominator
/// so near-zero gradients are compared absolutely.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape, numeric.shape, "gradient shapes differ");
    analytic
        .data
        .iter()
        .zip(&numeric.data)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Step size used by every gradient-check test.
pub const FD_STEP: f64 = 1e-4;

/// Relative-error bound used by every gradient-check test.
pub const FD_TOLERANCE: f64 = 1e-5;
