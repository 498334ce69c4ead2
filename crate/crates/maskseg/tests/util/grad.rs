//! Finite-difference verification of every analytic backward pass.
//!
//! Each op is checked on 20 random instances: the analytic gradient from the
//! backward function must match a central-difference gradient of the forward
//! function to within `FD_TOLERANCE` relative error. Non-scalar ops are
//! reduced to a scalar with a fixed random linear functional, whose gradient
//! with respect to the op output is the functional's coefficients.

use maskseg::nn::gradcheck::{fd_gradient, max_relative_error, FD_STEP, FD_TOLERANCE};
use maskseg::nn::ops::{
    concat_channels, concat_channels_backward, conv2d_backward, conv2d_forward,
    masked_bce_with_logits, maxpool2_backward, maxpool2_forward, relu_backward, relu_forward,
    sigmoid_backward, sigmoid_forward, upsample2_backward, upsample2_forward,
};
use maskseg::nn::{init_params, unet_backward, unet_forward, ModelParams, Tensor, UNetConfig};
use maskseg::rng::{shuffle, SplitMix64};

pub const INSTANCES: u64 = 20;

fn rand_tensor(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random values bounded away from zero, so relu stays away from its
/// nondifferentiable point during finite-difference probing.
fn rand_tensor_off_zero(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let mag = rng.uniform(0.05, 1.5);
            if rng.next_f64() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar reduction used to gradient-check tensor-valued ops.
fn dot(coeffs: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    assert_eq!(coeffs.shape, y.shape);
    coeffs.data.iter().zip(&y.data).map(|(c, v)| c * v).sum()
}

pub fn check_conv2d() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(100 + seed);
        let (n, cin, cout, h, w, k) = (1, 2, 3, 4, 5, 3);
        let x = rand_tensor(&mut rng, &[n, cin, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[cout, cin, k, k], -0.5, 0.5);
        let b = rand_tensor(&mut rng, &[cout], -0.5, 0.5);
        let y = conv2d_forward(&x, &wt, &b).unwrap();
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);

        let (gx, gw, gb) = conv2d_backward(&x, &wt, &coeffs).unwrap();
        let fx = fd_gradient(|p| dot(&coeffs, &conv2d_forward(p, &wt, &b).unwrap()), &x, FD_STEP);
        let fw = fd_gradient(|p| dot(&coeffs, &conv2d_forward(&x, p, &b).unwrap()), &wt, FD_STEP);
        let fb = fd_gradient(|p| dot(&coeffs, &conv2d_forward(&x, &wt, p).unwrap()), &b, FD_STEP);
        assert!(max_relative_error(&gx, &fx) <= FD_TOLERANCE, "conv input grad, seed {seed}");
        assert!(max_relative_error(&gw, &fw) <= FD_TOLERANCE, "conv weight grad, seed {seed}");
        assert!(max_relative_error(&gb, &fb) <= FD_TOLERANCE, "conv bias grad, seed {seed}");
    }
}

pub fn check_relu() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(200 + seed);
        let x = rand_tensor_off_zero(&mut rng, &[2, 3, 4, 4]);
        let y = relu_forward(&x);
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);
        let gx = relu_backward(&x, &coeffs);
        let fx = fd_gradient(|p| dot(&coeffs, &relu_forward(p)), &x, FD_STEP);
        assert!(max_relative_error(&gx, &fx) <= FD_TOLERANCE, "relu grad, seed {seed}");
    }
}

pub fn check_sigmoid() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(300 + seed);
        let x = rand_tensor(&mut rng, &[1, 2, 3, 5], -4.0, 4.0);
        let y = sigmoid_forward(&x);
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);
        let gx = sigmoid_backward(&y, &coeffs);
        let fx = fd_gradient(|p| dot(&coeffs, &sigmoid_forward(p)), &x, FD_STEP);
        assert!(max_relative_error(&gx, &fx) <= FD_TOLERANCE, "sigmoid grad, seed {seed}");
    }
}

pub fn check_maxpool2() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(400 + seed);
        // Distinct, well-separated values keep the argmax stable under probing.
        let shape = [1, 3, 6, 4];
        let mut ranks: Vec<usize> = (0..shape.iter().product()).collect();
        shuffle(&mut ranks, &mut rng);
        let x = Tensor::new(
            shape.to_vec(),
            ranks.iter().map(|&r| r as f64 * 0.05 - 1.8).collect(),
        )
        .unwrap();
        let (y, argmax) = maxpool2_forward(&x).unwrap();
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);
        let gx: Tensor<f64> = maxpool2_backward(&x.shape, &argmax, &coeffs);
        let fx = fd_gradient(|p| dot(&coeffs, &maxpool2_forward(p).unwrap().0), &x, FD_STEP);
        let err = max_relative_error(&gx, &fx);
        assert!(err <= FD_TOLERANCE, "maxpool grad, seed {seed}, err {err:e}");
    }
}

pub fn check_upsample2() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(500 + seed);
        let x = rand_tensor(&mut rng, &[2, 2, 3, 4], -1.0, 1.0);
        let y = upsample2_forward(&x).unwrap();
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);
        let gx: Tensor<f64> = upsample2_backward(&x.shape, &coeffs);
        let fx = fd_gradient(|p| dot(&coeffs, &upsample2_forward(p).unwrap()), &x, FD_STEP);
        assert!(max_relative_error(&gx, &fx) <= FD_TOLERANCE, "upsample grad, seed {seed}");
    }
}

pub fn check_concat() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(600 + seed);
        let a = rand_tensor(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[1, 4, 3, 3], -1.0, 1.0);
        let y = concat_channels(&a, &b).unwrap();
        let coeffs = rand_tensor(&mut rng, &y.shape, -1.0, 1.0);
        let (ga, gb) = concat_channels_backward(2, 4, &coeffs).unwrap();
        let fa = fd_gradient(|p| dot(&coeffs, &concat_channels(p, &b).unwrap()), &a, FD_STEP);
        let fb = fd_gradient(|p| dot(&coeffs, &concat_channels(&a, p).unwrap()), &b, FD_STEP);
        assert!(max_relative_error(&ga, &fa) <= FD_TOLERANCE, "concat a grad, seed {seed}");
        assert!(max_relative_error(&gb, &fb) <= FD_TOLERANCE, "concat b grad, seed {seed}");
    }
}

pub fn check_masked_bce() {
    for seed in 0..INSTANCES {
        let mut rng = SplitMix64::new(700 + seed);
        let shape = [1, 1, 4, 6];
        let logits = rand_tensor(&mut rng, &shape, -3.0, 3.0);
        let len = logits.len();
        let labels = Tensor::new(
            shape.to_vec(),
            (0..len).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let mask = Tensor::new(
            shape.to_vec(),
            (0..len).map(|_| if rng.next_f64() < 0.3 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let weights = rand_tensor(&mut rng, &shape, 0.2, 2.0);

        for wopt in [None, Some(&weights)] {
            let (_, grad) = masked_bce_with_logits(&logits, &labels, &mask, wopt).unwrap();
            let fd = fd_gradient(
                |p| masked_bce_with_logits(p, &labels, &mask, wopt).unwrap().0,
                &logits,
                FD_STEP,
            );
            assert!(
                max_relative_error(&grad, &fd) <= FD_TOLERANCE,
                "masked BCE grad, seed {seed}, weighted: {}",
                wopt.is_some()
            );
        }
    }
}

/// End-to-end check: parameter gradients of the masked loss through a small
/// U-Net, every parameter probed by finite differences.
pub fn check_unet() {
    let cfg = UNetConfig { in_channels: 4, out_channels: 1, levels: 1, base_filters: 2 };
    let mut checked = 0u64;
    let mut seed = 0u64;
    while checked < INSTANCES {
        seed += 1;
        let mut rng = SplitMix64::new(800 + seed);
        let params: ModelParams<f64> = init_params(&cfg, 900 + seed).unwrap();
        let x = rand_tensor(&mut rng, &[1, 4, 8, 8], -1.0, 1.0);
        let labels = Tensor::new(
            vec![1, 1, 8, 8],
            (0..64).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let mask = Tensor::new(
            vec![1, 1, 8, 8],
            (0..64).map(|_| if rng.next_f64() < 0.3 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();

        // Only instances comfortably away from relu kinks and pool ties are
        // valid finite-difference subjects; resample the rest.
        let (_, probe_cache) = unet_forward(&cfg, &params, &x).unwrap();
        if probe_cache.fd_margin() < 2e-3 {
            continue;
        }
        checked += 1;

        let loss_of = |p: &ModelParams<f64>| -> f64 {
            let (logits, _) = unet_forward(&cfg, p, &x).unwrap();
            masked_bce_with_logits(&logits, &labels, &mask, None).unwrap().0
        };

        let (logits, cache) = unet_forward(&cfg, &params, &x).unwrap();
        let (_, grad_logits) = masked_bce_with_logits(&logits, &labels, &mask, None).unwrap();
        let grads = unet_backward(&cfg, &params, &cache, &grad_logits).unwrap();

        for (slot, (name, tensor)) in params.entries.iter().enumerate() {
            let analytic = &grads.entries[slot].1;
            let mut numeric = Tensor::zeros(tensor.shape.clone());
            let mut probe = params.clone();
            for i in 0..tensor.len() {
                let original = probe.entries[slot].1.data[i];
                probe.entries[slot].1.data[i] = original + FD_STEP;
                let plus = loss_of(&probe);
                probe.entries[slot].1.data[i] = original - FD_STEP;
                let minus = loss_of(&probe);
                probe.entries[slot].1.data[i] = original;
                numeric.data[i] = (plus - minus) / (2.0 * FD_STEP);
            }
            let err = max_relative_error(analytic, &numeric);
            assert!(err <= FD_TOLERANCE, "unet parameter grad {name}, seed {seed}, err {err:e}");
        }
    }
}

/// Run every gradient check in sequence.
pub fn check_all() {
    check_conv2d();
    check_relu();
    check_sigmoid();
    check_maxpool2();
    check_upsample2();
    check_concat();
    check_masked_bce();
    check_unet();
}
