//! Differentiable operations as explicit forward/backward pairs. Each
//! backward implements the exact adjoint of its forward; the
//! finite-difference suite in `gradcheck` is the authority.
//!
//! All loops run in a fixed order with no parallelism, so results are
//! bit-identical across runs.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Same-padded stride-1 cross-correlation (no kernel flip) plus bias.
/// x: [N, Cin, H, W], w: [Cout, Cin, k, k] with odd k, b: [Cout].
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, cin_w, k, k2) = w.dims4()?;
    if cin_w != cin || k != k2 || k % 2 == 0 || b.shape != vec![cout] {
        return Err(Error::validation(format!(
            "conv2d shape mismatch: x {:?}, w {:?}, b {:?}",
            x.shape, w.shape, b.shape
        )));
    }
    let pad = k / 2;
    let mut y = Tensor::zeros(vec![n, cout, h, wd]);
    let plane = h * wd;
    for ni in 0..n {
        for co in 0..cout {
            let y_base = (ni * cout + co) * plane;
            let bias = b.data[co];
            for v in &mut y.data[y_base..y_base + plane] {
                *v = bias;
            }
            for ci in 0..cin {
                let x_base = (ni * cin + ci) * plane;
                for ky in 0..k {
                    let dr = ky as isize - pad as isize;
                    for kx in 0..k {
                        let dc = kx as isize - pad as isize;
                        let wv = w.data[((co * cin + ci) * k + ky) * k + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let r0 = (-dr).max(0) as usize;
                        let r1 = (h as isize).min(h as isize - dr) as usize;
                        let c0 = (-dc).max(0) as usize;
                        let c1 = (wd as isize).min(wd as isize - dc) as usize;
                        for r in r0..r1 {
                            let xr = x_base + ((r as isize + dr) as usize) * wd;
                            let yr = y_base + r * wd;
                            let xs = &x.data[xr + ((c0 as isize + dc) as usize)
                                ..xr + ((c1 as isize + dc) as usize)];
                            let ys = &mut y.data[yr + c0..yr + c1];
                            for (yv, &xv) in ys.iter_mut().zip(xs) {
                                *yv = *yv + wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`conv2d_forward`]: gradients for input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, _, k, _) = w.dims4()?;
    let pad = k / 2;
    let plane = h * wd;
    let mut gx = Tensor::zeros(x.shape.clone());
    let mut gw = Tensor::zeros(w.shape.clone());
    let mut gb = Tensor::zeros(vec![cout]);

    for ni in 0..n {
        for co in 0..cout {
            let gy_base = (ni * cout + co) * plane;
            let mut acc = T::zero();
            for &g in &grad_y.data[gy_base..gy_base + plane] {
                acc = acc + g;
            }
            gb.data[co] = gb.data[co] + acc;

            for ci in 0..cin {
                let x_base = (ni * cin + ci) * plane;
                for ky in 0..k {
                    let dr = ky as isize - pad as isize;
                    for kx in 0..k {
                        let dc = kx as isize - pad as isize;
                        let widx = ((co * cin + ci) * k + ky) * k + kx;
                        let wv = w.data[widx];
                        let r0 = (-dr).max(0) as usize;
                        let r1 = (h as isize).min(h as isize - dr) as usize;
                        let c0 = (-dc).max(0) as usize;
                        let c1 = (wd as isize).min(wd as isize - dc) as usize;
                        let mut wacc = T::zero();
                        for r in r0..r1 {
                            let xr = x_base + ((r as isize + dr) as usize) * wd;
                            let gyr = gy_base + r * wd;
                            let xs = &x.data[xr + ((c0 as isize + dc) as usize)
                                ..xr + ((c1 as isize + dc) as usize)];
                            let gys = &grad_y.data[gyr + c0..gyr + c1];
                            // dL/dw: correlate grad_y with x
                            for (&g, &xv) in gys.iter().zip(xs) {
                                wacc = wacc + g * xv;
                            }
                            // dL/dx: scatter grad_y through w
                            let gxs = &mut gx.data[xr + ((c0 as isize + dc) as usize)
                                ..xr + ((c1 as isize + dc) as usize)];
                            for (gxv, &g) in gxs.iter_mut().zip(gys) {
                                *gxv = *gxv + wv * g;
                            }
                        }
                        gw.data[widx] = gw.data[widx] + wacc;
                    }
                }
            }
        }
    }
    Ok((gx, gw, gb))
}

/// relu(x) = max(x, 0); derivative 0 at x = 0 (subgradient convention).
pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
    }
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_y: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| sigmoid_scalar(v)).collect(),
    }
}

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Backward from the forward output y: dy/dx = y (1 - y).
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_y: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: y.shape.clone(),
        data: y
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&yv, &g)| g * yv * (T::one() - yv))
            .collect(),
    }
}

/// 2x2 max pooling. Returns the pooled tensor and the flat input index of
/// each window maximum (first occurrence on ties) for the backward pass.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::validation(format!("maxpool2 needs even H and W, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(vec![n, c, oh, ow]);
    let mut argmax = vec![0usize; y.len()];
    for nc in 0..n * c {
        let x_base = nc * h * w;
        let y_base = nc * oh * ow;
        for r in 0..oh {
            for col in 0..ow {
                let mut best_idx = x_base + (2 * r) * w + 2 * col;
                let mut best = x.data[best_idx];
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = x_base + (2 * r + dr) * w + 2 * col + dc;
                    if x.data[idx] > best {
                        best = x.data[idx];
                        best_idx = idx;
                    }
                }
                y.data[y_base + r * ow + col] = best;
                argmax[y_base + r * ow + col] = best_idx;
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_y: &Tensor<T>,
) -> Tensor<T> {
    let mut gx = Tensor::zeros(input_shape.to_vec());
    for (i, &g) in grad_y.data.iter().enumerate() {
        gx.data[argmax[i]] = gx.data[argmax[i]] + g;
    }
    gx
}

/// Nearest-neighbor x2 upsampling.
pub fn upsample2_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let mut y = Tensor::zeros(vec![n, c, 2 * h, 2 * w]);
    for nc in 0..n * c {
        let x_base = nc * h * w;
        let y_base = nc * 4 * h * w;
        for r in 0..h {
            for col in 0..w {
                let v = x.data[x_base + r * w + col];
                for dr in 0..2 {
                    let yr = y_base + (2 * r + dr) * 2 * w + 2 * col;
                    y.data[yr] = v;
                    y.data[yr + 1] = v;
                }
            }
        }
    }
    Ok(y)
}

/// Adjoint of replication: each input element receives the sum of its 2x2 block.
pub fn upsample2_backward<T: Scalar>(input_shape: &[usize], grad_y: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let mut gx = Tensor::zeros(input_shape.to_vec());
    for nc in 0..n * c {
        let x_base = nc * h * w;
        let y_base = nc * 4 * h * w;
        for r in 0..h {
            for col in 0..w {
                let mut acc = T::zero();
                for dr in 0..2 {
                    let yr = y_base + (2 * r + dr) * 2 * w + 2 * col;
                    acc = acc + grad_y.data[yr] + grad_y.data[yr + 1];
                }
                gx.data[x_base + r * w + col] = acc;
            }
        }
    }
    gx
}

/// Concatenate along the channel axis: [N,Ca,H,W] + [N,Cb,H,W] -> [N,Ca+Cb,H,W].
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, h, w) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if n != nb || h != hb || w != wb {
        return Err(Error::validation(format!(
            "concat shape mismatch: {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let plane = h * w;
    let mut y = Tensor::zeros(vec![n, ca + cb, h, w]);
    for ni in 0..n {
        let ya = ni * (ca + cb) * plane;
        y.data[ya..ya + ca * plane].copy_from_slice(&a.data[ni * ca * plane..(ni + 1) * ca * plane]);
        y.data[ya + ca * plane..ya + (ca + cb) * plane]
            .copy_from_slice(&b.data[ni * cb * plane..(ni + 1) * cb * plane]);
    }
    Ok(y)
}

/// Backward of [`concat_channels`]: split the gradient back into the parts.
pub fn concat_channels_backward<T: Scalar>(
    ca: usize,
    cb: usize,
    grad_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = grad_y.dims4()?;
    if c != ca + cb {
        return Err(Error::validation("concat backward channel mismatch"));
    }
    let plane = h * w;
    let mut ga = Tensor::zeros(vec![n, ca, h, w]);
    let mut gb = Tensor::zeros(vec![n, cb, h, w]);
    for ni in 0..n {
        let ya = ni * c * plane;
        ga.data[ni * ca * plane..(ni + 1) * ca * plane]
            .copy_from_slice(&grad_y.data[ya..ya + ca * plane]);
        gb.data[ni * cb * plane..(ni + 1) * cb * plane]
            .copy_from_slice(&grad_y.data[ya + ca * plane..ya + c * plane]);
    }
    Ok((ga, gb))
}

/// Coat probabilities with the validity mask: elementwise product, exactly 0
/// wherever the mask is 0.
pub fn coat_output<T: Scalar>(probs: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    if probs.shape != mask.shape {
        return Err(Error::validation(format!(
            "coat shape mismatch: {:?} vs {:?}",
            probs.shape, mask.shape
        )));
    }
    Ok(Tensor {
        shape: probs.shape.clone(),
        data: probs
            .data
            .iter()
            .zip(&mask.data)
            .map(|(&p, &m)| if m == T::zero() { T::zero() } else { p * m })
            .collect(),
    })
}

/// Masked binary cross-entropy on logits, mean over mask pixels.
///
/// Per pixel, the numerically stable form l = max(z,0) - z y + ln(1+e^{-|z|});
/// loss = sum(mask * weight * l) / max(sum mask, 1). Mask-0 pixels are skipped
/// outright, so loss and gradient are bit-wise independent of their labels and
/// the logits-gradient there is exactly zero.
pub fn masked_bce_with_logits<T: Scalar>(
    logits: &Tensor<T>,
    labels: &Tensor<T>,
    mask: &Tensor<T>,
    weights: Option<&Tensor<T>>,
) -> Result<(T, Tensor<T>)> {
    if logits.shape != labels.shape || logits.shape != mask.shape {
        return Err(Error::validation("masked BCE shape mismatch"));
    }
    if let Some(w) = weights {
        if w.shape != logits.shape {
            return Err(Error::validation("masked BCE weight shape mismatch"));
        }
    }
    let mut mask_sum = T::zero();
    for &m in &mask.data {
        mask_sum = mask_sum + m;
    }
    let denom = if mask_sum > T::one() { mask_sum } else { T::one() };

    let mut loss = T::zero();
    let mut grad = Tensor::zeros(logits.shape.clone());
    for i in 0..logits.len() {
        let m = mask.data[i];
        if m == T::zero() {
            continue;
        }
        let z = logits.data[i];
        let y = labels.data[i];
        let wt = weights.map_or(T::one(), |w| w.data[i]);
        let pos = if z > T::zero() { z } else { T::zero() };
        let l = pos - z * y + (T::one() + (-z.abs()).exp()).ln();
        loss = loss + m * wt * l;
        grad.data[i] = m * wt * (sigmoid_scalar(z) - y) / denom;
    }
    Ok((loss / denom, grad))
}
