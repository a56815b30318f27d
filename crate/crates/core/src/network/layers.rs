//! Forward and backward passes of the individual layers. All spatial
//! operators use reflect padding and keep the spatial size unchanged.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imgcore::reflect;

/// Padding before/after for a kernel of extent `k` (even kernels put the
/// extra row/column before).
pub(crate) fn pad_split(k: usize) -> (usize, usize) {
    (k / 2, k - 1 - k / 2)
}

/// Reflect-pad an `[h, w, c]` activation.
pub(crate) fn pad_reflect(input: &Tensor, kh: usize, kw: usize) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let (top, bottom) = pad_split(kh);
    let (left, right) = pad_split(kw);
    if top.max(bottom) >= h || left.max(right) >= w {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: kh.max(kw),
        });
    }
    let ph = h + top + bottom;
    let pw = w + left + right;
    let src = input.data();
    let mut out = Vec::with_capacity(ph * pw * c);
    for py in 0..ph {
        let y = reflect(py as isize - top as isize, h);
        for px in 0..pw {
            let x = reflect(px as isize - left as isize, w);
            let at = (y * w + x) * c;
            out.extend_from_slice(&src[at..at + c]);
        }
    }
    Tensor::new(vec![ph, pw, c], out)
}

/// Adjoint of [`pad_reflect`]: sum padded gradients back onto their source
/// pixels.
fn fold_reflect(padded: &Tensor, h: usize, w: usize, kh: usize, kw: usize) -> Tensor {
    let (top, _) = pad_split(kh);
    let (left, _) = pad_split(kw);
    let (ph, pw, c) = padded.hwc().expect("padded gradient is 3-d");
    let mut out = Tensor::zeros(vec![h, w, c]);
    let dst = out.data_mut();
    let src = padded.data();
    for py in 0..ph {
        let y = reflect(py as isize - top as isize, h);
        for px in 0..pw {
            let x = reflect(px as isize - left as isize, w);
            let from = (py * pw + px) * c;
            let to = (y * w + x) * c;
            for k in 0..c {
                dst[to + k] += src[from + k];
            }
        }
    }
    out
}

fn kernel_dims(kernels: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match kernels.shape()[..] {
        [kh, kw, cin, cout] => Ok((kh, kw, cin, cout)),
        _ => Err(Error::ShapeMismatch(format!(
            "kernels must be [kh, kw, in, out], got {:?}",
            kernels.shape()
        ))),
    }
}

fn conv_accumulate<const K: usize>(
    padded: &[f64],
    pw: usize,
    kernels: &[f64],
    bias: &[f64],
    (h, w, c): (usize, usize, usize),
    (kh, kw): (usize, usize),
    out: &mut [f64],
) {
    let span = kw * c;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; K];
            acc.copy_from_slice(bias);
            for dy in 0..kh {
                let row_at = ((y + dy) * pw + x) * c;
                let row = &padded[row_at..row_at + span];
                let krow = &kernels[dy * span * K..(dy + 1) * span * K];
                for (v, wk) in row.iter().zip(krow.chunks_exact(K)) {
                    for (a, wv) in acc.iter_mut().zip(wk) {
                        *a += v * wv;
                    }
                }
            }
            out[(y * w + x) * K..(y * w + x + 1) * K].copy_from_slice(&acc);
        }
    }
}

fn conv_accumulate_dyn(
    padded: &[f64],
    pw: usize,
    kernels: &[f64],
    bias: &[f64],
    (h, w, c): (usize, usize, usize),
    (kh, kw, k_out): (usize, usize, usize),
    out: &mut [f64],
) {
    let span = kw * c;
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out[(y * w + x) * k_out..(y * w + x + 1) * k_out];
            acc.copy_from_slice(bias);
            for dy in 0..kh {
                let row_at = ((y + dy) * pw + x) * c;
                let row = &padded[row_at..row_at + span];
                let krow = &kernels[dy * span * k_out..(dy + 1) * span * k_out];
                for (v, wk) in row.iter().zip(krow.chunks_exact(k_out)) {
                    for (a, wv) in acc.iter_mut().zip(wk) {
                        *a += v * wv;
                    }
                }
            }
        }
    }
}

/// Same-size convolution (cross-correlation) of an `[h, w, c]` input with
/// `[kh, kw, c, k]` kernels.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let (kh, kw, cin, k_out) = kernel_dims(kernels)?;
    if cin != c {
        return Err(Error::ShapeMismatch(format!(
            "kernels expect {cin} input channels, input has {c}"
        )));
    }
    if bias.len() != k_out {
        return Err(Error::ShapeMismatch(format!(
            "{k_out} kernels but {} biases",
            bias.len()
        )));
    }
    let padded = pad_reflect(input, kh, kw)?;
    let pw = padded.shape()[1];
    let mut out = vec![0.0; h * w * k_out];
    let dims = (h, w, c);
    match k_out {
        16 => conv_accumulate::<16>(padded.data(), pw, kernels.data(), bias, dims, (kh, kw), &mut out),
        1 => conv_single(padded.data(), pw, kernels.data(), bias[0], dims, (kh, kw), &mut out),
        _ => conv_accumulate_dyn(padded.data(), pw, kernels.data(), bias, dims, (kh, kw, k_out), &mut out),
    }
    Tensor::new(vec![h, w, k_out], out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Single output map: one dot product per kernel row.
fn conv_single(
    padded: &[f64],
    pw: usize,
    kernels: &[f64],
    bias: f64,
    (h, w, c): (usize, usize, usize),
    (kh, kw): (usize, usize),
    out: &mut [f64],
) {
    let span = kw * c;
    for y in 0..h {
        for x in 0..w {
            let mut acc = bias;
            for dy in 0..kh {
                let row_at = ((y + dy) * pw + x) * c;
                acc += dot(&padded[row_at..row_at + span], &kernels[dy * span..(dy + 1) * span]);
            }
            out[y * w + x] = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_accumulate<const K: usize>(
    padded: &[f64],
    pw: usize,
    kernels: &[f64],
    grad_out: &[f64],
    (h, w, c): (usize, usize, usize),
    (kh, kw): (usize, usize),
    d_kernels: &mut [f64],
    d_bias: &mut [f64],
    mut d_padded: Option<&mut [f64]>,
) {
    let span = kw * c;
    for y in 0..h {
        for x in 0..w {
            let gk: [f64; K] = grad_out[(y * w + x) * K..(y * w + x + 1) * K]
                .try_into()
                .expect("K outputs per pixel");
            if gk.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (db, gv) in d_bias.iter_mut().zip(&gk) {
                *db += gv;
            }
            for dy in 0..kh {
                let row_at = ((y + dy) * pw + x) * c;
                let row = &padded[row_at..row_at + span];
                let kslice = dy * span * K..(dy + 1) * span * K;
                for (v, dk) in row.iter().zip(d_kernels[kslice.clone()].chunks_exact_mut(K)) {
                    for (d, gv) in dk.iter_mut().zip(&gk) {
                        *d += v * gv;
                    }
                }
                if let Some(dp) = d_padded.as_deref_mut() {
                    let drow = &mut dp[row_at..row_at + span];
                    for (dv, wk) in drow.iter_mut().zip(kernels[kslice].chunks_exact(K)) {
                        let mut s = 0.0;
                        for (a, b) in wk.iter().zip(&gk) {
                            s += a * b;
                        }
                        *dv += s;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_dyn(
    padded: &[f64],
    pw: usize,
    kernels: &[f64],
    grad_out: &[f64],
    (h, w, c): (usize, usize, usize),
    (kh, kw, k_out): (usize, usize, usize),
    d_kernels: &mut [f64],
    d_bias: &mut [f64],
    mut d_padded: Option<&mut [f64]>,
) {
    let span = kw * c;
    for y in 0..h {
        for x in 0..w {
            let gk = &grad_out[(y * w + x) * k_out..(y * w + x + 1) * k_out];
            if gk.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (db, gv) in d_bias.iter_mut().zip(gk) {
                *db += gv;
            }
            for dy in 0..kh {
                let row_at = ((y + dy) * pw + x) * c;
                let row = &padded[row_at..row_at + span];
                let kslice = dy * span * k_out..(dy + 1) * span * k_out;
                for (v, dk) in row.iter().zip(d_kernels[kslice.clone()].chunks_exact_mut(k_out)) {
                    for (d, gv) in dk.iter_mut().zip(gk) {
                        *d += v * gv;
                    }
                }
                if let Some(dp) = d_padded.as_deref_mut() {
                    let drow = &mut dp[row_at..row_at + span];
                    for (dv, wk) in drow.iter_mut().zip(kernels[kslice].chunks_exact(k_out)) {
                        *dv += wk.iter().zip(gk).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
}

/// Gradients of a convolution.
pub struct ConvGrads {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
    pub input: Option<Tensor>,
}

/// Backward pass of [`conv2d_forward`]. The input gradient is only computed
/// when `want_input` is set.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let (h, w, c) = input.hwc()?;
    let (kh, kw, cin, k_out) = kernel_dims(kernels)?;
    if cin != c || grad_out.shape() != [h, w, k_out] {
        return Err(Error::ShapeMismatch(format!(
            "conv backward: input {:?}, kernels {:?}, grad {:?}",
            input.shape(),
            kernels.shape(),
            grad_out.shape()
        )));
    }
    let padded = pad_reflect(input, kh, kw)?;
    let (ph, pw, _) = padded.hwc()?;
    let p = padded.data();
    let wts = kernels.data();
    let g = grad_out.data();

    let mut d_kernels = vec![0.0; wts.len()];
    let mut d_bias = vec![0.0; k_out];
    let mut d_padded = if want_input {
        vec![0.0; ph * pw * c]
    } else {
        Vec::new()
    };

    let dims = (h, w, c);
    let d_input = want_input.then_some(&mut d_padded[..]);
    match k_out {
        16 => conv_backward_accumulate::<16>(p, pw, wts, g, dims, (kh, kw), &mut d_kernels, &mut d_bias, d_input),
        1 => conv_backward_accumulate::<1>(p, pw, wts, g, dims, (kh, kw), &mut d_kernels, &mut d_bias, d_input),
        _ => conv_backward_dyn(p, pw, wts, g, dims, (kh, kw, k_out), &mut d_kernels, &mut d_bias, d_input),
    }

    let input_grad = if want_input {
        let dp = Tensor::new(vec![ph, pw, c], d_padded)?;
        Some(fold_reflect(&dp, h, w, kh, kw))
    } else {
        None
    };
    Ok(ConvGrads {
        kernels: Tensor::new(kernels.shape().to_vec(), d_kernels)?,
        bias: d_bias,
        input: input_grad,
    })
}

/// Channel-group maximum. Output channel `j` is the max over input channels
/// `[g·j, g·j + g)`; the winning offset within the group is recorded, the
/// lowest one on ties.
pub fn maxout_forward(input: &Tensor, group: usize) -> Result<(Tensor, Vec<u8>)> {
    let (h, w, c) = input.hwc()?;
    if group == 0 || c % group != 0 || group > u8::MAX as usize {
        return Err(Error::ShapeMismatch(format!(
            "{c} channels cannot be split into groups of {group}"
        )));
    }
    let groups = c / group;
    let mut out = Vec::with_capacity(h * w * groups);
    let mut argmax = Vec::with_capacity(h * w * groups);
    for px in input.data().chunks_exact(c) {
        for chunk in px.chunks_exact(group) {
            let mut best = 0;
            for (k, &v) in chunk.iter().enumerate().skip(1) {
                if v > chunk[best] {
                    best = k;
                }
            }
            out.push(chunk[best]);
            argmax.push(best as u8);
        }
    }
    Ok((Tensor::new(vec![h, w, groups], out)?, argmax))
}

pub fn maxout_backward(grad_out: &Tensor, argmax: &[u8], group: usize) -> Result<Tensor> {
    let (h, w, groups) = grad_out.hwc()?;
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch("maxout argmax does not match gradient".into()));
    }
    let mut grad = Tensor::zeros(vec![h, w, groups * group]);
    let dst = grad.data_mut();
    for (o, (&g, &a)) in grad_out.data().iter().zip(argmax).enumerate() {
        dst[o * group + a as usize] = g;
    }
    Ok(grad)
}

/// Stride-1 max pooling over a reflect-padded `window²` neighbourhood.
/// Records, for every output element, the flat index of the winning input
/// element (first in row-major window order on ties).
pub fn maxpool_forward(input: &Tensor, window: usize) -> Result<(Tensor, Vec<u32>)> {
    let (h, w, c) = input.hwc()?;
    let (top, bottom) = pad_split(window);
    if window == 0 || top.max(bottom) >= h || top.max(bottom) >= w {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: window,
        });
    }
    let src = input.data();
    let ph = h + window - 1;
    // horizontal pass over every padded row: (value, source index)
    let mut rows = vec![(f64::NEG_INFINITY, 0u32); ph * w * c];
    for py in 0..ph {
        let y = reflect(py as isize - top as isize, h);
        for x in 0..w {
            let best = &mut rows[(py * w + x) * c..(py * w + x + 1) * c];
            for dx in 0..window {
                let base = (y * w + reflect(x as isize + dx as isize - top as isize, w)) * c;
                for (ch, b) in best.iter_mut().enumerate() {
                    if src[base + ch] > b.0 {
                        *b = (src[base + ch], (base + ch) as u32);
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(h * w * c);
    let mut argmax = Vec::with_capacity(h * w * c);
    let mut best = vec![(f64::NEG_INFINITY, 0u32); c];
    for y in 0..h {
        for x in 0..w {
            best.fill((f64::NEG_INFINITY, 0));
            for dy in 0..window {
                let cands = &rows[((y + dy) * w + x) * c..((y + dy) * w + x + 1) * c];
                for (b, cand) in best.iter_mut().zip(cands) {
                    if cand.0 > b.0 {
                        *b = *cand;
                    }
                }
            }
            out.extend(best.iter().map(|b| b.0));
            argmax.extend(best.iter().map(|b| b.1));
        }
    }
    Ok((Tensor::new(vec![h, w, c], out)?, argmax))
}

pub fn maxpool_backward(grad_out: &Tensor, argmax: &[u32]) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch("pool argmax does not match gradient".into()));
    }
    let mut grad = Tensor::zeros(grad_out.shape().to_vec());
    let dst = grad.data_mut();
    for (&g, &a) in grad_out.data().iter().zip(argmax) {
        dst[a as usize] += g;
    }
    Ok(grad)
}
