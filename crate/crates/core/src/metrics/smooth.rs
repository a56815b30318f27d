//! Differentiable quality terms and their analytic gradients with respect to
//! the restored image.
//!
//! Gradients are returned in the layout of [`Image::data`]: interleaved RGB,
//! row-major. Everything that depends only on the degraded image is computed
//! once in [`IqmReference`] and treated as a constant.

use super::{dilated_edges, window_stats, IqmWeights, CONTRAST_WINDOW};
use crate::error::{check_min_size, check_same_size, Result};
use crate::imgcore::{reflect, sobel_components, sobel_magnitude_backward, Image, LUMA_WEIGHTS};

/// Degraded-image side of the quality gains.
#[derive(Clone, Debug)]
pub struct IqmReference {
    height: usize,
    width: usize,
    contrast_energy: f64,
    acutance: f64,
    support: Vec<f64>,
    support_count: f64,
    threshold: f64,
}

impl IqmReference {
    pub fn new(i: &Image, threshold: f64, dilation_radius: usize) -> Result<Self> {
        let (h, w) = i.dims();
        check_min_size(h, w, CONTRAST_WINDOW)?;
        let g = luma(i);
        let (contrast_energy, _) = contrast_energy_with_grad(&g, h, w);
        let (acutance, _) = acutance_with_grad(&g, h, w);
        let support = dilated_edges(i, threshold, dilation_radius)?.into_data();
        let support_count = support.iter().sum();
        Ok(Self {
            height: h,
            width: w,
            contrast_energy,
            acutance,
            support,
            support_count,
            threshold,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Unclamped smooth component values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothTerms {
    pub q_c: f64,
    pub q_a: f64,
    pub q_bi: f64,
    pub q_g: f64,
}

impl SmoothTerms {
    pub fn weighted(&self, w: &IqmWeights) -> f64 {
        w.contrast * self.q_c
            + w.acutance * self.q_a
            + w.border_integrity * self.q_bi
            + w.gray_world * self.q_g
    }
}

fn luma(img: &Image) -> Vec<f64> {
    img.pixels().map(crate::imgcore::luma).collect()
}

/// Accumulate `scale · ∂/∂gray` into an RGB gradient.
fn lift_into(rgb: &mut [f64], gray_grad: &[f64], scale: f64) {
    for (px, g) in rgb.chunks_exact_mut(3).zip(gray_grad) {
        for (v, w) in px.iter_mut().zip(LUMA_WEIGHTS) {
            *v += scale * w * g;
        }
    }
}

/// Mean local variance and its gradient.
fn contrast_energy_with_grad(g: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
    let (means, vars) = window_stats(g, h, w, CONTRAST_WINDOW);
    let n = g.len() as f64;
    let half = (CONTRAST_WINDOW / 2) as isize;
    let coeff = 2.0 / ((CONTRAST_WINDOW * CONTRAST_WINDOW) as f64 * n);
    let mut grad = vec![0.0; g.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mean = means[y as usize * w + x as usize];
            for dy in -half..=half {
                let row = reflect(y + dy, h) * w;
                for dx in -half..=half {
                    let p = row + reflect(x + dx, w);
                    grad[p] += coeff * (g[p] - mean);
                }
            }
        }
    }
    (vars.iter().sum::<f64>() / n, grad)
}

fn acutance_with_grad(g: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
    let (gx, gy) = sobel_components(g, h, w);
    let n = g.len() as f64;
    let mean = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum::<f64>() / n;
    let upstream = vec![1.0 / n; g.len()];
    (mean, sobel_magnitude_backward(&gx, &gy, &upstream, h, w))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn soft_border_with_grad(
    reference: &IqmReference,
    g: &[f64],
    steepness: f64,
) -> (f64, Vec<f64>) {
    let (h, w) = reference.dims();
    let zero = vec![0.0; g.len()];
    if reference.support_count == 0.0 {
        return (1.0, zero);
    }
    let (gx, gy) = sobel_components(g, h, w);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let (argmax, max) = mag
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, m)| if m > best.1 { (i, m) } else { best });

    let theta = reference.threshold;
    if max <= 0.0 {
        // flat restoration: every pixel sits at sigmoid(-k·θ), no usable slope
        let s = sigmoid(-steepness * theta);
        return (s, zero);
    }

    let count = reference.support_count;
    let mut value = 0.0;
    let mut grad_mag = vec![0.0; g.len()];
    let mut through_max = 0.0;
    for (x, (&m, &sup)) in mag.iter().zip(&reference.support).enumerate() {
        let s = sigmoid(steepness * (m / max - theta));
        value += s * sup;
        if sup == 0.0 {
            continue;
        }
        let u = steepness * s * (1.0 - s) * sup / count;
        if x != argmax {
            grad_mag[x] += u / max;
            through_max += u * m;
        }
    }
    grad_mag[argmax] -= through_max / (max * max);
    (value / count, sobel_magnitude_backward(&gx, &gy, &grad_mag, h, w))
}

/// Contrast gain and its gradient w.r.t. `j`.
pub fn contrast_gain_with_grad(i: &Image, j: &Image) -> Result<(f64, Vec<f64>)> {
    check_same_size(i.dims(), j.dims())?;
    let (h, w) = j.dims();
    check_min_size(h, w, CONTRAST_WINDOW)?;
    let (ej, grad_g) = contrast_energy_with_grad(&luma(j), h, w);
    let (ei, _) = contrast_energy_with_grad(&luma(i), h, w);
    let mut grad = vec![0.0; j.data().len()];
    lift_into(&mut grad, &grad_g, 1.0);
    Ok((ej - ei, grad))
}

/// Acutance gain and its gradient w.r.t. `j`.
pub fn acutance_gain_with_grad(i: &Image, j: &Image) -> Result<(f64, Vec<f64>)> {
    check_same_size(i.dims(), j.dims())?;
    let (h, w) = j.dims();
    check_min_size(h, w, 3)?;
    let (aj, grad_g) = acutance_with_grad(&luma(j), h, w);
    let (ai, _) = acutance_with_grad(&luma(i), h, w);
    let mut grad = vec![0.0; j.data().len()];
    lift_into(&mut grad, &grad_g, 1.0);
    Ok((aj - ai, grad))
}

pub fn border_integrity_soft_with_grad(
    reference: &IqmReference,
    j: &Image,
    steepness: f64,
) -> Result<(f64, Vec<f64>)> {
    check_same_size(reference.dims(), j.dims())?;
    let (v, grad_g) = soft_border_with_grad(reference, &luma(j), steepness);
    let mut grad = vec![0.0; j.data().len()];
    lift_into(&mut grad, &grad_g, 1.0);
    Ok((v, grad))
}

pub fn gray_world_with_grad(j: &Image) -> (f64, Vec<f64>) {
    let n = j.data().len() as f64;
    let grad = j.data().iter().map(|v| -4.0 * (v - 0.5) / n).collect();
    (super::gray_world(j), grad)
}

/// Weighted smooth quality of `j` (no clamping) and its gradient.
pub fn smooth_iqm(
    reference: &IqmReference,
    j: &Image,
    weights: &IqmWeights,
    steepness: f64,
) -> Result<(SmoothTerms, f64, Vec<f64>)> {
    check_same_size(reference.dims(), j.dims())?;
    let (h, w) = j.dims();
    let g = luma(j);

    let (energy, grad_c) = contrast_energy_with_grad(&g, h, w);
    let (acut, grad_a) = acutance_with_grad(&g, h, w);
    let (q_bi, grad_bi) = soft_border_with_grad(reference, &g, steepness);
    let (q_g, grad_gw) = gray_world_with_grad(j);

    let terms = SmoothTerms {
        q_c: energy - reference.contrast_energy,
        q_a: acut - reference.acutance,
        q_bi,
        q_g,
    };

    let gray_grad: Vec<f64> = grad_c
        .iter()
        .zip(&grad_a)
        .zip(&grad_bi)
        .map(|((c, a), b)| weights.contrast * c + weights.acutance * a + weights.border_integrity * b)
        .collect();
    let mut grad: Vec<f64> = grad_gw.iter().map(|v| weights.gray_world * v).collect();
    lift_into(&mut grad, &gray_grad, 1.0);
    Ok((terms, terms.weighted(weights), grad))
}
