//! Underwater image formation `I = J·t + B·(1 − t)`, its inverse, and the
//! background-light estimate.

use crate::error::{check_same_size, Error, Result};
use crate::imgcore::{luma, Image};

/// Transmission floor used when inverting the formation model.
pub const DEFAULT_EPSILON_T: f64 = 0.1;
/// Fraction of most-attenuated pixels searched for the background light.
pub const DEFAULT_BACKGROUND_QUANTILE: f64 = 0.001;

/// Per-pixel fraction of scene light reaching the camera.
///
/// Values live in `[0, 1]`; a network may emit exact zeros, which are floored
/// at the point of use.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl TransmissionMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} transmission map with {} values",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("transmission {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, t: f64) -> Result<Self> {
        Self::new(height, width, vec![t; height * width])
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Veiling light of the water column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackgroundLight {
    pub rgb: [f64; 3],
}

impl BackgroundLight {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        let rgb = [r, g, b];
        if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue(format!("background light {rgb:?} outside [0, 1]")));
        }
        Ok(Self { rgb })
    }
}

/// Per-channel attenuation per unit distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttenuationCoefficients {
    pub beta: [f64; 3],
}

impl AttenuationCoefficients {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        let beta = [r, g, b];
        if beta.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "attenuation coefficients must be nonnegative, got {beta:?}"
            )));
        }
        Ok(Self { beta })
    }
}

/// Apply the formation model with one transmission map shared by all channels.
pub fn degrade(j: &Image, t: &TransmissionMap, b: &BackgroundLight) -> Result<Image> {
    degrade_channels(j, [t, t, t], b)
}

/// Formation model with a separate transmission per color channel.
pub fn degrade_channels(j: &Image, t: [&TransmissionMap; 3], b: &BackgroundLight) -> Result<Image> {
    for tc in t {
        check_same_size(j.dims(), tc.dims())?;
    }
    let mut out = Vec::with_capacity(j.data().len());
    for (p, px) in j.pixels().enumerate() {
        for c in 0..3 {
            let tc = t[c].data[p];
            // convex combination; clamp only absorbs rounding
            out.push((px[c] * tc + b.rgb[c] * (1.0 - tc)).clamp(0.0, 1.0));
        }
    }
    Ok(Image::from_raw(j.height(), j.width(), out))
}

#[inline]
fn unveil(observed: f64, t: f64, veil: f64) -> f64 {
    if t == 1.0 {
        observed
    } else {
        (observed - veil) / t + veil
    }
}

/// Invert the formation model before clamping. `J = (I − B) / max(t, ε) + B`.
pub(crate) fn restore_unclamped(i: &[f64], t: &[f64], b: &BackgroundLight, epsilon_t: f64) -> Vec<f64> {
    i.chunks_exact(3)
        .zip(t)
        .flat_map(|(px, &tv)| {
            let tt = tv.max(epsilon_t);
            [0, 1, 2].map(|c| unveil(px[c], tt, b.rgb[c]))
        })
        .collect()
}

fn check_epsilon(epsilon_t: f64) -> Result<()> {
    if !(epsilon_t > 0.0 && epsilon_t < 1.0) {
        return Err(Error::InvalidValue(format!("epsilon_t {epsilon_t} outside (0, 1)")));
    }
    Ok(())
}

/// Recover the scene radiance, flooring the transmission at `epsilon_t` and
/// clamping the result to `[0, 1]`.
pub fn restore(i: &Image, t: &TransmissionMap, b: &BackgroundLight, epsilon_t: f64) -> Result<Image> {
    check_same_size(i.dims(), t.dims())?;
    check_epsilon(epsilon_t)?;
    let raw = restore_unclamped(i.data(), &t.data, b, epsilon_t);
    Ok(Image::from_raw(
        i.height(),
        i.width(),
        raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    ))
}

/// Per-channel inverse of [`degrade_channels`].
pub fn restore_channels(
    i: &Image,
    t: [&TransmissionMap; 3],
    b: &BackgroundLight,
    epsilon_t: f64,
) -> Result<Image> {
    check_epsilon(epsilon_t)?;
    for tc in t {
        check_same_size(i.dims(), tc.dims())?;
    }
    let mut out = Vec::with_capacity(i.data().len());
    for (p, px) in i.pixels().enumerate() {
        for c in 0..3 {
            let tc = t[c].data[p].max(epsilon_t);
            out.push(unveil(px[c], tc, b.rgb[c]).clamp(0.0, 1.0));
        }
    }
    Ok(Image::from_raw(i.height(), i.width(), out))
}

/// Pick the background light among the most attenuated pixels.
///
/// `t0` is the `ceil(quantile·n)`-th smallest transmission; among pixels with
/// `t ≤ t0` the one with the brightest luma wins, first in row-major order on
/// ties, and its full color is returned.
pub fn estimate_background(i: &Image, t: &TransmissionMap, quantile: f64) -> Result<BackgroundLight> {
    check_same_size(i.dims(), t.dims())?;
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidValue(format!("quantile {quantile} outside (0, 1)")));
    }
    let n = t.data.len();
    let rank = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = t.data.clone();
    sorted.sort_by(f64::total_cmp);
    let t0 = sorted[rank - 1];

    let mut best: Option<(usize, f64)> = None;
    for (p, px) in i.pixels().enumerate() {
        if t.data[p] > t0 {
            continue;
        }
        let lum = luma(px);
        if best.is_none_or(|(_, l)| lum > l) {
            best = Some((p, lum));
        }
    }
    // the argmin of t always satisfies t <= t0
    let (p, _) = best.expect("candidate set contains the minimum");
    Ok(BackgroundLight {
        rgb: i.pixel(p / i.width(), p % i.width()),
    })
}
