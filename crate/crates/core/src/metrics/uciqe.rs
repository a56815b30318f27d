use crate::imgcore::{srgb_to_lab, Image};

/// Weights of chroma spread, luminance contrast and mean saturation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UciqeCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for UciqeCoefficients {
    fn default() -> Self {
        Self {
            c1: 0.4680,
            c2: 0.2745,
            c3: 0.2576,
        }
    }
}

/// Welford running mean/variance; exact zero variance for constant input.
fn population_std(values: impl Iterator<Item = f64>) -> f64 {
    let mut count = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        count += 1.0;
        let delta = v - mean;
        mean += delta / count;
        m2 += delta * (v - mean);
    }
    if count == 0.0 {
        0.0
    } else {
        (m2 / count).sqrt()
    }
}

/// Linear-interpolated percentile of sorted data, `p` in `[0, 1]`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn hsv_saturation([r, g, b]: [f64; 3]) -> f64 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max == 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Underwater color image quality evaluation:
/// `c1·σ_chroma + c2·(L₉₉ − L₁) + c3·mean(saturation)`.
///
/// Chroma and lightness are in raw CIELab units, so scores are not
/// normalized to `[0, 1]`.
pub fn uciqe(img: &Image, c: &UciqeCoefficients) -> f64 {
    let lab = srgb_to_lab(img);
    let chroma_std = population_std(lab.pixels().iter().map(|[_, a, b]| a.hypot(*b)));

    let mut lightness: Vec<f64> = lab.pixels().iter().map(|p| p[0]).collect();
    lightness.sort_by(f64::total_cmp);
    let contrast = percentile(&lightness, 0.99) - percentile(&lightness, 0.01);

    let saturation =
        img.pixels().map(hsv_saturation).sum::<f64>() / img.pixel_count() as f64;

    c.c1 * chroma_std + c.c2 * contrast + c.c3 * saturation
}
