//! Image-quality gains used to score a restoration `J` against the degraded
//! input `I`, and the UCIQE colorfulness measure used for evaluation.
//!
//! The hard forms here are what gets reported. [`smooth`] holds the
//! differentiable counterparts used as a training objective.

pub mod smooth;
mod uciqe;

pub use uciqe::{uciqe, UciqeCoefficients};

use crate::error::{check_min_size, check_same_size, Error, Result};
use crate::imgcore::{dilate, reflect, sobel_magnitude, to_gray, GrayImage, Image, Plane};

/// Side of the square window used for local RMS contrast.
pub const CONTRAST_WINDOW: usize = 5;
/// Relative Sobel magnitude above which a pixel counts as an edge.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;
/// Dilation applied to the degraded image's edge map.
pub const DEFAULT_DILATION_RADIUS: usize = 5;

/// Weights of the four quality gains. They must sum to one so the aggregate
/// stays in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IqmWeights {
    pub contrast: f64,
    pub acutance: f64,
    pub border_integrity: f64,
    pub gray_world: f64,
}

impl IqmWeights {
    pub fn new(contrast: f64, acutance: f64, border_integrity: f64, gray_world: f64) -> Result<Self> {
        let w = Self {
            contrast,
            acutance,
            border_integrity,
            gray_world,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidValue(format!(
                "IQM weights must be nonnegative, got {all:?}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue(format!(
                "IQM weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.contrast, self.acutance, self.border_integrity, self.gray_world]
    }
}

impl Default for IqmWeights {
    fn default() -> Self {
        Self {
            contrast: 0.25,
            acutance: 0.45,
            border_integrity: 0.05,
            gray_world: 0.25,
        }
    }
}

/// Raw component gains of one `(I, J)` pair plus the aggregate and the
/// restored image's UCIQE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub q_c: f64,
    pub q_a: f64,
    pub q_bi: f64,
    pub q_g: f64,
    pub iqm: f64,
    pub uciqe: f64,
}

/// Mean and population variance of every reflect-padded `window²`
/// neighbourhood.
pub(crate) fn window_stats(
    data: &[f64],
    height: usize,
    width: usize,
    window: usize,
) -> (Vec<f64>, Vec<f64>) {
    let half = (window / 2) as isize;
    let count = (window * window) as f64;
    let mut means = Vec::with_capacity(data.len());
    let mut vars = Vec::with_capacity(data.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut sum = 0.0;
            for dy in -half..=half {
                let row = reflect(y + dy, height) * width;
                for dx in -half..=half {
                    sum += data[row + reflect(x + dx, width)];
                }
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for dy in -half..=half {
                let row = reflect(y + dy, height) * width;
                for dx in -half..=half {
                    let d = data[row + reflect(x + dx, width)] - mean;
                    sq += d * d;
                }
            }
            means.push(mean);
            vars.push(sq / count);
        }
    }
    (means, vars)
}

/// Per-pixel RMS contrast: standard deviation of the 5×5 neighbourhood.
pub fn local_contrast(img: &GrayImage) -> Result<Plane> {
    check_min_size(img.height(), img.width(), CONTRAST_WINDOW)?;
    let (_, vars) = window_stats(img.data(), img.height(), img.width(), CONTRAST_WINDOW);
    Ok(Plane::from_raw(
        img.height(),
        img.width(),
        vars.into_iter().map(f64::sqrt).collect(),
    ))
}

/// Mean squared local contrast of an image.
fn mean_contrast_energy(img: &GrayImage) -> Result<f64> {
    check_min_size(img.height(), img.width(), CONTRAST_WINDOW)?;
    let (_, vars) = window_stats(img.data(), img.height(), img.width(), CONTRAST_WINDOW);
    Ok(vars.iter().sum::<f64>() / vars.len() as f64)
}

/// `mean(C(J)²) − mean(C(I)²)` on the grayscale versions.
pub fn contrast_gain(i: &Image, j: &Image) -> Result<f64> {
    check_same_size(i.dims(), j.dims())?;
    Ok(mean_contrast_energy(&to_gray(j))? - mean_contrast_energy(&to_gray(i))?)
}

/// Mean Sobel gradient strength.
pub fn acutance(img: &GrayImage) -> Result<f64> {
    Ok(sobel_magnitude(img)?.mean())
}

pub fn acutance_gain(i: &Image, j: &Image) -> Result<f64> {
    check_same_size(i.dims(), j.dims())?;
    Ok(acutance(&to_gray(j))? - acutance(&to_gray(i))?)
}

fn normalized_magnitude(img: &GrayImage) -> Result<Plane> {
    let mag = sobel_magnitude(img)?;
    let max = mag.max();
    if max <= 0.0 {
        return Ok(Plane::from_raw(img.height(), img.width(), vec![0.0; mag.data().len()]));
    }
    let (h, w) = mag.dims();
    Ok(Plane::from_raw(
        h,
        w,
        mag.into_data().into_iter().map(|m| m / max).collect(),
    ))
}

/// Binary edge map: Sobel magnitude relative to its image maximum, above
/// `threshold`.
pub fn edge_map_hard(img: &GrayImage, threshold: f64) -> Result<GrayImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidValue(format!(
            "edge threshold {threshold} outside (0, 1)"
        )));
    }
    let norm = normalized_magnitude(img)?;
    let (h, w) = norm.dims();
    Ok(GrayImage::from_raw(
        h,
        w,
        norm.data()
            .iter()
            .map(|&v| if v > threshold { 1.0 } else { 0.0 })
            .collect(),
    ))
}

/// Dilated edge support of the degraded image.
pub(crate) fn dilated_edges(i: &Image, threshold: f64, radius: usize) -> Result<GrayImage> {
    Ok(dilate(&edge_map_hard(&to_gray(i), threshold)?, radius))
}

/// Fraction of the degraded image's dilated edge support that is still an
/// edge in the restoration. Returns 1 when `I` has no edges at all.
pub fn border_integrity(i: &Image, j: &Image, threshold: f64, dilation_radius: usize) -> Result<f64> {
    check_same_size(i.dims(), j.dims())?;
    let support = dilated_edges(i, threshold, dilation_radius)?;
    let edges_j = edge_map_hard(&to_gray(j), threshold)?;
    let den: f64 = support.data().iter().sum();
    if den == 0.0 {
        return Ok(1.0);
    }
    let num: f64 = edges_j
        .data()
        .iter()
        .zip(support.data())
        .map(|(a, b)| a * b)
        .sum();
    Ok(num / den)
}

/// Border integrity with the restored image's edge detector replaced by a
/// sigmoid of the normalized Sobel magnitude.
pub fn border_integrity_soft(i: &Image, j: &Image, steepness: f64) -> Result<f64> {
    let reference = smooth::IqmReference::new(i, DEFAULT_EDGE_THRESHOLD, DEFAULT_DILATION_RADIUS)?;
    Ok(smooth::border_integrity_soft_with_grad(&reference, j, steepness)?.0)
}

/// Distance of the restoration from the gray-world hypothesis:
/// `1 − (2/n)·Σ(v − 0.5)²` over every pixel and channel.
pub fn gray_world(j: &Image) -> f64 {
    let n = j.data().len() as f64;
    let sq: f64 = j.data().iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
    1.0 - 2.0 * sq / n
}

/// Reported quality of a restoration: raw gains plus the aggregate, where
/// each gain is clamped to `[0, 1]` before weighting.
pub fn iqm_score(i: &Image, j: &Image, w: &IqmWeights) -> Result<(QualityReport, f64)> {
    check_same_size(i.dims(), j.dims())?;
    let q_c = contrast_gain(i, j)?;
    let q_a = acutance_gain(i, j)?;
    let q_bi = border_integrity(i, j, DEFAULT_EDGE_THRESHOLD, DEFAULT_DILATION_RADIUS)?;
    let q_g = gray_world(j);
    let iqm = w.contrast * q_c.clamp(0.0, 1.0)
        + w.acutance * q_a.clamp(0.0, 1.0)
        + w.border_integrity * q_bi.clamp(0.0, 1.0)
        + w.gray_world * q_g.clamp(0.0, 1.0);
    let report = QualityReport {
        q_c,
        q_a,
        q_bi,
        q_g,
        iqm,
        uciqe: uciqe(j, &UciqeCoefficients::default()),
    };
    Ok((report, iqm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
    }

    fn brute_window_std(img: &GrayImage) -> Vec<f64> {
        let (h, w) = img.dims();
        let mut out = Vec::new();
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut vals = Vec::new();
                for yy in y - 2..=y + 2 {
                    for xx in x - 2..=x + 2 {
                        let ry = if yy < 0 { -yy } else if yy >= h as isize { 2 * h as isize - 2 - yy } else { yy };
                        let rx = if xx < 0 { -xx } else if xx >= w as isize { 2 * w as isize - 2 - xx } else { xx };
                        vals.push(img.get(ry as usize, rx as usize));
                    }
                }
                let m = vals.iter().sum::<f64>() / 25.0;
                out.push((vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 25.0).sqrt());
            }
        }
        out
    }

    fn step_image(h: usize, w: usize, at: usize) -> Image {
        Image::from_fn(h, w, |_, x| if x >= at { [1.0; 3] } else { [0.0; 3] }).unwrap()
    }

    #[test]
    fn default_weights_are_valid() {
        let w = IqmWeights::default();
        assert!(w.validate().is_ok());
        assert_eq!(w.as_array(), [0.25, 0.45, 0.05, 0.25]);
        assert!(IqmWeights::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(IqmWeights::new(-0.5, 1.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn contrast_of_constant_is_zero() {
        let img = GrayImage::from_fn(7, 7, |_, _| 0.42).unwrap();
        assert!(local_contrast(&img).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contrast_of_binary_is_bounded() {
        let img = GrayImage::from_fn(9, 9, |y, x| ((y + x) % 2) as f64).unwrap();
        assert!(local_contrast(&img).unwrap().data().iter().all(|&v| v <= 0.5));
    }

    #[test]
    fn contrast_matches_window_oracle() {
        let img = to_gray(&random_image(8, 8, 1));
        let fast = local_contrast(&img).unwrap();
        for (a, b) in fast.data().iter().zip(brute_window_std(&img)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn contrast_rejects_small() {
        let img = GrayImage::from_fn(4, 9, |_, _| 0.0).unwrap();
        assert!(matches!(local_contrast(&img), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn contrast_gain_cases() {
        let i = random_image(8, 8, 2);
        assert_eq!(contrast_gain(&i, &i).unwrap(), 0.0);
        let flat = Image::filled(8, 8, [0.3; 3]).unwrap();
        assert!(contrast_gain(&flat, &i).unwrap() > 0.0);

        // ramp against a doubled ramp
        let ramp = Image::from_fn(8, 10, |_, x| [x as f64 / 20.0; 3]).unwrap();
        let steep = Image::from_fn(8, 10, |_, x| [x as f64 / 10.0; 3]).unwrap();
        let ci = brute_window_std(&to_gray(&ramp));
        let cj = brute_window_std(&to_gray(&steep));
        let expected: f64 = cj.iter().zip(&ci).map(|(a, b)| a * a - b * b).sum::<f64>() / 80.0;
        assert!((contrast_gain(&ramp, &steep).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gains_reject_mismatched_sizes() {
        let a = random_image(8, 8, 3);
        let b = random_image(8, 9, 4);
        assert!(matches!(contrast_gain(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(acutance_gain(&a, &b).is_err());
        assert!(border_integrity(&a, &b, 0.1, 5).is_err());
        assert!(iqm_score(&a, &b, &IqmWeights::default()).is_err());
    }

    #[test]
    fn acutance_of_step() {
        let img = to_gray(&step_image(6, 8, 4));
        // two columns of magnitude 4 over 48 pixels
        assert_eq!(acutance(&img).unwrap(), 4.0 * 12.0 / 48.0);
        let flat = GrayImage::from_fn(6, 8, |_, _| 0.7).unwrap();
        assert_eq!(acutance(&flat).unwrap(), 0.0);
    }

    #[test]
    fn acutance_gain_cases() {
        let i = random_image(8, 8, 5);
        assert_eq!(acutance_gain(&i, &i).unwrap(), 0.0);
        let flat = Image::filled(8, 8, [0.3; 3]).unwrap();
        assert!(acutance_gain(&flat, &i).unwrap() > 0.0);
    }

    #[test]
    fn edge_map_cases() {
        let flat = GrayImage::from_fn(6, 6, |_, _| 0.2).unwrap();
        assert!(edge_map_hard(&flat, 0.5).unwrap().data().iter().all(|&v| v == 0.0));

        let step = to_gray(&step_image(6, 8, 4));
        let edges = edge_map_hard(&step, 0.5).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(edges.get(y, x), if x == 3 || x == 4 { 1.0 } else { 0.0 });
            }
        }
        assert!(edge_map_hard(&step, 1.0).is_err());
    }

    #[test]
    fn border_integrity_cases() {
        let flat = Image::filled(12, 12, [0.5; 3]).unwrap();
        let textured = random_image(12, 12, 6);
        assert_eq!(border_integrity(&flat, &textured, 0.1, 5).unwrap(), 1.0);
        assert_eq!(border_integrity(&textured, &flat, 0.1, 5).unwrap(), 0.0);

        let step = step_image(12, 20, 9);
        // E = columns 8 and 9; dilated by 2 -> columns 6..=11
        let v = border_integrity(&step, &step, 0.1, 2).unwrap();
        assert!((v - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gray_world_anchors() {
        assert_eq!(gray_world(&Image::filled(4, 4, [0.5; 3]).unwrap()), 1.0);
        assert_eq!(gray_world(&Image::filled(4, 4, [0.0; 3]).unwrap()), 0.5);
        assert_eq!(gray_world(&Image::filled(4, 4, [1.0; 3]).unwrap()), 0.5);
    }

    #[test]
    fn iqm_identity_pair() {
        let i = random_image(10, 10, 7);
        let w = IqmWeights::default();
        let (report, score) = iqm_score(&i, &i, &w).unwrap();
        assert_eq!(report.q_c, 0.0);
        assert_eq!(report.q_a, 0.0);
        let expected = w.border_integrity * report.q_bi + w.gray_world * report.q_g;
        assert!((score - expected).abs() < 1e-15);
    }

    #[test]
    fn iqm_single_component() {
        let flat = Image::filled(10, 10, [0.4; 3]).unwrap();
        let j = random_image(10, 10, 8);
        let w = IqmWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let (report, score) = iqm_score(&flat, &j, &w).unwrap();
        assert_eq!(score, report.q_c.clamp(0.0, 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gains_are_antisymmetric(a in 0u64..1000, b in 0u64..1000) {
            let i = random_image(8, 8, a);
            let j = random_image(8, 8, b + 1000);
            prop_assert_eq!(contrast_gain(&i, &j).unwrap(), -contrast_gain(&j, &i).unwrap());
            prop_assert_eq!(acutance_gain(&i, &j).unwrap(), -acutance_gain(&j, &i).unwrap());
        }

        #[test]
        fn bounded_metrics(a in 0u64..1000, b in 0u64..1000) {
            let i = random_image(9, 9, a);
            let j = random_image(9, 9, b + 1000);
            let bi = border_integrity(&i, &j, 0.1, 5).unwrap();
            prop_assert!((0.0..=1.0).contains(&bi));
            let g = gray_world(&j);
            prop_assert!((0.5..=1.0).contains(&g));
            let (_, score) = iqm_score(&i, &j, &IqmWeights::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&score));
        }
    }
}
