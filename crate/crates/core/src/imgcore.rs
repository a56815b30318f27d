//! Image containers, color conversions and the spatial operators shared by
//! the metrics, the physics model and the data generator.
//!
//! Color images are stored as interleaved RGB in row-major order with every
//! channel in `[0, 1]`. Single-channel data comes in two flavors: [`GrayImage`]
//! (bounded to `[0, 1]`) and [`Plane`] (any finite real, used for gradient
//! magnitudes, depth maps and other derived fields).

use crate::error::{check_min_size, check_same_size, Error, Result};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n - 2`). Valid for offsets up to `n - 1`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!(r >= 0 && r < n, "reflect offset too large for extent {n}");
    r as usize
}

fn check_unit_range(data: &[f64]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidValue(format!(
            "intensity {v} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_extent(height: usize, width: usize, len: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidValue(format!(
            "image extent {height}x{width} must be at least 1x1"
        )));
    }
    if height * width * channels != len {
        return Err(Error::ShapeMismatch(format!(
            "{height}x{width}x{channels} image needs {} values, got {len}",
            height * width * channels
        )));
    }
    Ok(())
}

/// An RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_extent(height, width, data.len(), 3)?;
        check_unit_range(&data)?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    /// Caller guarantees the range invariant.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
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

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Interleaved RGB, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// One channel as a standalone plane.
    pub fn channel(&self, c: usize) -> GrayImage {
        assert!(c < 3);
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn from_channels(r: &GrayImage, g: &GrayImage, b: &GrayImage) -> Result<Self> {
        check_same_size(r.dims(), g.dims())?;
        check_same_size(r.dims(), b.dims())?;
        let data = r
            .data
            .iter()
            .zip(&g.data)
            .zip(&b.data)
            .flat_map(|((&r, &g), &b)| [r, g, b])
            .collect();
        Ok(Self::from_raw(r.height, r.width, data))
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        let channels: Vec<GrayImage> = (0..3)
            .map(|c| resize_bilinear(&self.channel(c), height, width))
            .collect::<Result<_>>()?;
        Self::from_channels(&channels[0], &channels[1], &channels[2])
    }
}

/// Single-channel image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_extent(height, width, data.len(), 1)?;
        check_unit_range(&data)?;
        Ok(Self { height, width, data })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
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

/// Unbounded single-channel field (gradient magnitudes, local statistics,
/// depths). Values must be finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_extent(height, width, data.len(), 1)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite plane value".into()));
        }
        Ok(Self { height, width, data })
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

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// CIELab image (D65 white point). Per-pixel `[L, a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

/// Rec.601 luma written around the green channel so that achromatic pixels
/// map to exactly their own value.
#[inline]
pub(crate) fn luma([r, g, b]: [f64; 3]) -> f64 {
    g + LUMA_WEIGHTS[0] * (r - g) + LUMA_WEIGHTS[2] * (b - g)
}

pub fn to_gray(img: &Image) -> GrayImage {
    let data = img
        .pixels()
        .map(|px| luma(px).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_raw(img.height, img.width, data)
}

// sRGB primaries, D65 reference white.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Convert one sRGB triple to CIELab.
pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_decode);
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn srgb_to_lab(img: &Image) -> LabImage {
    LabImage {
        height: img.height,
        width: img.width,
        data: img.pixels().map(srgb_pixel_to_lab).collect(),
    }
}

/// Horizontal and vertical Sobel responses with reflect padding.
pub(crate) fn sobel_components(data: &[f64], height: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; height * width];
    let mut gy = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let rows = [
                reflect(y as isize - 1, height) * width,
                y * width,
                reflect(y as isize + 1, height) * width,
            ];
            let cols = [reflect(x as isize - 1, width), x, reflect(x as isize + 1, width)];
            let a = |r: usize, c: usize| data[rows[r] + cols[c]];
            // each response is a difference of two identically-ordered sums,
            // so flat neighbourhoods give exactly zero
            gx[y * width + x] =
                (a(0, 2) + 2.0 * a(1, 2) + a(2, 2)) - (a(0, 0) + 2.0 * a(1, 0) + a(2, 0));
            gy[y * width + x] =
                (a(2, 0) + 2.0 * a(2, 1) + a(2, 2)) - (a(0, 0) + 2.0 * a(0, 1) + a(0, 2));
        }
    }
    (gx, gy)
}

/// Pull a per-pixel gradient on the Sobel magnitude back onto the input
/// plane. Pixels with zero magnitude contribute nothing (subgradient 0).
pub(crate) fn sobel_magnitude_backward(
    gx: &[f64],
    gy: &[f64],
    grad_mag: &[f64],
    height: usize,
    width: usize,
) -> Vec<f64> {
    let mut grad = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mag = gx[i].hypot(gy[i]);
            if mag == 0.0 || grad_mag[i] == 0.0 {
                continue;
            }
            let ux = grad_mag[i] * gx[i] / mag;
            let uy = grad_mag[i] * gy[i] / mag;
            for dy in 0..3 {
                let yy = reflect(y as isize + dy as isize - 1, height);
                for dx in 0..3 {
                    let xx = reflect(x as isize + dx as isize - 1, width);
                    grad[yy * width + xx] += ux * SOBEL_X[dy][dx] + uy * SOBEL_Y[dy][dx];
                }
            }
        }
    }
    grad
}

/// Gradient strength `sqrt(Gx² + Gy²)` with 3×3 Sobel kernels. Not clamped:
/// a unit step yields 4.
pub fn sobel_magnitude(img: &GrayImage) -> Result<Plane> {
    check_min_size(img.height, img.width, 3)?;
    let (gx, gy) = sobel_components(&img.data, img.height, img.width);
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    Ok(Plane::from_raw(img.height, img.width, mag))
}

/// Binary dilation by a `(2r+1)²` square. Non-zero input counts as set.
pub fn dilate(mask: &GrayImage, radius: usize) -> GrayImage {
    let (h, w) = mask.dims();
    let r = radius;
    // separable: rows, then columns
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let hit = mask.data[y * w + lo..=y * w + hi].iter().any(|&v| v != 0.0);
            rows[y * w + x] = if hit { 1.0 } else { 0.0 };
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            if (lo..=hi).any(|yy| rows[yy * w + x] != 0.0) {
                out[y * w + x] = 1.0;
            }
        }
    }
    GrayImage::from_raw(h, w, out)
}

/// Half-pixel-centered bilinear sampling, clamped at the edges.
pub(crate) fn resize_plane(
    data: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    let coords = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
        let s = s.clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..dst_w).map(|x| coords(x, src_w, dst_w)).collect();
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        let (y0, y1, fy) = coords(y, src_h, dst_h);
        for &(x0, x1, fx) in &cols {
            let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
            let top = lerp(data[y0 * src_w + x0], data[y0 * src_w + x1], fx);
            let bottom = lerp(data[y1 * src_w + x0], data[y1 * src_w + x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    out
}

pub fn resize_bilinear(img: &GrayImage, height: usize, width: usize) -> Result<GrayImage> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidValue(format!(
            "target extent {height}x{width} must be at least 1x1"
        )));
    }
    let data = resize_plane(&img.data, img.height, img.width, height, width);
    // convex combinations of [0,1] values; clamp away rounding overshoot
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(GrayImage::from_raw(height, width, data))
}
