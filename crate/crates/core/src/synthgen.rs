//! Procedural training corpora: a clean texture, a depth map, per-channel
//! transmissions `exp(−β·d)` and the degraded image from the formation model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imgcore::{resize_plane, Image, Plane};
use crate::physics::{degrade_channels, AttenuationCoefficients, BackgroundLight, TransmissionMap, DEFAULT_EPSILON_T};
use crate::trainer::TrainSample;

/// Source of the clean scene radiance.
#[derive(Clone, Debug, PartialEq)]
pub enum Texture {
    Checkers,
    Gradient,
    ValueNoise,
    /// One of the procedural textures, drawn per sample.
    Mixed,
    /// A fixed image, resampled to the requested size.
    Image(Image),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthModel {
    /// Depth grows linearly from the left column to the right column.
    LinearRamp,
    /// Depth grows with distance from the image center.
    Radial,
    /// Smooth seeded value noise.
    Noise,
}

/// Named attenuation presets (per unit distance, r/g/b).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaterType {
    Clear,
    Coastal,
    Turbid,
}

impl WaterType {
    pub fn coefficients(self) -> AttenuationCoefficients {
        let beta = match self {
            WaterType::Clear => [0.05, 0.02, 0.03],
            WaterType::Coastal => [0.4, 0.1, 0.15],
            WaterType::Turbid => [0.9, 0.35, 0.5],
        };
        AttenuationCoefficients { beta }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub texture: Texture,
    pub depth_model: DepthModel,
    pub depth_min: f64,
    pub depth_max: f64,
    pub beta: AttenuationCoefficients,
    pub background: BackgroundLight,
    pub epsilon_t: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            texture: Texture::Mixed,
            depth_model: DepthModel::Noise,
            depth_min: 0.5,
            depth_max: 10.0,
            beta: WaterType::Coastal.coefficients(),
            background: BackgroundLight {
                rgb: [0.05, 0.45, 0.55],
            },
            epsilon_t: DEFAULT_EPSILON_T,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_min >= 0.0 && self.depth_max >= self.depth_min && self.depth_max.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "depth range [{}, {}] must satisfy 0 <= min <= max",
                self.depth_min, self.depth_max
            )));
        }
        AttenuationCoefficients::new(self.beta.beta[0], self.beta.beta[1], self.beta.beta[2])?;
        BackgroundLight::new(self.background.rgb[0], self.background.rgb[1], self.background.rgb[2])?;
        if !(self.epsilon_t > 0.0 && self.epsilon_t < 1.0) {
            return Err(Error::InvalidValue(format!("epsilon_t {} outside (0, 1)", self.epsilon_t)));
        }
        Ok(())
    }
}

/// Everything known about one generated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub seed: u64,
    pub clean: Image,
    pub depth: Plane,
    /// Per-channel transmission (r, g, b).
    pub transmission: [TransmissionMap; 3],
    pub background: BackgroundLight,
    pub degraded: Image,
}

impl SyntheticSample {
    /// Supervised target: the green-channel transmission.
    pub fn truth_transmission(&self) -> &TransmissionMap {
        &self.transmission[1]
    }

    pub fn train_sample(&self) -> TrainSample {
        TrainSample {
            degraded: self.degraded.clone(),
            truth_t: Some(self.truth_transmission().clone()),
        }
    }
}

/// Bilinearly interpolated lattice of uniform values; output in `[0, 1]`.
fn value_noise(h: usize, w: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cell = cell.max(1);
    let lh = h.div_ceil(cell) + 1;
    let lw = w.div_ceil(cell) + 1;
    let lattice: Vec<f64> = (0..lh * lw).map(|_| rng.gen()).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let y0 = fy.floor() as usize;
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let x0 = fx.floor() as usize;
            let tx = fx - x0 as f64;
            let at = |yy: usize, xx: usize| lattice[yy * lw + xx];
            let top = at(y0, x0) + tx * (at(y0, x0 + 1) - at(y0, x0));
            let bottom = at(y0 + 1, x0) + tx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
            out.push((top + ty * (bottom - top)).clamp(0.0, 1.0));
        }
    }
    out
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

fn procedural_texture(kind: &Texture, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    match kind {
        Texture::Checkers => {
            let cell = rng.gen_range(2..=(h.min(w) / 4).max(3));
            let a = random_color(rng);
            let b = random_color(rng);
            Image::from_fn(h, w, |y, x| if (y / cell + x / cell) % 2 == 0 { a } else { b })
        }
        Texture::Gradient => {
            let a = random_color(rng);
            let b = random_color(rng);
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s, c) = angle.sin_cos();
            let proj = |y: usize, x: usize| x as f64 * c + y as f64 * s;
            let corners = [proj(0, 0), proj(0, w - 1), proj(h - 1, 0), proj(h - 1, w - 1)];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            Image::from_fn(h, w, |y, x| {
                let t = ((proj(y, x) - lo) / span).clamp(0.0, 1.0);
                [0, 1, 2].map(|k| a[k] + t * (b[k] - a[k]))
            })
        }
        Texture::ValueNoise => {
            let cell = rng.gen_range(2..=(h.max(w) / 3).max(3));
            let planes: Vec<Vec<f64>> = (0..3).map(|_| value_noise(h, w, cell, rng)).collect();
            Image::from_fn(h, w, |y, x| [0, 1, 2].map(|k| planes[k][y * w + x]))
        }
        Texture::Mixed => {
            let pick = match rng.gen_range(0..3) {
                0 => Texture::Checkers,
                1 => Texture::Gradient,
                _ => Texture::ValueNoise,
            };
            procedural_texture(&pick, h, w, rng)
        }
        Texture::Image(img) => img.resize_bilinear(h, w),
    }
}

/// Per-pixel scene depth within `[depth_min, depth_max]`.
pub fn make_depth(spec: &SceneSpec, h: usize, w: usize) -> Result<Plane> {
    spec.validate()?;
    let (lo, hi) = (spec.depth_min, spec.depth_max);
    let span = hi - lo;
    let unit: Vec<f64> = match spec.depth_model {
        DepthModel::LinearRamp => (0..h)
            .flat_map(|_| (0..w).map(move |x| if w > 1 { x as f64 / (w - 1) as f64 } else { 0.0 }))
            .collect(),
        DepthModel::Radial => {
            let cy = (h - 1) as f64 / 2.0;
            let cx = (w - 1) as f64 / 2.0;
            let reach = cy.hypot(cx);
            (0..h)
                .flat_map(|y| {
                    (0..w).map(move |x| {
                        if reach > 0.0 {
                            (y as f64 - cy).hypot(x as f64 - cx) / reach
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        }
        DepthModel::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let coarse = 4usize;
            let lattice = value_noise(coarse, coarse, 1, &mut rng);
            resize_plane(&lattice, coarse, coarse, h, w)
        }
    };
    let depth = unit.into_iter().map(|u| (lo + u * span).clamp(lo, hi)).collect();
    Plane::new(h, w, depth)
}

/// `max(exp(−β·d), ε)` per pixel.
pub fn depth_to_transmission(depth: &Plane, beta: f64, epsilon_t: f64) -> Result<TransmissionMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidValue(format!("attenuation {beta} must be nonnegative")));
    }
    if let Some(d) = depth.data().iter().find(|d| **d < 0.0) {
        return Err(Error::InvalidValue(format!("negative depth {d}")));
    }
    let (h, w) = depth.dims();
    TransmissionMap::new(
        h,
        w,
        depth.data().iter().map(|d| (-beta * d).exp().max(epsilon_t).min(1.0)).collect(),
    )
}

/// Generate one sample with its own seed.
pub fn generate_one(spec: &SceneSpec, seed: u64, h: usize, w: usize) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = procedural_texture(&spec.texture, h, w, &mut rng)?;
    let sample_spec = SceneSpec {
        seed,
        ..spec.clone()
    };
    let depth = make_depth(&sample_spec, h, w)?;
    let transmission = [0, 1, 2].map(|c| depth_to_transmission(&depth, spec.beta.beta[c], spec.epsilon_t));
    let [tr, tg, tb] = transmission;
    let transmission = [tr?, tg?, tb?];
    let degraded = degrade_channels(
        &clean,
        [&transmission[0], &transmission[1], &transmission[2]],
        &spec.background,
    )?;
    Ok(SyntheticSample {
        seed,
        clean,
        depth,
        transmission,
        background: spec.background,
        degraded,
    })
}

/// `count` samples; sample `k` is seeded with `spec.seed + k`.
pub fn generate(spec: &SceneSpec, count: usize, h: usize, w: usize) -> Result<Vec<SyntheticSample>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidValue("sample count must be at least 1".into()));
    }
    (0..count as u64)
        .map(|k| generate_one(spec, spec.seed.wrapping_add(k), h, w))
        .collect()
}
