//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional;
//! unknown or repeated keys are rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aqua_core::synthgen::{DepthModel, SceneSpec, Texture, WaterType};
use aqua_core::trainer::{Phase, TrainConfig};
use aqua_core::{AttenuationCoefficients, BackgroundLight, IqmWeights};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] aqua_core::Error),
}

/// Corpus generation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub texture: Texture,
    /// Replaces the procedural texture when set.
    pub texture_file: Option<PathBuf>,
    pub depth_model: DepthModel,
    pub depth_min: f64,
    pub depth_max: f64,
    pub beta: AttenuationCoefficients,
    pub background: BackgroundLight,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let scene = SceneSpec::default();
        Self {
            count: 10,
            height: 32,
            width: 32,
            texture: scene.texture,
            texture_file: None,
            depth_model: scene.depth_model,
            depth_min: scene.depth_min,
            depth_max: scene.depth_max,
            beta: scene.beta,
            background: scene.background,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthSettings,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::for_phase(Phase::Supervised),
            synth: SynthSettings::default(),
            corpus: None,
            checkpoint: None,
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "phase",
    "epochs",
    "learning_rate",
    "momentum",
    "batch_size",
    "epsilon_t",
    "soft_edge_steepness",
    "background_quantile",
    "weight_contrast",
    "weight_acutance",
    "weight_border_integrity",
    "weight_gray_world",
    "count",
    "height",
    "width",
    "texture",
    "texture_file",
    "depth_model",
    "depth_min",
    "depth_max",
    "water",
    "beta_r",
    "beta_g",
    "beta_b",
    "background_r",
    "background_g",
    "background_b",
    "corpus",
    "checkpoint",
];

fn parse_phase(s: &str) -> Option<Phase> {
    match s {
        "supervised" => Some(Phase::Supervised),
        "unsupervised" => Some(Phase::Unsupervised),
        _ => None,
    }
}

fn parse_texture(s: &str) -> Option<Texture> {
    match s {
        "mixed" => Some(Texture::Mixed),
        "checkers" => Some(Texture::Checkers),
        "gradient" => Some(Texture::Gradient),
        "noise" => Some(Texture::ValueNoise),
        _ => None,
    }
}

fn parse_depth_model(s: &str) -> Option<DepthModel> {
    match s {
        "ramp" => Some(DepthModel::LinearRamp),
        "radial" => Some(DepthModel::Radial),
        "noise" => Some(DepthModel::Noise),
        _ => None,
    }
}

fn parse_water(s: &str) -> Option<WaterType> {
    match s {
        "clear" => Some(WaterType::Clear),
        "coastal" => Some(WaterType::Coastal),
        "turbid" => Some(WaterType::Turbid),
        _ => None,
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        let (mut phase, mut epochs, mut learning_rate) = (None, None, None);
        let mut water = None;
        let mut beta: [Option<f64>; 3] = [None; 3];
        let mut weights = IqmWeights::default().as_array();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            let num = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
            let count = || value.parse::<usize>().map_err(|_| bad());

            match key {
                "seed" => cfg.train.seed = value.parse().map_err(|_| bad())?,
                "phase" => phase = Some(parse_phase(value).ok_or_else(bad)?),
                "epochs" => epochs = Some(count()?),
                "learning_rate" => learning_rate = Some(num()?),
                "momentum" => cfg.train.momentum = num()?,
                "batch_size" => cfg.train.batch_size = count()?,
                "epsilon_t" => cfg.train.epsilon_t = num()?,
                "soft_edge_steepness" => cfg.train.soft_edge_steepness = num()?,
                "background_quantile" => cfg.train.background_quantile = num()?,
                "weight_contrast" => weights[0] = num()?,
                "weight_acutance" => weights[1] = num()?,
                "weight_border_integrity" => weights[2] = num()?,
                "weight_gray_world" => weights[3] = num()?,
                "count" => cfg.synth.count = count()?,
                "height" => cfg.synth.height = count()?,
                "width" => cfg.synth.width = count()?,
                "texture" => cfg.synth.texture = parse_texture(value).ok_or_else(bad)?,
                "texture_file" => cfg.synth.texture_file = Some(PathBuf::from(value)),
                "depth_model" => cfg.synth.depth_model = parse_depth_model(value).ok_or_else(bad)?,
                "depth_min" => cfg.synth.depth_min = num()?,
                "depth_max" => cfg.synth.depth_max = num()?,
                "water" => water = Some(parse_water(value).ok_or_else(bad)?),
                "beta_r" => beta[0] = Some(num()?),
                "beta_g" => beta[1] = Some(num()?),
                "beta_b" => beta[2] = Some(num()?),
                "background_r" => cfg.synth.background.rgb[0] = num()?,
                "background_g" => cfg.synth.background.rgb[1] = num()?,
                "background_b" => cfg.synth.background.rgb[2] = num()?,
                "corpus" => cfg.corpus = Some(PathBuf::from(value)),
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(value)),
                _ => unreachable!("key list and match arms agree"),
            }
        }

        let defaults = TrainConfig::for_phase(phase.unwrap_or(Phase::Supervised));
        cfg.train.phase = defaults.phase;
        cfg.train.epochs = epochs.unwrap_or(defaults.epochs);
        cfg.train.learning_rate = learning_rate.unwrap_or(defaults.learning_rate);

        let base = water.map_or(cfg.synth.beta, WaterType::coefficients).beta;
        let [r, g, b] = [0, 1, 2].map(|c| beta[c].unwrap_or(base[c]));
        cfg.synth.beta = AttenuationCoefficients::new(r, g, b)?;
        let [r, g, b] = cfg.synth.background.rgb;
        cfg.synth.background = BackgroundLight::new(r, g, b)?;
        let [c, a, bi, gw] = weights;
        cfg.train.iqm_weights = IqmWeights::new(c, a, bi, gw)?;

        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate()?;
        self.scene_spec_without_file().validate()?;
        let invalid = |msg: String| Err(ConfigError::Invalid(aqua_core::Error::InvalidValue(msg)));
        let min = aqua_core::network::MIN_INPUT_SIZE;
        if self.synth.count == 0 || self.synth.height < min || self.synth.width < min {
            return invalid(format!(
                "corpus needs count >= 1 and images of at least {min}x{min}"
            ));
        }
        Ok(())
    }

    fn scene_spec_without_file(&self) -> SceneSpec {
        let s = &self.synth;
        SceneSpec {
            texture: s.texture.clone(),
            depth_model: s.depth_model,
            depth_min: s.depth_min,
            depth_max: s.depth_max,
            beta: s.beta,
            background: s.background,
            epsilon_t: self.train.epsilon_t,
            seed: self.train.seed,
        }
    }

    /// Scene description for the generator, loading `texture_file` if set.
    pub fn scene_spec(&self) -> anyhow::Result<SceneSpec> {
        let mut spec = self.scene_spec_without_file();
        if let Some(path) = &self.synth.texture_file {
            spec.texture = Texture::Image(crate::io::read_rgb_png(path)?);
        }
        Ok(spec)
    }
}
