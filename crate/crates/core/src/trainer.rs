//! Two-phase training: supervised regression onto reference transmission
//! maps, then unsupervised fine-tuning that maximizes the smooth quality score
//! of the restored image.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_same_size, Error, Result};
use crate::imgcore::Image;
use crate::metrics::smooth::{smooth_iqm, IqmReference};
use crate::metrics::{IqmWeights, DEFAULT_DILATION_RADIUS, DEFAULT_EDGE_THRESHOLD};
use crate::network::{backward_params, forward, ModelParams};
use crate::physics::{
    estimate_background, restore_unclamped, TransmissionMap, DEFAULT_BACKGROUND_QUANTILE, DEFAULT_EPSILON_T,
};

pub const DEFAULT_SOFT_EDGE_STEEPNESS: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Supervised,
    Unsupervised,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub iqm_weights: IqmWeights,
    pub epsilon_t: f64,
    pub soft_edge_steepness: f64,
    pub background_quantile: f64,
}

impl TrainConfig {
    /// Defaults for the given phase.
    pub fn for_phase(phase: Phase) -> Self {
        let (epochs, learning_rate) = match phase {
            Phase::Supervised => (1500, 1e-3),
            Phase::Unsupervised => (1180, 1e-5),
        };
        Self {
            phase,
            epochs,
            learning_rate,
            momentum: 0.9,
            batch_size: 8,
            seed: 0,
            iqm_weights: IqmWeights::default(),
            epsilon_t: DEFAULT_EPSILON_T,
            soft_edge_steepness: DEFAULT_SOFT_EDGE_STEEPNESS,
            background_quantile: DEFAULT_BACKGROUND_QUANTILE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidValue(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.epsilon_t > 0.0 && self.epsilon_t < 1.0) {
            return bad(format!("epsilon_t {} outside (0, 1)", self.epsilon_t));
        }
        if !(self.soft_edge_steepness > 0.0 && self.soft_edge_steepness.is_finite()) {
            return bad(format!("steepness {} must be positive", self.soft_edge_steepness));
        }
        if !(self.background_quantile > 0.0 && self.background_quantile < 1.0) {
            return bad(format!("quantile {} outside (0, 1)", self.background_quantile));
        }
        self.iqm_weights.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub degraded: Image,
    pub truth_t: Option<TransmissionMap>,
}

impl TrainSample {
    pub fn new(degraded: Image, truth_t: Option<TransmissionMap>) -> Result<Self> {
        if let Some(t) = &truth_t {
            check_same_size(degraded.dims(), t.dims())?;
        }
        Ok(Self { degraded, truth_t })
    }
}

/// Mean squared error and its gradient `2(pred − truth)/n`.
pub fn mse_transmission_loss(pred: &TransmissionMap, truth: &TransmissionMap) -> Result<(f64, Vec<f64>)> {
    check_same_size(truth.dims(), pred.dims())?;
    let n = pred.data().len() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(truth.data()).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.into_iter().map(|d| 2.0 * d / n).collect()))
}

/// `1 − smooth IQM(i, j)` and its gradient w.r.t. `j`.
pub fn iqm_loss(i: &Image, j: &Image, weights: &IqmWeights, steepness: f64) -> Result<(f64, Vec<f64>)> {
    let reference = IqmReference::new(i, DEFAULT_EDGE_THRESHOLD, DEFAULT_DILATION_RADIUS)?;
    reference_iqm_loss(&reference, j, weights, steepness)
}

fn reference_iqm_loss(
    reference: &IqmReference,
    j: &Image,
    weights: &IqmWeights,
    steepness: f64,
) -> Result<(f64, Vec<f64>)> {
    let (_, score, grad) = smooth_iqm(reference, j, weights, steepness)?;
    Ok((1.0 - score, grad.into_iter().map(|g| -g).collect()))
}

/// Stochastic gradient descent with classical momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: ModelParams,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: ModelParams::zeros(),
        }
    }

    /// `v ← μ·v − lr·g; p ← p + v`.
    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.velocity.scale(self.momentum);
        self.velocity.add_scaled(-self.learning_rate, grad);
        params.add_scaled(1.0, &self.velocity);
    }

    pub fn velocity(&self) -> &ModelParams {
        &self.velocity
    }
}

/// Supervised loss and parameter gradient for one sample.
pub fn supervised_loss_and_grad(
    params: &ModelParams,
    degraded: &Image,
    truth: &TransmissionMap,
) -> Result<(f64, ModelParams)> {
    let (pred, trace) = forward(degraded, params)?;
    let (loss, grad_t) = mse_transmission_loss(&pred, truth)?;
    Ok((loss, backward_params(params, &trace, &grad_t)?))
}

/// Restore `i` with the network's transmission, using the same constants as
/// unsupervised training.
pub fn restore_with_model(params: &ModelParams, i: &Image, config: &TrainConfig) -> Result<(Image, TransmissionMap)> {
    let (t, _) = forward(i, params)?;
    let b = estimate_background(i, &t, config.background_quantile)?;
    let j = crate::physics::restore(i, &t, &b, config.epsilon_t)?;
    Ok((j, t))
}

/// Loss `1 − smooth IQM(I, J(θ))` through network, background selection
/// (held constant), restoration and clamping, with its parameter gradient.
pub fn unsupervised_loss_and_grad(
    params: &ModelParams,
    i: &Image,
    reference: &IqmReference,
    config: &TrainConfig,
) -> Result<(f64, ModelParams)> {
    let (t, trace) = forward(i, params)?;
    let b = estimate_background(i, &t, config.background_quantile)?;
    let raw = restore_unclamped(i.data(), t.data(), &b, config.epsilon_t);
    let j = Image::new(i.height(), i.width(), raw.iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
    let (loss, grad_j) = reference_iqm_loss(reference, &j, &config.iqm_weights, config.soft_edge_steepness)?;

    let grad_t: Vec<f64> = t
        .data()
        .iter()
        .enumerate()
        .map(|(p, &tv)| {
            if tv <= config.epsilon_t {
                return 0.0;
            }
            (0..3)
                .filter(|&c| (0.0..=1.0).contains(&raw[3 * p + c]))
                .map(|c| grad_j[3 * p + c] * -(i.data()[3 * p + c] - b.rgb[c]) / (tv * tv))
                .sum()
        })
        .collect();
    Ok((loss, backward_params(params, &trace, &grad_t)?))
}

fn check_dataset(dataset: &[TrainSample]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Minibatch SGD loop shared by both phases. `sample_grad` returns the loss
/// and gradient of one sample; the curve holds the per-epoch mean loss.
fn run_epochs(
    mut model: ModelParams,
    count: usize,
    config: &TrainConfig,
    mut sample_grad: impl FnMut(&ModelParams, usize) -> Result<(f64, ModelParams)>,
) -> Result<(ModelParams, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(config.learning_rate, config.momentum);
    let mut order: Vec<usize> = (0..count).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = ModelParams::zeros();
            for &k in batch {
                let (loss, g) = sample_grad(&model, k)?;
                total += loss;
                grad.add_scaled(1.0, &g);
            }
            grad.scale(1.0 / batch.len() as f64);
            sgd.step(&mut model, &grad);
        }
        if !model.is_finite() {
            return Err(Error::InvalidValue(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        let mean = total / count as f64;
        log::debug!("epoch {} mean loss {mean:.6}", epoch + 1);
        curve.push(mean);
    }
    Ok((model, curve))
}

/// Regress the network output onto each sample's reference transmission.
/// Returns the trained model and the per-epoch mean MSE.
pub fn train_supervised(
    model: ModelParams,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    config.validate()?;
    check_dataset(dataset)?;
    let truths = dataset
        .iter()
        .enumerate()
        .map(|(k, s)| s.truth_t.as_ref().ok_or(Error::MissingTruth(k)))
        .collect::<Result<Vec<_>>>()?;
    run_epochs(model, dataset.len(), config, |params, k| {
        supervised_loss_and_grad(params, &dataset[k].degraded, truths[k])
    })
}

/// Maximize the smooth quality score of each restored image. Reference
/// transmissions are ignored. Returns the trained model and the per-epoch
/// mean smooth score (evaluated before each update).
pub fn train_unsupervised(
    model: ModelParams,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    config.validate()?;
    check_dataset(dataset)?;
    let references = dataset
        .iter()
        .map(|s| IqmReference::new(&s.degraded, DEFAULT_EDGE_THRESHOLD, DEFAULT_DILATION_RADIUS))
        .collect::<Result<Vec<_>>>()?;
    let (model, losses) = run_epochs(model, dataset.len(), config, |params, k| {
        unsupervised_loss_and_grad(params, &dataset[k].degraded, &references[k], config)
    })?;
    Ok((model, losses.into_iter().map(|l| 1.0 - l).collect()))
}
