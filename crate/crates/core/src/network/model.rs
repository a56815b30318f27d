use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv2d_backward, conv2d_forward, maxout_backward, maxout_forward, maxpool_backward,
    maxpool_forward,
};
use super::tensor::Tensor;
use crate::error::{check_min_size, Error, Result};
use crate::imgcore::Image;
use crate::physics::TransmissionMap;

pub const CONV1_FILTERS: usize = 16;
pub const CONV1_SIZE: usize = 5;
pub const MAXOUT_GROUP: usize = 4;
pub const CONV2_SIZES: [usize; 3] = [3, 5, 7];
pub const CONV2_FILTERS: usize = 16;
pub const CONV3_SIZE: usize = 6;
pub const POOL_WINDOW: usize = 7;
pub const MIN_INPUT_SIZE: usize = 16;

const MAXOUT_MAPS: usize = CONV1_FILTERS / MAXOUT_GROUP;
const CONCAT_MAPS: usize = CONV2_FILTERS * CONV2_SIZES.len();

/// Kernels `[kh, kw, in, out]` and one bias per output map.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(size: usize, cin: usize, cout: usize) -> Self {
        Self {
            kernels: Tensor::zeros(vec![size, size, cin, cout]),
            bias: vec![0.0; cout],
        }
    }

    fn glorot(size: usize, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (size * size * cin) as f64;
        let fan_out = (size * size * cout) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let n = size * size * cin * cout;
        let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self {
            kernels: Tensor::new(vec![size, size, cin, cout], data).expect("shape matches"),
            bias: vec![0.0; cout],
        }
    }

    fn len(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
}

/// All trainable parameters: conv1 (16 × 5×5×3), three conv2 banks of 16
/// filters (3×3, 5×5, 7×7 over the 4 maxout maps) and a single 6×6 conv3
/// filter over the 48 pooled maps.
///
/// Also used as the container for parameter gradients and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub conv1: ConvLayer,
    pub conv2: [ConvLayer; 3],
    pub conv3: ConvLayer,
}

impl ModelParams {
    pub fn zeros() -> Self {
        Self {
            conv1: ConvLayer::zeros(CONV1_SIZE, 3, CONV1_FILTERS),
            conv2: CONV2_SIZES.map(|k| ConvLayer::zeros(k, MAXOUT_MAPS, CONV2_FILTERS)),
            conv3: ConvLayer::zeros(CONV3_SIZE, CONCAT_MAPS, 1),
        }
    }

    /// Glorot-uniform kernels, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = ConvLayer::glorot(CONV1_SIZE, 3, CONV1_FILTERS, &mut rng);
        let conv2 = CONV2_SIZES.map(|k| ConvLayer::glorot(k, MAXOUT_MAPS, CONV2_FILTERS, &mut rng));
        let conv3 = ConvLayer::glorot(CONV3_SIZE, CONCAT_MAPS, 1, &mut rng);
        Self { conv1, conv2, conv3 }
    }

    /// Layers in canonical order: conv1, conv2 (3×3, 5×5, 7×7), conv3.
    pub fn layers(&self) -> [&ConvLayer; 5] {
        [&self.conv1, &self.conv2[0], &self.conv2[1], &self.conv2[2], &self.conv3]
    }

    pub fn layers_mut(&mut self) -> [&mut ConvLayer; 5] {
        let [a, b, c] = &mut self.conv2;
        [&mut self.conv1, a, b, c, &mut self.conv3]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.len()).sum()
    }

    /// Parameter slices in canonical order (kernels then bias, per layer).
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.kernels.data(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.kernels.data_mut(), l.bias.as_mut_slice()])
    }

    /// Flat-index access in canonical order.
    pub fn get(&self, index: usize) -> f64 {
        let mut i = index;
        for s in self.slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let mut i = index;
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Which layer (0..5) a flat index belongs to.
    pub fn layer_of(&self, index: usize) -> usize {
        let mut i = index;
        for (k, l) in self.layers().iter().enumerate() {
            if i < l.len() {
                return k;
            }
            i -= l.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha · other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.slices_mut() {
            for v in s {
                *v *= alpha;
            }
        }
    }
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub conv1: Tensor,
    pub maxout: Tensor,
    pub maxout_argmax: Vec<u8>,
    pub conv2: Tensor,
    pub pooled: Tensor,
    pub pool_argmax: Vec<u32>,
    /// conv3 output before the saturating activation.
    pub pre_activation: Vec<f64>,
}

impl ForwardTrace {
    pub fn dims(&self) -> (usize, usize) {
        (self.input.shape()[0], self.input.shape()[1])
    }
}

fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    let (h, w, _) = parts[0].hwc()?;
    let total: usize = parts.iter().map(|p| p.shape()[2]).sum();
    let mut out = Vec::with_capacity(h * w * total);
    for px in 0..h * w {
        for p in parts {
            let c = p.shape()[2];
            out.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::new(vec![h, w, total], out)
}

fn split_channels(t: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (h, w, c) = t.hwc()?;
    let mut parts: Vec<Vec<f64>> = widths.iter().map(|k| Vec::with_capacity(h * w * k)).collect();
    for px in t.data().chunks_exact(c) {
        let mut at = 0;
        for (part, &k) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&px[at..at + k]);
            at += k;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &k)| Tensor::new(vec![h, w, k], d))
        .collect()
}

pub fn image_tensor(img: &Image) -> Tensor {
    Tensor::new(vec![img.height(), img.width(), 3], img.data().to_vec()).expect("RGB layout")
}

/// Estimate a transmission map. The output is `min(max(z, 0), 1)` of the
/// conv3 response, so it may contain exact zeros.
pub fn forward(img: &Image, params: &ModelParams) -> Result<(TransmissionMap, ForwardTrace)> {
    let (h, w) = img.dims();
    check_min_size(h, w, MIN_INPUT_SIZE)?;
    let input = image_tensor(img);

    let conv1 = conv2d_forward(&input, &params.conv1.kernels, &params.conv1.bias)?;
    let (maxout, maxout_argmax) = maxout_forward(&conv1, MAXOUT_GROUP)?;
    let banks = params
        .conv2
        .iter()
        .map(|l| conv2d_forward(&maxout, &l.kernels, &l.bias))
        .collect::<Result<Vec<_>>>()?;
    let conv2 = concat_channels(&banks)?;
    let (pooled, pool_argmax) = maxpool_forward(&conv2, POOL_WINDOW)?;
    let conv3 = conv2d_forward(&pooled, &params.conv3.kernels, &params.conv3.bias)?;
    let pre_activation = conv3.into_data();

    let t = pre_activation.iter().map(|z| z.clamp(0.0, 1.0)).collect();
    let trace = ForwardTrace {
        input,
        conv1,
        maxout,
        maxout_argmax,
        conv2,
        pooled,
        pool_argmax,
        pre_activation,
    };
    Ok((TransmissionMap::from_raw(h, w, t), trace))
}

/// Gradient of the saturating output: open on `(0, 1]`.
fn output_gate(z: f64) -> f64 {
    if z > 0.0 && z <= 1.0 {
        1.0
    } else {
        0.0
    }
}

fn backward_impl(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_t: &[f64],
    want_input: bool,
) -> Result<(ModelParams, Option<Tensor>)> {
    let (h, w) = trace.dims();
    if grad_t.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} values for a {h}x{w} trace",
            grad_t.len()
        )));
    }
    let d_z3 = Tensor::new(
        vec![h, w, 1],
        grad_t
            .iter()
            .zip(&trace.pre_activation)
            .map(|(g, &z)| g * output_gate(z))
            .collect(),
    )?;

    let g3 = conv2d_backward(&trace.pooled, &params.conv3.kernels, &d_z3, true)?;
    let d_pooled = g3.input.expect("requested");
    let d_conv2 = maxpool_backward(&d_pooled, &trace.pool_argmax)?;
    let d_banks = split_channels(&d_conv2, &[CONV2_FILTERS; 3])?;

    let mut d_maxout = Tensor::zeros(trace.maxout.shape().to_vec());
    let mut bank_grads = Vec::with_capacity(3);
    for (layer, d_bank) in params.conv2.iter().zip(&d_banks) {
        let g = conv2d_backward(&trace.maxout, &layer.kernels, d_bank, true)?;
        for (acc, v) in d_maxout.data_mut().iter_mut().zip(g.input.as_ref().expect("requested").data()) {
            *acc += v;
        }
        bank_grads.push(ConvLayer {
            kernels: g.kernels,
            bias: g.bias,
        });
    }

    let d_conv1 = maxout_backward(&d_maxout, &trace.maxout_argmax, MAXOUT_GROUP)?;
    let g1 = conv2d_backward(&trace.input, &params.conv1.kernels, &d_conv1, want_input)?;

    let [b0, b1, b2]: [ConvLayer; 3] = bank_grads.try_into().expect("three banks");
    let grads = ModelParams {
        conv1: ConvLayer {
            kernels: g1.kernels,
            bias: g1.bias,
        },
        conv2: [b0, b1, b2],
        conv3: ConvLayer {
            kernels: g3.kernels,
            bias: g3.bias,
        },
    };
    Ok((grads, g1.input))
}

/// Reverse-mode pass: gradients of a scalar loss w.r.t. every parameter and
/// the input image, given `grad_out = ∂loss/∂t` as an `[h, w, 1]` tensor.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_out: &Tensor,
) -> Result<(ModelParams, Tensor)> {
    let (h, w) = trace.dims();
    if grad_out.shape() != [h, w, 1] && grad_out.shape() != [h, w] {
        return Err(Error::ShapeMismatch(format!(
            "gradient shape {:?} does not match trace {h}x{w}",
            grad_out.shape()
        )));
    }
    let (grads, input) = backward_impl(params, trace, grad_out.data(), true)?;
    Ok((grads, input.expect("requested")))
}

/// Parameter gradients only; skips the input-gradient convolution.
pub fn backward_params(params: &ModelParams, trace: &ForwardTrace, grad_t: &[f64]) -> Result<ModelParams> {
    Ok(backward_impl(params, trace, grad_t, false)?.0)
}
