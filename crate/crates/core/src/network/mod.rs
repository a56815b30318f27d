//! Transmission-estimation network with hand-written backward passes.
//!
//! conv1 (16 × 5×5) → maxout in groups of 4 → three parallel conv2 banks
//! (16 × 3×3, 5×5, 7×7) concatenated → 7×7 max-pool → conv3 (6×6, one map)
//! → `min(max(z, 0), 1)`.

mod checkpoint;
mod layers;
mod model;
mod tensor;

pub use checkpoint::{decode_params, encode_params, load_params, save_params, FORMAT_VERSION, MAGIC};
pub use layers::{
    conv2d_backward, conv2d_forward, maxout_backward, maxout_forward, maxpool_backward,
    maxpool_forward, ConvGrads,
};
pub use model::{
    backward, backward_params, forward, image_tensor, ConvLayer, ForwardTrace, ModelParams,
    CONV1_FILTERS, CONV1_SIZE, CONV2_FILTERS, CONV2_SIZES, CONV3_SIZE, MAXOUT_GROUP,
    MIN_INPUT_SIZE, POOL_WINDOW,
};
pub use tensor::Tensor;
