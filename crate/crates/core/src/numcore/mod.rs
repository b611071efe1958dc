//! Dense differentiable networks, ADAM, and gradient verification.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod loss;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointBlock,
};
pub use gradcheck::{
    central_difference, grad_check, grad_check_indices, half_squared_norm, relative_error,
    GradCheckReport, FD_STEP,
};
pub use loss::{bce, softmax, softmax_cross_entropy, PROB_CLAMP};
pub use network::{sigmoid, Activation, LayerSpec, Network, ParamGrads, LEAKY_SLOPE};
pub use tensor::Tensor;
