//! Minimal tensor core with hand-wired reverse-mode gradients, and the
//! U-Net assembly with a mask input channel and masked loss.
//!
//! Everything is generic over the scalar type: training runs in f32, the
//! finite-difference gradient harness instantiates f64.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod tensor;
pub mod unet;

pub use checkpoint::{checkpoint_read, checkpoint_write};
pub use tensor::{Scalar, Tensor};
pub use unet::{init_params, unet_backward, unet_forward, ModelParams, UNetConfig};
