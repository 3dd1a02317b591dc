//! Tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{multi_head_attention, AttentionParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, NamedTensor};
pub use tape::{Gradients, Padding, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
