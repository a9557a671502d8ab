//! Minimal dense-tensor library: reverse-mode autodiff, MLPs, Adam, and the
//! probability primitives the agents need. Everything is 64-bit floats;
//! training runs here are tiny, so reproducibility beats speed.

pub mod adam;
pub mod dist;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use mlp::{Activation, Mlp, MlpHandle};
pub use tape::{Grads, Tape, Tx};
pub use tensor::Tensor;
