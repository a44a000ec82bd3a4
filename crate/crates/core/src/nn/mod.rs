//! Dense tensors with reverse-mode differentiation, Xavier initialization
//! and the Adam optimizer.

mod adam;
mod init;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON, DEFAULT_LR};
pub use init::{seeded_rng, xavier_init, xavier_uniform, SeededRng};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
