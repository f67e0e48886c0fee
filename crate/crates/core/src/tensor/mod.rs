//! Dense matrices, reverse-mode autodiff, RMSProp and checkpoints.

pub mod checkpoint;
mod matrix;
mod optim;
mod tape;

pub use checkpoint::Checkpoint;
pub use matrix::Matrix;
pub use optim::{clip_global_norm, global_norm, RmsProp, RmsPropState};
pub use tape::{softmax, Axis, Tape, Var};
