//! Reverse-mode differentiation over dense matrices, and Adam.

mod adam;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var, NORM_EPS};
