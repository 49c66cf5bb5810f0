//! Minimal differentiable tensor layer: dense matrices, a reverse-mode tape,
//! and named parameters.

mod matrix;
pub mod nn;
mod tape;

pub use matrix::Matrix;
pub use nn::{Bound, ParamStore};
pub use tape::{bce_value, Gradients, Tape, Var};
