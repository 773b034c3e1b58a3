//! Small differentiable engine: a matrix tape, dense and batch-norm layers,
//! dropout and Adam.

pub mod adam;
pub mod layers;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use layers::{dropout_mask, softmax, BatchNormState, BatchStats, DenseLayer, Mode};
pub use tape::{log_softmax_rows, softmax_rows, Gradients, Tape, Var};
