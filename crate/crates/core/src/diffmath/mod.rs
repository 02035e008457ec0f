//! Dense matrices, a reverse-mode tape, Adam, and gradient checking.

mod adam;
mod gradcheck;
mod matrix;
mod standardize;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use matrix::Matrix;
pub use standardize::{column_standardize, StandardizeWarning, Standardized};
pub use tape::{sigmoid, Gradients, OpKind, Tape, Var};
