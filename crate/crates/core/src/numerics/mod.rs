//! Dense tensors, a reverse-mode tape and a finite-difference oracle.

pub mod functional;
pub mod gradcheck;
mod scalar;
mod tape;
mod tensor;

pub use functional::{binary_cross_entropy, entropy, log_softmax_rows, softmax_rows, PROB_EPS};
pub use gradcheck::{grad_check, grad_check_many, GradCheckReport, DEFAULT_STEP};
pub use scalar::Scalar;
pub use tape::{Axis, Gradients, Tape, Var};
pub use tensor::Tensor;

