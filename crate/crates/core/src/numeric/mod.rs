//! Dense tensors, layer kernels with exact backward rules, a reverse-mode
//! tape, SGD with momentum, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use optim::sgd_step;
pub use params::{Param, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
