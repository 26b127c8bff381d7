//! Dense linear algebra, special functions, sampling, gradients and optimizers.

mod autodiff;
mod gradcheck;
mod matrix;
mod optim;
mod random;
mod sparse;
pub mod special;

pub use autodiff::{Gradients, Tape, Var};
pub use autodiff::{sigmoid, softplus};
pub use gradcheck::{analytic_gradients, compare_gradients, grad_check};
pub use matrix::Matrix;
pub use optim::{AdamConfig, Param, ParamStore};
pub use random::{sample_gamma, sample_gamma_ln, RngState, Stream};
pub use sparse::CsrMatrix;
pub use special::{digamma, gamma_cdf, gamma_cdf_shape_derivative, log_gamma, trigamma};
