//! Dense linear algebra and special functions shared by the models.

mod cholesky;
mod expm;
mod matrix;
mod special;

pub use cholesky::CholeskyFactor;
pub use expm::{matrix_exponential, matrix_exponential_frechet};
pub use matrix::{dot, lu_decompose, DenseMatrix, LuFactor};
pub use special::{digamma, ln_gamma, regularized_gamma_p};
