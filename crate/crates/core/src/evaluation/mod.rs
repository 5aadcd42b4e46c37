//! Held-out loss metrics and likelihood-based downstream inference, for
//! network and exact evaluators alike.

mod etest;
mod evaluator;
mod ltest;
mod optimize;
mod wilks;

pub use etest::{
    build_etest, etest_metrics, etest_points, infer, ETestReport, ETestSet, Inference, InferenceConfig, Surface,
};
pub use evaluator::{Evaluator, Prepared};
pub use ltest::{build_ltest, ltest_metrics, ltest_permutation, permuted_bce, LTestMetrics};
pub use optimize::{cell_centers, grid_argmax, NelderMead};
pub use wilks::{chi_squared_cdf, chi_squared_quantile};
