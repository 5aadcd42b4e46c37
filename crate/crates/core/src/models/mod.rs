//! Stochastic process models with exact likelihoods and scores.
//!
//! Every model works in its own working-parameter coordinates (see
//! [`crate::space`]); scores are gradients with respect to those coordinates.

use alloc::vec::Vec;

use rand::RngCore;

use crate::Result;

mod sis;
mod spatial;
mod toy;

pub use sis::{SisConfig, SisModel};
pub use spatial::{build_covariance, covariance_partials, GpModel, Grid, StpModel};
pub use toy::GaussianLocation;

/// A single draw `x ~ p(x | θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Observed CT-HMM states, one bit-encoded graph state per time point.
    States(Vec<u32>),
    /// Real-valued field (or vector) observation.
    Field(Vec<f64>),
}

impl Observation {
    pub fn as_states(&self) -> Option<&[u32]> {
        match self {
            Observation::States(s) => Some(s),
            Observation::Field(_) => None,
        }
    }

    pub fn as_field(&self) -> Option<&[f64]> {
        match self {
            Observation::Field(f) => Some(f),
            Observation::States(_) => None,
        }
    }
}

/// A stochastic process model: simulator, exact log-likelihood and score.
pub trait StochasticModel {
    fn theta_dim(&self) -> usize;

    /// Shape of the network input produced by [`StochasticModel::encode`].
    fn input_shape(&self) -> Vec<usize>;

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation>;

    fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64>;

    /// `∇_θ log p(x | θ)` in working coordinates.
    fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>>;

    /// Flattened network input for `obs`.
    fn encode(&self, obs: &Observation) -> Vec<f64>;

    /// Log-likelihood of iid observations.
    fn group_log_likelihood(&self, theta: &[f64], group: &[Observation]) -> Result<f64> {
        group.iter().map(|x| self.log_likelihood(theta, x)).sum()
    }

    /// Group log-likelihoods for every `(group, θ)` pair, row-major by group.
    ///
    /// Models override this to share per-θ work (factorizations, transition
    /// matrices) across groups.
    fn grid_log_likelihoods(&self, groups: &[Vec<Observation>], thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(groups.len() * thetas.len());
        for g in groups {
            for t in thetas {
                out.push(self.group_log_likelihood(t, g)?);
            }
        }
        Ok(out)
    }
}
