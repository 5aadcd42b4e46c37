//! Loss metrics on a held-out set with θ uniform over the base box.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::models::StochasticModel;
use crate::nn::RatioModel;
use crate::rng::{self, streams};
use crate::space::Bounds;
use crate::training::{bce_term, calibrate_on, score_mse, simulate_at, Dataset, FdConfig};
use crate::Result;

/// `m` pairs with θ uniform over `bounds` (no stratification).
pub fn build_ltest(model: &dyn StochasticModel, bounds: &Bounds, m: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::stream(seed, streams::THETA);
    let mut thetas = Vec::with_capacity(m * bounds.dim());
    for _ in 0..m {
        for k in 0..bounds.dim() {
            thetas.push(r.random_range(bounds.low[k]..bounds.high[k]));
        }
    }
    simulate_at(model, thetas, seed)
}

/// The set's fixed permutation for the Y=0 pairs.
pub fn ltest_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, streams::LTEST_PAIRING));
    p
}

/// Mean BCE of an arbitrary logit `f(i, θ)` for example `i`'s input.
pub fn permuted_bce<F>(set: &Dataset, permutation: &[usize], mut logit: F) -> Result<f64>
where
    F: FnMut(usize, &[f64]) -> Result<f64>,
{
    let mut total = 0.0;
    for i in 0..set.len() {
        total += bce_term(logit(i, set.theta(i))?, 1.0) + bce_term(logit(i, set.theta(permutation[i]))?, 0.0);
    }
    Ok(total / (2 * set.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LTestMetrics {
    pub bce: f64,
    /// Per working coordinate.
    pub score_mse: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// BCE and FD-score MSE of `net`, with ε recalibrated on the set.
pub fn ltest_metrics(net: &RatioModel, set: &Dataset, fd: &FdConfig) -> Result<LTestMetrics> {
    let perm = ltest_permutation(set.len(), set.seed);
    let bce = permuted_bce(set, &perm, |i, theta| {
        // one trunk per call keeps this simple; the set is small
        net.forward(set.input(i), theta)
    })?;
    let fd = calibrate_on(net, set, 64, fd)?;
    let score_mse = score_mse(net, set, &fd.epsilon)?;
    Ok(LTestMetrics { bce, score_mse, epsilon: fd.epsilon })
}
