//! Stratified simulated datasets.

use alloc::vec::Vec;

use rand::seq::index;

use crate::models::{Observation, StochasticModel};
use crate::rng::{self, streams};
use crate::space::Bounds;
use crate::{Error, Result};

/// Simulated `(x, θ, ∇_θ log p(x | θ))` triples with cached network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub theta_dim: usize,
    pub input_len: usize,
    pub observations: Vec<Observation>,
    /// `N × d`, row-major.
    pub thetas: Vec<f64>,
    /// `N × d`, row-major.
    pub scores: Vec<f64>,
    /// `N × input_len`, row-major.
    pub inputs: Vec<f64>,
}

impl Dataset {
    /// Assembles a dataset from parts, encoding inputs with `model`.
    pub fn from_parts(
        model: &dyn StochasticModel,
        seed: u64,
        observations: Vec<Observation>,
        thetas: Vec<f64>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        let d = model.theta_dim();
        let n = observations.len();
        if thetas.len() != n * d || scores.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, actual: thetas.len().min(scores.len()) });
        }
        let input_len = model.input_shape().iter().product();
        let mut inputs = Vec::with_capacity(n * input_len);
        for obs in &observations {
            let x = model.encode(obs);
            if x.len() != input_len {
                return Err(Error::DimensionMismatch { expected: input_len, actual: x.len() });
            }
            inputs.extend(x);
        }
        Ok(Self { seed, theta_dim: d, input_len, observations, thetas, scores, inputs })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.theta_dim..(i + 1) * self.theta_dim]
    }

    pub fn score(&self, i: usize) -> &[f64] {
        &self.scores[i * self.theta_dim..(i + 1) * self.theta_dim]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }
}

/// Smallest `m` with `m^d ≥ n`.
pub fn cells_per_dim(n: usize, d: usize) -> usize {
    let mut m = 1usize;
    while m.checked_pow(d as u32).is_some_and(|c| c < n) {
        m += 1;
    }
    m
}

/// θ values from `n` distinct cells of the `m^d` grid over `bounds`, one
/// uniform draw per cell.
pub fn stratified_thetas(bounds: &Bounds, n: usize, seed: u64) -> Vec<f64> {
    let d = bounds.dim();
    let m = cells_per_dim(n, d);
    let total = m.pow(d as u32);
    let mut r = rng::stream(seed, streams::THETA);
    let cells = index::sample(&mut r, total, n);
    let mut thetas = Vec::with_capacity(n * d);
    for cell in cells.iter() {
        let mut rest = cell;
        for k in 0..d {
            let idx = rest % m;
            rest /= m;
            let u: f64 = rand::Rng::random(&mut r);
            thetas.push(bounds.low[k] + (idx as f64 + u) / m as f64 * bounds.width(k));
        }
    }
    thetas
}

/// Simulates one observation per θ (example `i` uses simulation stream
/// `i`) and stores its exact score.
pub fn simulate_at(model: &dyn StochasticModel, thetas: Vec<f64>, seed: u64) -> Result<Dataset> {
    let d = model.theta_dim();
    let n = thetas.len() / d;
    let mut observations = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n * d);
    for i in 0..n {
        let theta = &thetas[i * d..(i + 1) * d];
        let mut r = rng::stream(seed, streams::SIMULATION_BASE + i as u64);
        let obs = model.simulate(theta, &mut r)?;
        scores.extend(model.score(theta, &obs)?);
        observations.push(obs);
    }
    Dataset::from_parts(model, seed, observations, thetas, scores)
}

/// Stratified training set of size `n` over `bounds`.
pub fn generate_dataset(model: &dyn StochasticModel, bounds: &Bounds, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    if bounds.dim() != model.theta_dim() {
        return Err(Error::DimensionMismatch { expected: model.theta_dim(), actual: bounds.dim() });
    }
    simulate_at(model, stratified_thetas(bounds, n, seed), seed)
}
