//! Interchangeable log-score sources for downstream inference.

use alloc::vec::Vec;

use crate::models::{Observation, StochasticModel};
use crate::nn::RatioModel;
use crate::Result;

/// A group log-score `Σ_j s(x_j, θ)`, with `s` either the network logit or
/// the exact log-likelihood.
#[derive(Clone, Copy)]
pub enum Evaluator<'a> {
    Nler { net: &'a RatioModel, model: &'a dyn StochasticModel },
    GroundTruth(&'a dyn StochasticModel),
}

impl core::fmt::Debug for Evaluator<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

enum Data {
    /// Trunk features per group and observation.
    Features(Vec<Vec<Vec<f64>>>),
    Observations(Vec<Vec<Observation>>),
}

/// Groups preprocessed once for repeated scoring.
pub struct Prepared<'a> {
    evaluator: Evaluator<'a>,
    data: Data,
}

impl<'a> Evaluator<'a> {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Nler { .. } => "nler",
            Evaluator::GroundTruth(_) => "gt",
        }
    }

    pub fn group_log_score(&self, group: &[Observation], theta: &[f64]) -> Result<f64> {
        self.prepare(&[group.to_vec()])?.score(0, theta)
    }

    pub fn prepare(&self, groups: &[Vec<Observation>]) -> Result<Prepared<'a>> {
        let data = match self {
            Evaluator::Nler { net, model } => Data::Features(
                groups
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|obs| Ok(net.trunk_forward(&model.encode(obs))?.feature().to_vec()))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            Evaluator::GroundTruth(_) => Data::Observations(groups.to_vec()),
        };
        Ok(Prepared { evaluator: *self, data })
    }
}

impl Prepared<'_> {
    pub fn len(&self) -> usize {
        match &self.data {
            Data::Features(f) => f.len(),
            Data::Observations(o) => o.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        self.evaluator
    }

    /// Log-score of group `g` at `theta`.
    pub fn score(&self, g: usize, theta: &[f64]) -> Result<f64> {
        match (&self.data, self.evaluator) {
            (Data::Features(f), Evaluator::Nler { net, .. }) => {
                f[g].iter().map(|feat| Ok(net.head_forward(feat, theta)?.logit())).sum()
            }
            (Data::Observations(o), Evaluator::GroundTruth(model)) => model.group_log_likelihood(theta, &o[g]),
            _ => unreachable!("prepared data always matches its evaluator"),
        }
    }

    /// Scores of every group at every θ, row-major by group.
    pub fn grid(&self, thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        match (&self.data, self.evaluator) {
            (Data::Features(f), Evaluator::Nler { net, .. }) => {
                let mut out = Vec::with_capacity(f.len() * thetas.len());
                for group in f {
                    for theta in thetas {
                        let mut s = 0.0;
                        for feat in group {
                            s += net.head_forward(feat, theta)?.logit();
                        }
                        out.push(s);
                    }
                }
                Ok(out)
            }
            (Data::Observations(o), Evaluator::GroundTruth(model)) => model.grid_log_likelihoods(o, thetas),
            _ => unreachable!("prepared data always matches its evaluator"),
        }
    }
}
