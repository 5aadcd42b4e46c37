//! One-dimensional Gaussian location model with a closed-form
//! likelihood-to-evidence ratio, used to check ratio consistency.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::SQRT_2;
#[allow(unused_imports)]
use num_traits::Float as _;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Observation, StochasticModel};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `x ~ N(θ, 1)` with `θ ~ U[low, high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLocation {
    pub low: f64,
    pub high: f64,
}

impl Default for GaussianLocation {
    fn default() -> Self {
        Self { low: -2.0, high: 2.0 }
    }
}

/// `P(Z > z)` for standard normal `Z`.
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl GaussianLocation {
    fn point(obs: &Observation) -> Result<f64> {
        match obs.as_field() {
            Some([x]) => Ok(*x),
            _ => Err(Error::InvalidArgument("toy model expects a single real".into())),
        }
    }

    pub fn log_density(theta: f64, x: f64) -> f64 {
        -LN_SQRT_2PI - 0.5 * (x - theta) * (x - theta)
    }

    /// `log p(x)` under the uniform design over `[low, high]`.
    pub fn log_evidence(&self, x: f64) -> f64 {
        let mid = 0.5 * (self.low + self.high);
        // difference of upper tails on the right, lower tails on the left
        let mass = if x > mid {
            upper_tail(x - self.high) - upper_tail(x - self.low)
        } else {
            upper_tail(self.low - x) - upper_tail(self.high - x)
        };
        (mass / (self.high - self.low)).ln()
    }

    /// `log p(x | θ) − log p(x)`, the optimal classifier logit.
    pub fn log_ratio(&self, theta: f64, x: f64) -> f64 {
        Self::log_density(theta, x) - self.log_evidence(x)
    }

    /// Mean-reduced BCE of the optimal classifier on balanced dependent and
    /// shuffled pairs, by tensor-product Simpson quadrature.
    pub fn bayes_bce(&self) -> f64 {
        let (nt, nx) = (400usize, 1600usize);
        let (xlo, xhi) = (self.low - 8.0, self.high + 8.0);
        let ht = (self.high - self.low) / nt as f64;
        let hx = (xhi - xlo) / nx as f64;
        let simpson = |i: usize, n: usize| {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let prior = 1.0 / (self.high - self.low);
        let mut total = 0.0;
        for i in 0..=nt {
            let theta = self.low + ht * i as f64;
            for j in 0..=nx {
                let x = xlo + hx * j as f64;
                let r = self.log_ratio(theta, x);
                let joint = prior * Self::log_density(theta, x).exp();
                let product = prior * self.log_evidence(x).exp();
                // -log σ(r) = softplus(-r), -log(1 - σ(r)) = softplus(r)
                let integrand = 0.5 * (joint * softplus(-r) + product * softplus(r));
                total += simpson(i, nt) * simpson(j, nx) * integrand;
            }
        }
        total * ht * hx / 9.0
    }
}

impl StochasticModel for GaussianLocation {
    fn theta_dim(&self) -> usize {
        1
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![1]
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(Observation::Field(vec![theta[0] + z]))
    }

    fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64> {
        Ok(Self::log_density(theta[0], Self::point(obs)?))
    }

    fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        Ok(vec![Self::point(obs)? - theta[0]])
    }

    fn encode(&self, obs: &Observation) -> Vec<f64> {
        obs.as_field().expect("field observation").to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evidence_integrates_to_one() {
        let m = GaussianLocation::default();
        let h = 1e-3;
        let total: f64 = (0..20_000).map(|i| m.log_evidence(-10.0 + h * (i as f64 + 0.5)).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evidence_matches_prior_average() {
        let m = GaussianLocation::default();
        for x in [-3.0, -0.4, 0.0, 1.7] {
            let n = 100_000;
            let h = 4.0 / n as f64;
            let avg: f64 =
                (0..n).map(|i| GaussianLocation::log_density(-2.0 + h * (i as f64 + 0.5), x).exp()).sum::<f64>()
                    / n as f64;
            assert!((avg.ln() - m.log_evidence(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn bayes_bce_is_below_chance() {
        let b = GaussianLocation::default().bayes_bce();
        assert!(b > 0.3 && b < core::f64::consts::LN_2, "{b}");
    }
}
