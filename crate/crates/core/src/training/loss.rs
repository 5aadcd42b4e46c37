//! Classification and score losses, finite-difference scores and their
//! step-size calibration.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::nn::RatioModel;
use crate::{Error, Result};

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        }
    }

    /// Multiplier applied to a sum over `count` terms.
    pub fn factor(self, count: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / count.max(1) as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Per-example BCE for a logit `h` and label `y ∈ {0, 1}`.
pub fn bce_term(h: f64, y: f64) -> f64 {
    // −y log σ(h) − (1 − y) log(1 − σ(h))
    y * softplus(-h) + (1.0 - y) * softplus(h)
}

pub fn bce_loss(logits: &[f64], labels: &[f64], reduction: Reduction) -> f64 {
    assert_eq!(logits.len(), labels.len());
    let total: f64 = logits.iter().zip(labels).map(|(&h, &y)| bce_term(h, y)).sum();
    total * reduction.factor(logits.len())
}

/// `α Σ_i Σ_k (estimate − target)²`
pub fn score_loss(estimates: &[f64], targets: &[f64], alpha: f64) -> f64 {
    assert_eq!(estimates.len(), targets.len());
    alpha * estimates.iter().zip(targets).map(|(e, t)| (e - t) * (e - t)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    pub epsilon: Vec<f64>,
    pub rel_error_threshold: f64,
    pub floor: f64,
}

impl FdConfig {
    pub const INITIAL_EPSILON: f64 = 1e-5;

    pub fn new(theta_dim: usize) -> Self {
        Self { epsilon: vec![Self::INITIAL_EPSILON; theta_dim], rel_error_threshold: 0.01, floor: 1e-8 }
    }
}

/// Forward-difference `∇_θ h` sharing one trunk pass across the `d + 1`
/// head evaluations.
pub fn fd_score_estimate(model: &RatioModel, x: &[f64], theta: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    let trunk = model.trunk_forward(x)?;
    let base = model.head_forward(trunk.feature(), theta)?.logit();
    let mut shifted = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for (k, &eps) in epsilon.iter().enumerate() {
        shifted[k] = theta[k] + eps;
        let h = model.head_forward(trunk.feature(), &shifted)?.logit();
        shifted[k] = theta[k];
        out.push((h - base) / eps);
    }
    Ok(out)
}

/// Gradients this small are skipped when measuring relative error.
const EXACT_GUARD: f64 = 1e-12;

/// Worst `|(exact − fd) / exact|` over the examples `(x_i, θ_i)`.
pub fn max_relative_error(model: &RatioModel, examples: &[(&[f64], &[f64])], epsilon: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(x, theta) in examples {
        let exact = model.theta_input_gradient(x, theta)?;
        let fd = fd_score_estimate(model, x, theta, epsilon)?;
        for (e, f) in exact.iter().zip(&fd) {
            if e.abs() < EXACT_GUARD {
                continue;
            }
            let r = ((e - f) / e).abs();
            worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
        }
    }
    Ok(worst)
}

/// Tries each batch in turn: start from the initial ε and divide every
/// component by 10 while the error exceeds the threshold, down to the
/// floor. Fails once every batch has been tried.
pub fn calibrate_epsilon<'a, I>(model: &RatioModel, batches: I, template: &FdConfig) -> Result<FdConfig>
where
    I: IntoIterator<Item = Vec<(&'a [f64], &'a [f64])>>,
{
    let mut tried = 0;
    for batch in batches {
        tried += 1;
        let mut eps = vec![FdConfig::INITIAL_EPSILON; model.theta_dim()];
        loop {
            let err = max_relative_error(model, &batch, &eps)?;
            if err <= template.rel_error_threshold {
                return Ok(FdConfig { epsilon: eps, ..template.clone() });
            }
            let next: Vec<f64> = eps.iter().map(|e| e / 10.0).collect();
            // allow for rounding in repeated division
            if next.iter().any(|&e| e < template.floor * (1.0 - 1e-9)) {
                break;
            }
            eps = next;
        }
        log::debug!("epsilon calibration failed on batch {tried}, moving on");
    }
    Err(Error::CalibrationFailed { batches: tried })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    #[test]
    fn bce_values() {
        assert!((bce_term(0.0, 1.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_term(0.0, 0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        let v = bce_term(20.0, 1.0);
        assert!((v - 2.061_153_620_314_381e-9).abs() < 1e-21);
        assert!(bce_term(800.0, 0.0).is_finite() && bce_term(-800.0, 1.0).is_finite());
        for i in -100..=100 {
            let h = i as f64 / 10.0;
            let s = 1.0 / (1.0 + (-h).exp());
            assert!((bce_term(h, 1.0) + s.ln()).abs() < 1e-9);
            assert!((bce_term(h, 0.0) + (1.0 - s).ln()).abs() < 1e-9);
        }
        let l = [0.3, -1.0];
        let y = [1.0, 0.0];
        assert!((bce_loss(&l, &y, Reduction::Sum) - 2.0 * bce_loss(&l, &y, Reduction::Mean)).abs() < 1e-15);
    }

    #[test]
    fn score_loss_arithmetic() {
        assert_eq!(score_loss(&[2.0], &[1.0], 0.5), 0.5);
        assert_eq!(score_loss(&[2.0, 3.0], &[1.0, 0.0], 0.0), 0.0);
        assert_eq!(score_loss(&[2.0, 3.0], &[2.0, 3.0], 4.0), 0.0);
    }

    fn linear_in_theta() -> RatioModel {
        let mut m = RatioModel::new(&[1], 2, &[LayerSpec::ConcatTheta, LayerSpec::Dense { outputs: 1 }], 0).unwrap();
        m.set_params(&[0.5, 2.0, -3.0, 0.1]).unwrap();
        m
    }

    /// `h = SiLU(20000 θ)`, sharply curved near zero.
    fn curved() -> RatioModel {
        let mut m = RatioModel::new(
            &[1],
            1,
            &[
                LayerSpec::ConcatTheta,
                LayerSpec::Dense { outputs: 1 },
                LayerSpec::Activation(Activation::Silu),
                LayerSpec::Dense { outputs: 1 },
            ],
            0,
        )
        .unwrap();
        m.set_params(&[0.0, 20000.0, 0.0, 1.0, 0.0]).unwrap();
        m
    }

    #[test]
    fn linear_model_fd_is_exact() {
        let m = linear_in_theta();
        for eps in [1e-5, 1e-2, 1.0] {
            let g = fd_score_estimate(&m, &[0.7], &[0.1, -0.2], &[eps, eps]).unwrap();
            assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] + 3.0).abs() < 1e-9);
        }
        let x = [0.7];
        let t = [0.1, -0.2];
        let fd = calibrate_epsilon(&m, [vec![(&x[..], &t[..])]], &FdConfig::new(2)).unwrap();
        assert_eq!(fd.epsilon, vec![1e-5, 1e-5]);
    }

    #[test]
    fn forward_difference_is_first_order() {
        let m = curved();
        let x = [0.0];
        let t = [2e-5];
        let exact = m.theta_input_gradient(&x, &t).unwrap()[0];
        let e1 = (fd_score_estimate(&m, &x, &t, &[1e-6]).unwrap()[0] - exact).abs();
        let e2 = (fd_score_estimate(&m, &x, &t, &[5e-7]).unwrap()[0] - exact).abs();
        assert!((e1 / e2 - 2.0).abs() < 0.1, "{e1} {e2}");
    }

    #[test]
    fn curved_model_needs_smaller_epsilon() {
        let m = curved();
        let x = [0.0];
        let t = [2e-5];
        let tmpl = FdConfig::new(1);
        assert!(max_relative_error(&m, &[(&x, &t)], &tmpl.epsilon).unwrap() > 0.01);
        let fd = calibrate_epsilon(&m, [vec![(&x[..], &t[..])]], &tmpl).unwrap();
        assert!(fd.epsilon[0] < 1e-5);
        assert!(max_relative_error(&m, &[(&x, &t)], &fd.epsilon).unwrap() <= 0.01);
    }

    #[test]
    fn all_zero_model_accepts_initial_epsilon() {
        let mut m = linear_in_theta();
        m.params_mut().iter_mut().for_each(|w| *w = 0.0);
        let x = [1.0];
        let t = [0.0, 0.0];
        let fd = calibrate_epsilon(&m, [vec![(&x[..], &t[..])]], &FdConfig::new(2)).unwrap();
        assert_eq!(fd.epsilon, vec![1e-5; 2]);
    }

    #[test]
    fn calibration_can_fail() {
        let mut m = curved();
        // slope so steep that even ε = 1e-8 misses
        m.params_mut()[1] = 1e9;
        let x = [0.0];
        let t = [1e-10];
        let r = calibrate_epsilon(&m, [vec![(&x[..], &t[..])], vec![(&x[..], &t[..])]], &FdConfig::new(1));
        assert_eq!(r, Err(Error::CalibrationFailed { batches: 2 }));
    }
}
