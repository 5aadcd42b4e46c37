//! Adaptive score-loss weight: gradient-norm matching with an
//! exponentially recency-weighted history.

use alloc::collections::VecDeque;
#[allow(unused_imports)]
use num_traits::Float as _;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaController {
    /// Refresh every `interval` cumulative batches.
    pub interval: u64,
    /// Number of history entries averaged.
    pub window: usize,
    /// Decay scale (in batches) of the recency weights.
    pub decay: f64,
    history: VecDeque<(f64, u64)>,
    alpha: f64,
}

impl Default for AlphaController {
    fn default() -> Self {
        Self::new(64, 64)
    }
}

/// `‖g_BCE‖₂ / ‖g_Score‖₂`, or `None` when the score gradient vanishes.
pub fn gradient_norm_ratio(g_bce: &[f64], g_score: &[f64]) -> Option<f64> {
    let nb = g_bce.iter().map(|g| g * g).sum::<f64>().sqrt();
    let ns = g_score.iter().map(|g| g * g).sum::<f64>().sqrt();
    let r = nb / ns;
    (ns > 0.0 && r.is_finite()).then_some(r)
}

impl AlphaController {
    pub fn new(interval: u64, window: usize) -> Self {
        Self { interval, window, decay: 64.0, history: VecDeque::new(), alpha: 0.0 }
    }

    /// Current weight; zero until the first refresh.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_due(&self, batch: u64) -> bool {
        batch % self.interval == 0
    }

    pub fn history(&self) -> impl Iterator<Item = &(f64, u64)> {
        self.history.iter()
    }

    /// `f_H` at batch `t0` over the retained history.
    pub fn weighted_average(&self, t0: u64) -> Option<f64> {
        if self.history.is_empty() {
            return None;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(a, t) in &self.history {
            let w = (-((t0 - t) as f64) / self.decay).exp();
            num += a * w;
            den += w;
        }
        Some(num / den)
    }

    /// Records `α'` computed at batch `t` and refreshes the weight.
    pub fn record(&mut self, alpha_prime: f64, t: u64) -> f64 {
        self.history.push_back((alpha_prime, t));
        while self.history.len() > self.window {
            self.history.pop_front();
        }
        self.alpha = self.weighted_average(t).unwrap_or(0.0);
        self.alpha
    }

    /// Refresh from the two batch gradients. A vanishing score gradient
    /// keeps the previous weight.
    pub fn update(&mut self, g_bce: &[f64], g_score: &[f64], t: u64) -> f64 {
        match gradient_norm_ratio(g_bce, g_score) {
            Some(r) => self.record(r, t),
            None => {
                log::warn!("score gradient vanished at batch {t}; keeping alpha = {}", self.alpha);
                self.alpha
            }
        }
    }
}
