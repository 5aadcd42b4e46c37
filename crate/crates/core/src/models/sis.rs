//! SIS epidemic on a weighted graph, observed at fixed times (CT-HMM).
//!
//! Node `k` of a graph state is bit `k` of its integer code (1 = infected).
//! Working parameters are `(log λ, log μ)`; the self-infection rate η is a
//! known constant.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use rand::RngCore;
use rand_distr::{Distribution, Exp1};

use super::{Observation, StochasticModel};
use crate::numerics::{matrix_exponential, matrix_exponential_frechet, DenseMatrix};
use crate::{Error, Result};

/// Floor applied to transition probabilities before taking logs.
const PROBABILITY_FLOOR: f64 = 1e-300;
/// Probabilities more negative than this are not rounding noise.
const NEGATIVE_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SisConfig {
    pub positions: Vec<[f64; 2]>,
    pub eta: f64,
    pub times: Vec<f64>,
    pub initial_infected: Vec<usize>,
}

impl SisConfig {
    /// Four nodes on the unit square, observed at `0, 1, ..., 12`.
    pub fn unit_square() -> Self {
        Self {
            positions: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            eta: 0.135,
            times: (0..=12).map(f64::from).collect(),
            initial_infected: Vec::new(),
        }
    }

    /// Unit square plus a copy translated by `(+2, +2)`: eight nodes.
    pub fn two_squares() -> Self {
        let mut cfg = Self::unit_square();
        let shifted: Vec<[f64; 2]> = cfg.positions.iter().map(|p| [p[0] + 2.0, p[1] + 2.0]).collect();
        cfg.positions.extend(shifted);
        cfg
    }

    pub fn nodes(&self) -> usize {
        self.positions.len()
    }

    /// `w_ij = exp(-‖p_i − p_j‖)`, row-major `K × K`.
    pub fn edge_weights(&self) -> Vec<f64> {
        let k = self.nodes();
        let mut w = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                let dx = self.positions[i][0] - self.positions[j][0];
                let dy = self.positions[i][1] - self.positions[j][1];
                w[i * k + j] = (-(dx * dx + dy * dy).sqrt()).exp();
            }
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.nodes();
        if k == 0 || k > 16 {
            return Err(Error::InvalidArgument(format!("SIS graph needs 1..=16 nodes, got {k}")));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("observation times must be strictly increasing".into()));
        }
        if self.initial_infected.iter().any(|&i| i >= k) {
            return Err(Error::InvalidArgument("initial infected node out of range".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidArgument("eta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SisModel {
    cfg: SisConfig,
    weights: Vec<f64>,
    initial_state: u32,
}

impl SisModel {
    pub fn new(cfg: SisConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg.edge_weights();
        let initial_state = cfg.initial_infected.iter().fold(0u32, |s, &i| s | (1 << i));
        Ok(Self { cfg, weights, initial_state })
    }

    pub fn config(&self) -> &SisConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> usize {
        self.cfg.nodes()
    }

    pub fn states(&self) -> usize {
        1 << self.nodes()
    }

    pub fn initial_state(&self) -> u32 {
        self.initial_state
    }

    /// Infection pressure `Σ_j w_kj v_j` on node `k`.
    fn pressure(&self, state: u32, k: usize) -> f64 {
        let n = self.nodes();
        (0..n).filter(|&j| state >> j & 1 == 1).map(|j| self.weights[k * n + j]).sum()
    }

    /// Generator matrix and its partials with respect to `log λ` and `log μ`.
    fn generator_with_partials(&self, theta: &[f64]) -> [DenseMatrix; 3] {
        let lambda = theta[0].exp();
        let mu = theta[1].exp();
        let n = self.states();
        let mut q = DenseMatrix::zeros(n, n);
        let mut dl = DenseMatrix::zeros(n, n);
        let mut dm = DenseMatrix::zeros(n, n);
        for s in 0..n {
            for k in 0..self.nodes() {
                let t = s ^ (1 << k);
                if s >> k & 1 == 1 {
                    q[(s, t)] = mu;
                    dm[(s, t)] = mu;
                } else {
                    let infection = lambda * self.pressure(s as u32, k);
                    q[(s, t)] = self.cfg.eta + infection;
                    dl[(s, t)] = infection;
                }
            }
            for m in [&mut q, &mut dl, &mut dm] {
                let off: f64 = m.row(s).iter().sum();
                m[(s, s)] = -off;
            }
        }
        [q, dl, dm]
    }

    /// Generator `Q(λ, μ, η)` at working parameters `(log λ, log μ)`.
    pub fn build_generator(&self, theta: &[f64]) -> DenseMatrix {
        let [q, _, _] = self.generator_with_partials(theta);
        q
    }

    /// Competing per-node exponential clocks between observation times.
    pub fn simulate_states(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<u32> {
        let lambda = theta[0].exp();
        let mu = theta[1].exp();
        let times = &self.cfg.times;
        let mut state = self.initial_state;
        let mut out = Vec::with_capacity(times.len());
        out.push(state);
        let mut t = times[0];
        for &t_obs in &times[1..] {
            loop {
                let mut next: Option<(f64, usize)> = None;
                for k in 0..self.nodes() {
                    let rate = if state >> k & 1 == 1 { mu } else { self.cfg.eta + lambda * self.pressure(state, k) };
                    if rate > 0.0 {
                        let e: f64 = Exp1.sample(rng);
                        let wait = e / rate;
                        if next.is_none_or(|(w, _)| wait < w) {
                            next = Some((wait, k));
                        }
                    }
                }
                match next {
                    // memoryless clocks: pending waits past t_obs are redrawn
                    Some((wait, k)) if t + wait <= t_obs => {
                        t += wait;
                        state ^= 1 << k;
                    }
                    _ => break,
                }
            }
            t = t_obs;
            out.push(state);
        }
        out
    }

    fn check(&self, states: &[u32]) -> Result<()> {
        if states.len() != self.cfg.times.len() {
            return Err(Error::DimensionMismatch { expected: self.cfg.times.len(), actual: states.len() });
        }
        if let Some(&s) = states.iter().find(|&&s| s as usize >= self.states()) {
            return Err(Error::InvalidArgument(format!("state {s} outside 0..{}", self.states())));
        }
        Ok(())
    }

    /// Distinct gaps (bit-exact) and, per interval, the index of its gap.
    fn gaps(&self) -> (Vec<f64>, Vec<usize>) {
        let mut distinct: Vec<f64> = Vec::new();
        let index = self
            .cfg
            .times
            .windows(2)
            .map(|w| {
                let dt = w[1] - w[0];
                match distinct.iter().position(|d| d.to_bits() == dt.to_bits()) {
                    Some(i) => i,
                    None => {
                        distinct.push(dt);
                        distinct.len() - 1
                    }
                }
            })
            .collect();
        (distinct, index)
    }

    fn log_transition(p: f64, from: u32, to: u32) -> Result<f64> {
        if p.is_nan() || p < NEGATIVE_TOLERANCE {
            return Err(Error::ImpossibleTransition { from, to, probability: p });
        }
        Ok(p.max(PROBABILITY_FLOOR).ln())
    }

    fn trajectory<'a>(&self, obs: &'a Observation) -> Result<&'a [u32]> {
        let states = obs.as_states().ok_or_else(|| Error::InvalidArgument("SIS expects a state sequence".into()))?;
        self.check(states)?;
        Ok(states)
    }
}

impl StochasticModel for SisModel {
    fn theta_dim(&self) -> usize {
        2
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.cfg.times.len(), self.nodes()]
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Observation> {
        Ok(Observation::States(self.simulate_states(theta, rng)))
    }

    fn log_likelihood(&self, theta: &[f64], obs: &Observation) -> Result<f64> {
        let states = self.trajectory(obs)?;
        if states[0] != self.initial_state {
            return Ok(f64::NEG_INFINITY);
        }
        let q = self.build_generator(theta);
        let (gaps, index) = self.gaps();
        let kernels = gaps.iter().map(|&dt| matrix_exponential(&q.scale(dt))).collect::<Result<Vec<_>>>()?;
        let mut ll = 0.0;
        for (i, w) in states.windows(2).enumerate() {
            let p = kernels[index[i]][(w[0] as usize, w[1] as usize)];
            ll += Self::log_transition(p, w[0], w[1])?;
        }
        Ok(ll)
    }

    /// Interval-wise `L(QΔt, ∂Q/∂θ_k Δt)[s, s'] / exp(QΔt)[s, s']`.
    fn score(&self, theta: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        let states = self.trajectory(obs)?;
        if states[0] != self.initial_state {
            return Err(Error::ImpossibleTransition { from: self.initial_state, to: states[0], probability: 0.0 });
        }
        let [q, dl, dm] = self.generator_with_partials(theta);
        let (gaps, index) = self.gaps();
        let mut kernels = Vec::with_capacity(gaps.len());
        for &dt in &gaps {
            let a = q.scale(dt);
            let (p, l_lambda) = matrix_exponential_frechet(&a, &dl.scale(dt))?;
            let (_, l_mu) = matrix_exponential_frechet(&a, &dm.scale(dt))?;
            kernels.push((p, l_lambda, l_mu));
        }
        let mut score = vec![0.0; 2];
        for (i, w) in states.windows(2).enumerate() {
            let (from, to) = (w[0] as usize, w[1] as usize);
            let (p, l_lambda, l_mu) = &kernels[index[i]];
            let prob = p[(from, to)];
            Self::log_transition(prob, w[0], w[1])?;
            let prob = prob.max(PROBABILITY_FLOOR);
            score[0] += l_lambda[(from, to)] / prob;
            score[1] += l_mu[(from, to)] / prob;
        }
        Ok(score)
    }

    /// `[T, K]` infection indicators.
    fn encode(&self, obs: &Observation) -> Vec<f64> {
        let k = self.nodes();
        let states = obs.as_states().expect("SIS observation");
        let mut out = Vec::with_capacity(states.len() * k);
        for &s in states {
            out.extend((0..k).map(|j| f64::from((s >> j & 1) as u8)));
        }
        out
    }

    /// One matrix exponential per grid point shared by every group, with
    /// groups reduced to transition counts.
    fn grid_log_likelihoods(&self, groups: &[Vec<Observation>], thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (gaps, index) = self.gaps();
        let mut counts: Vec<BTreeMap<(usize, u32, u32), u32>> = Vec::with_capacity(groups.len());
        let mut impossible = vec![false; groups.len()];
        for (g, group) in groups.iter().enumerate() {
            let mut c = BTreeMap::new();
            for obs in group {
                let states = self.trajectory(obs)?;
                if states[0] != self.initial_state {
                    impossible[g] = true;
                }
                for (i, w) in states.windows(2).enumerate() {
                    *c.entry((index[i], w[0], w[1])).or_insert(0) += 1;
                }
            }
            counts.push(c);
        }
        let mut out = vec![0.0; groups.len() * thetas.len()];
        for (t, theta) in thetas.iter().enumerate() {
            let q = self.build_generator(theta);
            let kernels = gaps.iter().map(|&dt| matrix_exponential(&q.scale(dt))).collect::<Result<Vec<_>>>()?;
            for (g, c) in counts.iter().enumerate() {
                let mut ll = if impossible[g] { f64::NEG_INFINITY } else { 0.0 };
                for (&(gap, from, to), &n) in c {
                    let p = kernels[gap][(from as usize, to as usize)];
                    ll += f64::from(n) * Self::log_transition(p, from, to)?;
                }
                out[g * thetas.len() + t] = ll;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn single_node() -> SisModel {
        SisModel::new(SisConfig {
            positions: vec![[0.0, 0.0]],
            eta: 0.135,
            times: vec![0.0, 1.0],
            initial_infected: vec![],
        })
        .unwrap()
    }

    #[test]
    fn single_node_generator() {
        let q = single_node().build_generator(&[0.0, 0.0]);
        let expect = DenseMatrix::from_vec(2, 2, vec![-0.135, 0.135, 1.0, -1.0]).unwrap();
        assert!(q.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let m = SisModel::new(SisConfig::unit_square()).unwrap();
        for theta in [[-1.1, 1.1], [0.3, -0.7], [1.1, 1.1]] {
            let q = m.build_generator(&theta);
            for s in 0..16 {
                assert!(q.row(s).iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_node_flips_have_zero_rate() {
        let m =
            SisModel::new(SisConfig { positions: vec![[0.0, 0.0], [1.0, 0.0]], ..SisConfig::unit_square() }).unwrap();
        let q = m.build_generator(&[0.2, 0.4]);
        assert_eq!(q[(0b11, 0b00)], 0.0);
        assert_eq!(q[(0b00, 0b11)], 0.0);
        // infection of node 0 with node 1 infected: eta + lambda * w_01
        let expect = 0.135 + 0.2f64.exp() * (-1.0f64).exp();
        assert!((q[(0b10, 0b11)] - expect).abs() < 1e-14);
    }

    #[test]
    fn two_state_closed_form() {
        let m = single_node();
        let ll = m.log_likelihood(&[0.0, 0.0], &Observation::States(vec![0, 0])).unwrap();
        let (eta, mu) = (0.135, 1.0);
        let p00 = (mu + eta * (-(eta + mu) * 1.0f64).exp()) / (eta + mu);
        assert!((ll - p00.ln()).abs() < 1e-12);
        assert!((p00 - 0.9192).abs() < 1e-4);
        assert!((ll + 0.0842).abs() < 1e-4);
    }

    #[test]
    fn length_one_trajectory() {
        let m = SisModel::new(SisConfig { times: vec![0.0], ..SisConfig::unit_square() }).unwrap();
        let obs = Observation::States(vec![0]);
        assert_eq!(m.log_likelihood(&[0.1, 0.2], &obs).unwrap(), 0.0);
        assert_eq!(m.score(&[0.1, 0.2], &obs).unwrap(), vec![0.0, 0.0]);
        let wrong = Observation::States(vec![3]);
        assert_eq!(m.log_likelihood(&[0.1, 0.2], &wrong).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn simulation_is_deterministic_and_valid() {
        let m = SisModel::new(SisConfig::unit_square()).unwrap();
        let a = m.simulate_states(&[0.5, -0.5], &mut rng::stream(9, 0));
        let b = m.simulate_states(&[0.5, -0.5], &mut rng::stream(9, 0));
        assert_eq!(a, b);
        assert_eq!(a.len(), 13);
        assert!(a.iter().all(|&s| s < 16));
        let ll = m.log_likelihood(&[0.5, -0.5], &Observation::States(a)).unwrap();
        assert!(ll < 0.0 && ll.exp() > 0.0);
    }

    #[test]
    fn fast_recovery_keeps_graph_susceptible() {
        let m = SisModel::new(SisConfig { eta: 0.0, initial_infected: vec![0, 1, 2, 3], ..SisConfig::unit_square() })
            .unwrap();
        let mut infected = 0usize;
        for seed in 0..50 {
            let s = m.simulate_states(&[-1.1, 1.1], &mut rng::stream(seed, 0));
            infected += s[1..].iter().map(|v| v.count_ones() as usize).sum::<usize>();
        }
        // 50 runs * 12 observations * 4 nodes
        assert!(infected < 50 * 12 * 4 / 20);
    }

    #[test]
    fn grid_matches_pointwise() {
        let m = SisModel::new(SisConfig::unit_square()).unwrap();
        let group: Vec<Observation> =
            (0..3).map(|i| Observation::States(m.simulate_states(&[0.2, 0.1], &mut rng::stream(4, i)))).collect();
        let thetas = vec![vec![0.0, 0.0], vec![0.5, -0.3]];
        let grid = m.grid_log_likelihoods(&[group.clone()], &thetas).unwrap();
        for (t, theta) in thetas.iter().enumerate() {
            let direct = m.group_log_likelihood(theta, &group).unwrap();
            assert!((grid[t] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_malformed_trajectories() {
        let m = SisModel::new(SisConfig::unit_square()).unwrap();
        assert!(m.log_likelihood(&[0.0, 0.0], &Observation::States(vec![0; 5])).is_err());
        assert!(m.log_likelihood(&[0.0, 0.0], &Observation::States(vec![99; 13])).is_err());
        assert!(m.log_likelihood(&[0.0, 0.0], &Observation::Field(vec![0.0; 13])).is_err());
    }
}
