//! The training loop: permutation-paired minibatches, BCE plus the
//! finite-difference score loss, adaptive α, early stopping on validation
//! BCE.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::alpha::{gradient_norm_ratio, AlphaController};
use super::dataset::Dataset;
use super::loss::{bce_term, calibrate_epsilon, fd_score_estimate, FdConfig, Reduction};
use crate::nn::{sigmoid, AdamConfig, AdamState, HeadPass, RatioModel, TrunkPass};
use crate::rng::{self, streams};
use crate::space::Case;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossMode {
    Bce,
    Asa,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Bce => "bce",
            LossMode::Asa => "asa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossMode::Bce),
            "asa" => Ok(LossMode::Asa),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown loss mode {s:?}"))),
        }
    }
}

/// Wall-clock source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances; timings come out as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Minimum epochs by training set size.
pub fn min_epochs(n: usize) -> usize {
    match n {
        n if n >= 1_000_000 => 10,
        n if n >= 300_000 => 20,
        n if n >= 100_000 => 30,
        _ => 40,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss_mode: LossMode,
    pub reduction: Reduction,
    pub alpha_interval: u64,
    pub alpha_window: usize,
    pub fd: FdConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for a case study at training set size `n`.
    pub fn for_case(case: Case, n: usize, loss_mode: LossMode, seed: u64) -> Self {
        let learning_rate = match case {
            Case::Stp => 3e-3,
            _ => 1e-3,
        };
        Self {
            batch_size: 64,
            learning_rate,
            weight_decay: 1e-6,
            min_epochs: min_epochs(n),
            max_epochs: 500,
            patience: 5,
            loss_mode,
            reduction: Reduction::Mean,
            alpha_interval: 64,
            alpha_window: 64,
            fd: FdConfig::new(case.space().dim()),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_bce: f64,
    /// Mean squared FD-score error on the training pairs; NaN without ASA.
    pub train_score_mse: f64,
    pub val_bce: f64,
    pub val_score_mse: f64,
    pub alpha: f64,
    /// Cumulative batch time at the end of the epoch.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRecord {
    pub batch: u64,
    pub alpha_prime: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub loss_mode: LossMode,
    pub reduction: Reduction,
    pub epochs: Vec<EpochRecord>,
    pub alpha_trace: Vec<AlphaRecord>,
    pub epsilon: Vec<f64>,
    pub best_epoch: usize,
    pub batches: u64,
    pub batch_time_mean: f64,
    /// Calibration plus all batch time; validation excluded.
    pub total_time: f64,
    pub time_to_best: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: RatioModel,
    pub history: History,
    pub fd: FdConfig,
}

/// Y=1 rows are `(x_i, θ_i)`; Y=0 rows pair `x_i` with `θ_{partners[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub partners: Vec<usize>,
}

/// Draws one partner per index uniformly from the whole dataset.
pub fn make_batch(n: usize, indices: &[usize], rng: &mut rng::Rng) -> Batch {
    let partners = indices.iter().map(|_| rng.random_range(0..n)).collect();
    Batch { indices: indices.to_vec(), partners }
}

/// Fixed partners for a held-out set.
pub fn fixed_pairing(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, stream);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

/// Mean BCE over the `2n` pairs built with `partners`.
pub fn paired_bce(model: &RatioModel, data: &Dataset, partners: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let trunk = model.trunk_forward(data.input(i))?;
        let h1 = model.head_forward(trunk.feature(), data.theta(i))?.logit();
        let h0 = model.head_forward(trunk.feature(), data.theta(partners[i]))?.logit();
        total += bce_term(h1, 1.0) + bce_term(h0, 0.0);
    }
    Ok(total / (2 * data.len()) as f64)
}

/// Per-coordinate mean squared error of FD scores against the targets.
pub fn score_mse(model: &RatioModel, data: &Dataset, epsilon: &[f64]) -> Result<Vec<f64>> {
    let d = data.theta_dim;
    let mut acc = vec![0.0; d];
    for i in 0..data.len() {
        let est = fd_score_estimate(model, data.input(i), data.theta(i), epsilon)?;
        for k in 0..d {
            let r = est[k] - data.score(i)[k];
            acc[k] += r * r;
        }
    }
    Ok(acc.into_iter().map(|s| s / data.len() as f64).collect())
}

/// [`paired_bce`] and [`score_mse`] in one pass, sharing each trunk
/// evaluation; the positive logit doubles as the FD base point.
fn held_out_metrics(
    model: &RatioModel,
    data: &Dataset,
    partners: &[usize],
    epsilon: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let d = data.theta_dim;
    let mut bce = 0.0;
    let mut acc = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    for i in 0..data.len() {
        let trunk = model.trunk_forward(data.input(i))?;
        let theta = data.theta(i);
        let h1 = model.head_forward(trunk.feature(), theta)?.logit();
        let h0 = model.head_forward(trunk.feature(), data.theta(partners[i]))?.logit();
        bce += bce_term(h1, 1.0) + bce_term(h0, 0.0);
        shifted.copy_from_slice(theta);
        for (k, &e) in epsilon.iter().enumerate() {
            shifted[k] = theta[k] + e;
            let h = model.head_forward(trunk.feature(), &shifted)?.logit();
            shifted[k] = theta[k];
            let r = (h - h1) / e - data.score(i)[k];
            acc[k] += r * r;
        }
    }
    let n = data.len() as f64;
    Ok((bce / (2.0 * n), acc.into_iter().map(|s| s / n).collect()))
}

struct BatchPass {
    trunks: Vec<TrunkPass>,
    positive: Vec<HeadPass>,
    negative: Vec<HeadPass>,
    shifted: Vec<Vec<HeadPass>>,
    residuals: Vec<Vec<f64>>,
    bce_sum: f64,
    score_sq_sum: f64,
}

fn forward_batch(model: &RatioModel, data: &Dataset, batch: &Batch, epsilon: Option<&[f64]>) -> Result<BatchPass> {
    let b = batch.indices.len();
    let mut pass = BatchPass {
        trunks: Vec::with_capacity(b),
        positive: Vec::with_capacity(b),
        negative: Vec::with_capacity(b),
        shifted: Vec::new(),
        residuals: Vec::new(),
        bce_sum: 0.0,
        score_sq_sum: 0.0,
    };
    for (&i, &j) in batch.indices.iter().zip(&batch.partners) {
        let trunk = model.trunk_forward(data.input(i))?;
        let theta = data.theta(i);
        let pos = model.head_forward(trunk.feature(), theta)?;
        let neg = model.head_forward(trunk.feature(), data.theta(j))?;
        pass.bce_sum += bce_term(pos.logit(), 1.0) + bce_term(neg.logit(), 0.0);
        if let Some(eps) = epsilon {
            let mut shifted = theta.to_vec();
            let mut heads = Vec::with_capacity(eps.len());
            let mut resid = Vec::with_capacity(eps.len());
            for (k, &e) in eps.iter().enumerate() {
                shifted[k] = theta[k] + e;
                let h = model.head_forward(trunk.feature(), &shifted)?;
                shifted[k] = theta[k];
                let r = (h.logit() - pos.logit()) / e - data.score(i)[k];
                pass.score_sq_sum += r * r;
                resid.push(r);
                heads.push(h);
            }
            pass.shifted.push(heads);
            pass.residuals.push(resid);
        }
        pass.trunks.push(trunk);
        pass.positive.push(pos);
        pass.negative.push(neg);
    }
    Ok(pass)
}

/// Adds `∇_γ (w_bce · L_BCE + w_score · L_Score,unweighted)` into `grads`.
fn accumulate(
    model: &RatioModel,
    pass: &BatchPass,
    epsilon: &[f64],
    factor: f64,
    w_bce: f64,
    w_score: f64,
    grads: &mut [f64],
) {
    let f = model.feature_len();
    for i in 0..pass.trunks.len() {
        let mut feature_grad = vec![0.0; f];
        let mut add = |g: Vec<f64>| feature_grad.iter_mut().zip(&g[..f]).for_each(|(a, b)| *a += b);
        let mut up_pos = w_bce * (sigmoid(pass.positive[i].logit()) - 1.0) * factor;
        if w_score != 0.0 {
            for (k, h) in pass.shifted[i].iter().enumerate() {
                // ∂(s_k − t_k)²/∂h_k = 2 r_k / ε_k, and −2 r_k / ε_k for the base logit
                let g = 2.0 * pass.residuals[i][k] / epsilon[k] * factor * w_score;
                up_pos -= g;
                add(model.head_backward(h, g, grads));
            }
        }
        if w_bce != 0.0 {
            let up_neg = w_bce * sigmoid(pass.negative[i].logit()) * factor;
            add(model.head_backward(&pass.negative[i], up_neg, grads));
        }
        add(model.head_backward(&pass.positive[i], up_pos, grads));
        model.trunk_backward(&pass.trunks[i], &feature_grad, grads);
    }
}

/// Identity-order batches of Y=1 pairs used for ε calibration.
fn calibration_batches<'a>(data: &'a Dataset, size: usize) -> impl Iterator<Item = Vec<(&'a [f64], &'a [f64])>> + 'a {
    (0..data.len())
        .step_by(size)
        .map(move |start| (start..(start + size).min(data.len())).map(|i| (data.input(i), data.theta(i))).collect())
}

/// Calibrated finite-difference steps for `model` on `data`.
pub fn calibrate_on(model: &RatioModel, data: &Dataset, batch_size: usize, template: &FdConfig) -> Result<FdConfig> {
    calibrate_epsilon(model, calibration_batches(data, batch_size), template)
}

/// Trains `model` and returns the weights of the best validation epoch.
pub fn train(
    mut model: RatioModel,
    data: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<Trained> {
    if data.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    if data.theta_dim != model.theta_dim() || data.input_len != model.input_len() {
        return Err(Error::ShapeMismatch("dataset does not match the network".into()));
    }
    let n = data.len();
    let d = data.theta_dim;
    let asa = cfg.loss_mode == LossMode::Asa;

    let start = clock.now();
    let fd = calibrate_on(&model, data, cfg.batch_size, &cfg.fd)?;
    let clock_total = clock.now() - start;
    let eps = fd.epsilon.clone();

    let mut adam = AdamState::new(AdamConfig::new(cfg.learning_rate, cfg.weight_decay), model.param_count());
    let mut alpha = AlphaController::new(cfg.alpha_interval, cfg.alpha_window);
    let mut shuffle = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut pairing = rng::stream(cfg.seed, streams::PAIRING);
    let val_partners = fixed_pairing(val.len(), cfg.seed, streams::VALIDATION_PAIRING);

    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::new();
    let mut alpha_trace = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().to_vec(), clock_total);
    let mut batches = 0u64;
    let mut batch_time = 0.0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let (mut bce_acc, mut score_acc) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let t0 = clock.now();
            let batch = make_batch(n, chunk, &mut pairing);
            let factor = cfg.reduction.factor(2 * chunk.len());
            let pass = forward_batch(&model, data, &batch, asa.then_some(&eps[..]))?;
            let mut grads = vec![0.0; model.param_count()];
            if asa && alpha.is_due(batches) {
                let mut g_score = vec![0.0; model.param_count()];
                accumulate(&model, &pass, &eps, factor, 1.0, 0.0, &mut grads);
                accumulate(&model, &pass, &eps, factor, 0.0, 1.0, &mut g_score);
                let ratio = gradient_norm_ratio(&grads, &g_score);
                let a = alpha.update(&grads, &g_score, batches);
                let alpha_prime = ratio.unwrap_or(f64::NAN);
                alpha_trace.push(AlphaRecord { batch: batches, alpha_prime, alpha: a });
                grads.iter_mut().zip(&g_score).for_each(|(g, s)| *g += a * s);
            } else {
                accumulate(&model, &pass, &eps, factor, 1.0, if asa { alpha.alpha() } else { 0.0 }, &mut grads);
            }
            adam.step(model.params_mut(), &grads)?;
            batches += 1;
            batch_time += clock.now() - t0;
            bce_acc += pass.bce_sum;
            score_acc += pass.score_sq_sum;
        }
        let elapsed = clock_total + batch_time;
        let (val_bce, val_mse) = held_out_metrics(&model, val, &val_partners, &eps)?;
        let val_score = val_mse.iter().sum::<f64>() / d as f64;
        if !val_bce.is_finite() {
            return Err(Error::Domain("validation loss is not finite".into()));
        }
        epochs.push(EpochRecord {
            epoch,
            train_bce: bce_acc / (2 * n) as f64,
            train_score_mse: if asa { score_acc / (n * d) as f64 } else { f64::NAN },
            val_bce,
            val_score_mse: val_score,
            alpha: alpha.alpha(),
            elapsed,
        });
        log::info!("epoch {epoch}: val bce {val_bce:.5}, val score mse {val_score:.4}, alpha {:.4}", alpha.alpha());
        if val_bce < best.0 {
            best = (val_bce, epoch, model.params().to_vec(), elapsed);
        }
        if epoch >= cfg.min_epochs && epoch - best.1 >= cfg.patience {
            break;
        }
    }

    model.set_params(&best.2)?;
    let total_time = clock_total + batch_time;
    let history = History {
        loss_mode: cfg.loss_mode,
        reduction: cfg.reduction,
        epochs,
        alpha_trace,
        epsilon: eps,
        best_epoch: best.1,
        batches,
        batch_time_mean: if batches > 0 { batch_time / batches as f64 } else { 0.0 },
        total_time,
        time_to_best: best.3,
    };
    Ok(Trained { model, history, fd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianLocation, StochasticModel};
    use crate::nn::build_architecture;
    use crate::training::dataset::generate_dataset;
    use core::cell::Cell;

    fn toy_setup(n: usize) -> (RatioModel, Dataset, Dataset) {
        let toy = GaussianLocation::default();
        let bounds = Case::Toy.space().train();
        let data = generate_dataset(&toy, &bounds, n, 1).unwrap();
        let val = generate_dataset(&toy, &bounds, n, 2).unwrap();
        let net = build_architecture(Case::Toy, "small", &toy.input_shape(), None, 3).unwrap();
        (net, data, val)
    }

    fn quick(mode: LossMode) -> TrainConfig {
        let mut cfg = TrainConfig::for_case(Case::Toy, 400, mode, 4);
        cfg.min_epochs = 3;
        cfg.max_epochs = 6;
        cfg.alpha_interval = 4;
        cfg
    }

    /// Advances one second per reading.
    struct Ticker(Cell<f64>);

    impl Clock for Ticker {
        fn now(&self) -> f64 {
            let t = self.0.get();
            self.0.set(t + 1.0);
            t
        }
    }

    #[test]
    fn fused_held_out_metrics_match_the_separate_ones() {
        let (net, _, val) = toy_setup(300);
        let partners = fixed_pairing(val.len(), 9, streams::VALIDATION_PAIRING);
        let eps = [1e-4];
        let (bce, mse) = held_out_metrics(&net, &val, &partners, &eps).unwrap();
        assert_eq!(bce, paired_bce(&net, &val, &partners).unwrap());
        assert_eq!(mse, score_mse(&net, &val, &eps).unwrap());
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let (net, data, _) = toy_setup(40);
        let mut r = rng::stream(5, streams::PAIRING);
        let indices: Vec<usize> = (0..16).collect();
        let batch = make_batch(data.len(), &indices, &mut r);
        let eps = [1e-3];
        let factor = Reduction::Mean.factor(32);
        let (w_bce, w_score) = (1.0, 0.37);
        let loss = |m: &RatioModel| {
            let p = forward_batch(m, &data, &batch, Some(&eps)).unwrap();
            factor * (w_bce * p.bce_sum + w_score * p.score_sq_sum)
        };
        let pass = forward_batch(&net, &data, &batch, Some(&eps)).unwrap();
        let mut grads = vec![0.0; net.param_count()];
        accumulate(&net, &pass, &eps, factor, w_bce, w_score, &mut grads);
        let h = 1e-6;
        for k in 0..net.param_count() {
            let mut up = net.clone();
            up.params_mut()[k] += h;
            let mut dn = net.clone();
            dn.params_mut()[k] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            assert!((grads[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {} vs {fd}", grads[k]);
        }
    }

    #[test]
    fn returns_the_best_validation_epoch() {
        let (net, data, val) = toy_setup(400);
        let cfg = quick(LossMode::Bce);
        let out = train(net, &data, &val, &cfg, &FrozenClock).unwrap();
        let h = &out.history;
        assert!(h.epochs.len() >= cfg.min_epochs && h.epochs.len() <= cfg.max_epochs);
        let best = h.epochs.iter().min_by(|a, b| a.val_bce.total_cmp(&b.val_bce)).unwrap();
        assert_eq!(h.best_epoch, best.epoch);
        let partners = fixed_pairing(val.len(), cfg.seed, streams::VALIDATION_PAIRING);
        assert_eq!(paired_bce(&out.model, &val, &partners).unwrap(), best.val_bce);
        assert!(h.alpha_trace.is_empty() && h.epochs.iter().all(|e| e.train_score_mse.is_nan()));
        assert_eq!(h.batches as usize, h.epochs.len() * 400usize.div_ceil(cfg.batch_size));
    }

    #[test]
    fn asa_refreshes_alpha_on_schedule() {
        let (net, data, val) = toy_setup(400);
        let cfg = quick(LossMode::Asa);
        let out = train(net, &data, &val, &cfg, &FrozenClock).unwrap();
        let trace = &out.history.alpha_trace;
        assert_eq!(trace[0].batch, 0);
        assert!(trace.windows(2).all(|w| w[1].batch - w[0].batch == cfg.alpha_interval));
        assert!(trace.iter().all(|r| r.alpha > 0.0 && r.alpha.is_finite()));
        assert!(out.history.epochs.iter().all(|e| e.train_score_mse.is_finite()));
    }

    #[test]
    fn timings_exclude_validation_and_are_ordered() {
        let (net, data, val) = toy_setup(200);
        let cfg = quick(LossMode::Bce);
        let out = train(net, &data, &val, &cfg, &Ticker(Cell::new(0.0))).unwrap();
        let h = &out.history;
        // one tick for calibration, one per batch
        assert_eq!(h.batch_time_mean, 1.0);
        assert_eq!(h.total_time, 1.0 + h.batches as f64);
        assert!(h.time_to_best <= h.total_time);
        assert!(h.epochs.windows(2).all(|w| w[0].elapsed < w[1].elapsed));
    }

    #[test]
    fn training_is_reproducible() {
        let (net, data, val) = toy_setup(200);
        let cfg = quick(LossMode::Asa);
        let a = train(net.clone(), &data, &val, &cfg, &FrozenClock).unwrap();
        let b = train(net, &data, &val, &cfg, &FrozenClock).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn rejects_mismatched_data() {
        let (net, data, _) = toy_setup(50);
        let empty = Dataset::from_parts(&GaussianLocation::default(), 0, Vec::new(), Vec::new(), Vec::new()).unwrap();
        assert!(train(net.clone(), &data, &empty, &quick(LossMode::Bce), &FrozenClock).is_err());
        let wide = build_architecture(Case::Toy, "small", &[2], None, 0).unwrap();
        assert!(matches!(train(wide, &data, &data, &quick(LossMode::Bce), &FrozenClock), Err(Error::ShapeMismatch(_))));
    }
}
