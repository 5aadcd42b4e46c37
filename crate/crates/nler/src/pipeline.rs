//! The four subcommands as library calls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use nler_core::evaluation::{
    build_etest, build_ltest, etest_metrics, etest_points, infer, ltest_metrics, Evaluator, Inference, InferenceConfig,
};
use nler_core::models::{Observation, StochasticModel};
use nler_core::nn::{build_architecture, Activation, LayerSpec, RatioModel};
use nler_core::training::{generate_dataset, train, Clock, Dataset, FrozenClock, History};

use crate::artifact::{Array, Artifact, Kind, Meta};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::tables::{metrics_table, parse_metrics, MetricRow, Table};

/// Seed tags for the independent datasets of a run.
pub mod tags {
    pub const TRAIN: u64 = 1;
    pub const VALIDATION: u64 = 2;
    pub const LTEST: u64 = 3;
    pub const ETEST: u64 = 4;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

struct Wall(Instant);

impl Clock for Wall {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn base_meta(cfg: &RunConfig, kind: &str) -> Meta {
    let mut m = Meta::default();
    m.set("kind", kind);
    m.set("config_hash", cfg.data_hash());
    m.set("seed", cfg.run.seed);
    m.set("case", cfg.run.case.to_ascii_lowercase());
    let created = if cfg.run.determinism {
        0
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    };
    m.set("created", created);
    m.set("git_revision", git_revision());
    m
}

// ---- datasets ----

pub fn dataset_artifact(data: &Dataset) -> CliResult<Artifact> {
    let n = data.len();
    let d = data.theta_dim;
    let mut a = Artifact::new(Kind::Dataset);
    a.push(Array::f64("theta", vec![n, d], data.thetas.clone()));
    a.push(Array::f64("score", vec![n, d], data.scores.clone()));
    a.push(Array::i32("seed", vec![2], vec![data.seed as u32 as i32, (data.seed >> 32) as u32 as i32]));
    match data.observations.first() {
        Some(Observation::States(s)) => {
            let t = s.len();
            let mut flat = Vec::with_capacity(n * t);
            for o in &data.observations {
                match o {
                    Observation::States(s) if s.len() == t => flat.extend(s.iter().map(|&v| v as i32)),
                    _ => return Err(CliError::Data("mixed observation kinds".into())),
                }
            }
            a.push(Array::i32("states", vec![n, t], flat));
        }
        Some(Observation::Field(f)) => {
            let s = f.len();
            let mut flat = Vec::with_capacity(n * s);
            for o in &data.observations {
                match o {
                    Observation::Field(f) if f.len() == s => flat.extend_from_slice(f),
                    _ => return Err(CliError::Data("mixed observation kinds".into())),
                }
            }
            a.push(Array::f64("field", vec![n, s], flat));
        }
        None => a.push(Array::f64("field", vec![0, 0], vec![])),
    }
    Ok(a)
}

pub fn dataset_from_artifact(a: &Artifact, model: &dyn StochasticModel) -> CliResult<Dataset> {
    let (tdims, thetas) = a.f64s("theta")?;
    let (_, scores) = a.f64s("score")?;
    let (_, seed) = a.i32s("seed")?;
    if seed.len() != 2 || tdims.len() != 2 {
        return Err(CliError::Data("malformed dataset header".into()));
    }
    let seed = (seed[0] as u32 as u64) | ((seed[1] as u32 as u64) << 32);
    let observations: Vec<Observation> = if let Ok((dims, s)) = a.i32s("states") {
        let t = dims[1].max(1);
        s.chunks(t).map(|c| Observation::States(c.iter().map(|&v| v as u32).collect())).collect()
    } else {
        let (dims, f) = a.f64s("field")?;
        let s = dims[1].max(1);
        f.chunks(s).map(|c| Observation::Field(c.to_vec())).collect()
    };
    if observations.len() != tdims[0] {
        return Err(CliError::Data("observation count does not match theta rows".into()));
    }
    Ok(Dataset::from_parts(model, seed, observations, thetas.to_vec(), scores.to_vec())?)
}

/// Loads a dataset after checking its sidecar hash against `cfg`.
pub fn load_dataset(path: &Path, cfg: &RunConfig, model: &dyn StochasticModel) -> CliResult<Dataset> {
    let meta = Meta::read(path)?;
    let expect = cfg.data_hash();
    match meta.get("config_hash") {
        Some(h) if h == expect => {}
        Some(h) => {
            return Err(CliError::Data(format!(
                "{}: config hash mismatch (file {h}, config {expect}); rerun `simulate` with this config",
                path.display()
            )))
        }
        None => return Err(CliError::Data(format!("{}: metadata has no config_hash", path.display()))),
    }
    dataset_from_artifact(&Artifact::read(path, Kind::Dataset)?, model)
}

pub struct SimulateOutput {
    pub train: PathBuf,
    pub validation: PathBuf,
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<SimulateOutput> {
    let model = cfg.model()?;
    let bounds = cfg.case()?.space().train();
    let dir = cfg.data_dir();
    let write = |name: &str, n: usize, tag: u64| -> CliResult<PathBuf> {
        let t = Instant::now();
        let data = generate_dataset(model.as_ref(), &bounds, n, derive_seed(cfg.run.seed, tag))?;
        let path = dir.join(format!("{name}.nlerfs"));
        dataset_artifact(&data)?.write(&path)?;
        let mut meta = base_meta(cfg, "dataset");
        meta.set("split", name);
        meta.set("records", n);
        meta.write(&path)?;
        info!("simulated {n} {name} records in {:.1}s -> {}", t.elapsed().as_secs_f64(), path.display());
        Ok(path)
    };
    let train = write("train", cfg.run.n, tags::TRAIN)?;
    let validation = write("validation", cfg.validation_size(), tags::VALIDATION)?;
    Ok(SimulateOutput { train, validation })
}

// ---- checkpoints ----

fn spec_code(s: &LayerSpec) -> [i32; 3] {
    match *s {
        LayerSpec::Dense { outputs } => [1, outputs as i32, 0],
        LayerSpec::Conv1d { out_channels, kernel } => [2, out_channels as i32, kernel as i32],
        LayerSpec::Conv2d { out_channels, kernel } => [3, out_channels as i32, kernel as i32],
        LayerSpec::AvgPool2d => [4, 0, 0],
        LayerSpec::Activation(Activation::Silu) => [5, 0, 0],
        LayerSpec::Activation(Activation::Relu) => [6, 0, 0],
        LayerSpec::TransposeTimeChannel => [7, 0, 0],
        LayerSpec::Flatten => [8, 0, 0],
        LayerSpec::ConcatTheta => [9, 0, 0],
    }
}

fn spec_from_code(c: &[i32]) -> CliResult<LayerSpec> {
    let u = |v: i32| usize::try_from(v).map_err(|_| CliError::Data("negative layer width".into()));
    Ok(match c[0] {
        1 => LayerSpec::Dense { outputs: u(c[1])? },
        2 => LayerSpec::Conv1d { out_channels: u(c[1])?, kernel: u(c[2])? },
        3 => LayerSpec::Conv2d { out_channels: u(c[1])?, kernel: u(c[2])? },
        4 => LayerSpec::AvgPool2d,
        5 => LayerSpec::Activation(Activation::Silu),
        6 => LayerSpec::Activation(Activation::Relu),
        7 => LayerSpec::TransposeTimeChannel,
        8 => LayerSpec::Flatten,
        9 => LayerSpec::ConcatTheta,
        k => return Err(CliError::Data(format!("unknown layer code {k}"))),
    })
}

/// Architecture descriptor plus one weight array per parameterized layer.
pub fn checkpoint_artifact(net: &RatioModel, epsilon: &[f64]) -> Artifact {
    let mut a = Artifact::new(Kind::Checkpoint);
    a.push(Array::i32(
        "input_shape",
        vec![net.input_shape().len()],
        net.input_shape().iter().map(|&v| v as i32).collect(),
    ));
    a.push(Array::i32("theta_dim", vec![1], vec![net.theta_dim() as i32]));
    let specs = net.specs();
    a.push(Array::i32("architecture", vec![specs.len(), 3], specs.iter().flat_map(spec_code).collect()));
    for (i, layer) in net.layers().iter().enumerate() {
        if layer.params > 0 {
            let w = &net.params()[layer.offset..layer.offset + layer.params];
            a.push(Array::f64(&format!("layer{i}"), vec![layer.params], w.to_vec()));
        }
    }
    a.push(Array::f64("fd_epsilon", vec![epsilon.len()], epsilon.to_vec()));
    a
}

pub fn model_from_checkpoint(a: &Artifact) -> CliResult<RatioModel> {
    let shape: Vec<usize> = a.i32s("input_shape")?.1.iter().map(|&v| v.max(0) as usize).collect();
    let theta_dim = a.i32s("theta_dim")?.1.first().copied().unwrap_or(0).max(0) as usize;
    let (dims, codes) = a.i32s("architecture")?;
    if dims.len() != 2 || dims[1] != 3 {
        return Err(CliError::Data("malformed architecture descriptor".into()));
    }
    let specs = codes.chunks(3).map(spec_from_code).collect::<CliResult<Vec<_>>>()?;
    let mut net =
        RatioModel::new(&shape, theta_dim, &specs, 0).map_err(|e| CliError::Data(format!("checkpoint: {e}")))?;
    let mut params = vec![0.0; net.param_count()];
    for (i, layer) in net.layers().iter().enumerate() {
        if layer.params > 0 {
            let (_, w) = a.f64s(&format!("layer{i}"))?;
            if w.len() != layer.params {
                return Err(CliError::Data(format!(
                    "checkpoint layer {i} has {} weights, expected {}",
                    w.len(),
                    layer.params
                )));
            }
            params[layer.offset..layer.offset + layer.params].copy_from_slice(w);
        }
    }
    net.set_params(&params)?;
    Ok(net)
}

/// Loads a checkpoint and checks it against the configured model.
pub fn load_checkpoint(path: &Path, model: &dyn StochasticModel) -> CliResult<RatioModel> {
    let net = model_from_checkpoint(&Artifact::read(path, Kind::Checkpoint)?)?;
    if net.input_shape() != model.input_shape().as_slice() || net.theta_dim() != model.theta_dim() {
        return Err(CliError::Data(format!(
            "incompatible checkpoint {}: input {:?} / θ dim {} vs configured {:?} / {}",
            path.display(),
            net.input_shape(),
            net.theta_dim(),
            model.input_shape(),
            model.theta_dim()
        )));
    }
    Ok(net)
}

// ---- training ----

pub fn history_tables(h: &History, names: &[&str]) -> (Table, Table, Table) {
    let mut epochs =
        Table::new(&["epoch", "train_bce", "train_score_mse", "val_bce", "val_score_mse", "alpha", "elapsed"]);
    for e in &h.epochs {
        epochs.push([e.epoch as f64, e.train_bce, e.train_score_mse, e.val_bce, e.val_score_mse, e.alpha, e.elapsed]);
    }
    let mut alpha = Table::new(&["batch", "alpha_prime", "alpha"]);
    for r in &h.alpha_trace {
        alpha.push([r.batch.to_string(), r.alpha_prime.to_string(), r.alpha.to_string()]);
    }
    let mut timing = Table::new(&["key", "value"]);
    timing.push(["loss_mode".to_string(), h.loss_mode.name().to_string()]);
    timing.push(["reduction".to_string(), h.reduction.name().to_string()]);
    timing.push(["epochs".to_string(), h.epochs.len().to_string()]);
    timing.push(["best_epoch".to_string(), h.best_epoch.to_string()]);
    timing.push(["batches".to_string(), h.batches.to_string()]);
    timing.push(["batch_time_mean".to_string(), h.batch_time_mean.to_string()]);
    timing.push(["total_time".to_string(), h.total_time.to_string()]);
    timing.push(["time_to_best".to_string(), h.time_to_best.to_string()]);
    for (k, e) in h.epsilon.iter().enumerate() {
        timing.push([format!("epsilon_{}", names[k]), e.to_string()]);
    }
    (epochs, alpha, timing)
}

pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history: History,
    pub run_dir: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, train_path: Option<&Path>, val_path: Option<&Path>) -> CliResult<TrainOutput> {
    let case = cfg.case()?;
    let mode = cfg.loss_mode()?;
    let model = cfg.model()?;
    let dir = cfg.data_dir();
    let train_path = train_path.map(Path::to_path_buf).unwrap_or_else(|| dir.join("train.nlerfs"));
    let val_path = val_path.map(Path::to_path_buf).unwrap_or_else(|| dir.join("validation.nlerfs"));
    let data = load_dataset(&train_path, cfg, model.as_ref())?;
    let val = load_dataset(&val_path, cfg, model.as_ref())?;
    let tc = cfg.train_config(mode)?;
    let net = build_architecture(case, &cfg.run.size_label, &model.input_shape(), cfg.train.conv_blocks, cfg.run.seed)?;
    info!("training {} ({} parameters) on {} records", cfg.run_name(mode.name()), net.param_count(), data.len());
    let out = if cfg.run.determinism {
        train(net, &data, &val, &tc, &FrozenClock)?
    } else {
        train(net, &data, &val, &tc, &Wall(Instant::now()))?
    };

    let run_dir = cfg.run_dir(mode.name());
    let checkpoint = run_dir.join("checkpoint.nlerfs");
    checkpoint_artifact(&out.model, &out.fd.epsilon).write(&checkpoint)?;
    let h = &out.history;
    let mut meta = base_meta(cfg, "checkpoint");
    meta.set("size_label", &cfg.run.size_label);
    meta.set("n", cfg.run.n);
    meta.set("loss_mode", mode.name());
    meta.set("batch_time_mean", h.batch_time_mean);
    meta.set("total_time", h.total_time);
    meta.set("time_to_best", h.time_to_best);
    meta.set("best_epoch", h.best_epoch);
    meta.write(&checkpoint)?;
    let space = case.space();
    let (epochs, alpha, timing) = history_tables(h, &space.names());
    epochs.write(&run_dir.join("history.tsv"))?;
    alpha.write(&run_dir.join("alpha.tsv"))?;
    timing.write(&run_dir.join("timing.tsv"))?;
    info!(
        "{} epochs (best {}), {:.3} ms/batch, total {:.1}s",
        h.epochs.len(),
        h.best_epoch,
        h.batch_time_mean * 1e3,
        h.total_time
    );
    Ok(TrainOutput { checkpoint, history: out.history, run_dir })
}

// ---- evaluation ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    LTest,
    ETest,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::LTest => "ltest",
            EvalMode::ETest => "etest",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "ltest" => Ok(EvalMode::LTest),
            "etest" => Ok(EvalMode::ETest),
            _ => Err(CliError::Config(format!("unknown eval mode {s:?}"))),
        }
    }
}

pub struct EvalOutput {
    pub table: PathBuf,
    pub rows: Vec<MetricRow>,
}

fn inference_config(cfg: &RunConfig) -> CliResult<InferenceConfig> {
    let mut ic = InferenceConfig::new(cfg.case()?.space().base());
    ic.level = cfg.eval.level;
    ic.mle_grid = cfg.eval.mle_grid.unwrap_or(ic.mle_grid);
    ic.wilks_grid = cfg.eval.wilks_grid.unwrap_or(ic.wilks_grid);
    Ok(ic)
}

fn surface_table(name: &str, inf: &Inference, table: &mut Table) {
    if let Some(s) = &inf.surface {
        let nx = s.axis_x.len();
        for (i, v) in s.values.iter().enumerate() {
            table.push([name.to_string(), s.axis_x[i % nx].to_string(), s.axis_y[i / nx].to_string(), v.to_string()]);
        }
    }
}

/// Writes L-test or E-test metrics. Without a checkpoint and with
/// `ground_truth`, only the exact-likelihood baseline is computed.
pub fn cmd_eval(
    cfg: &RunConfig,
    mode: EvalMode,
    checkpoint: Option<&Path>,
    ground_truth: bool,
) -> CliResult<EvalOutput> {
    let case = cfg.case()?;
    let space = case.space();
    let names = space.names();
    let model = cfg.model()?;
    let loss = cfg.loss_mode()?;
    let default_checkpoint = cfg.run_dir(loss.name()).join("checkpoint.nlerfs");
    let net = match (checkpoint, ground_truth) {
        (Some(p), _) => Some(load_checkpoint(p, model.as_ref())?),
        (None, true) => None,
        (None, false) => Some(load_checkpoint(&default_checkpoint, model.as_ref())?),
    };
    let label = if net.is_some() { loss.name() } else { "gt" };
    let run = cfg.run_name(label);

    let mut rows = Vec::new();
    let mut push = |metric: String, value: f64| {
        rows.push(MetricRow {
            metric,
            case: case.name().to_string(),
            size_label: cfg.run.size_label.clone(),
            n: cfg.run.n,
            loss_mode: label.to_string(),
            seed: cfg.run.seed,
            value,
        })
    };
    let mut binary = Artifact::new(Kind::Metrics);
    let metrics_dir = cfg.metrics_dir();
    let started = Instant::now();

    match mode {
        EvalMode::LTest => {
            let net = net.as_ref().ok_or_else(|| CliError::Config("the L-test needs a trained checkpoint".into()))?;
            let set = build_ltest(
                model.as_ref(),
                &space.base(),
                cfg.eval.ltest_size,
                derive_seed(cfg.eval.seed, tags::LTEST),
            )?;
            let m = ltest_metrics(net, &set, &cfg.train_config(loss)?.fd)?;
            push("ltest_bce".into(), m.bce);
            for (k, v) in m.score_mse.iter().enumerate() {
                push(format!("ltest_score_mse_{}", names[k]), *v);
            }
            push("ltest_score_mse".into(), m.score_mse.iter().sum::<f64>() / m.score_mse.len() as f64);
            let meta = Meta::read(checkpoint.unwrap_or(&default_checkpoint)).unwrap_or_default();
            for key in ["batch_time_mean", "total_time", "time_to_best"] {
                if let Some(v) = meta.get(key).and_then(|v| v.parse::<f64>().ok()) {
                    push(format!("train_{key}"), v);
                }
            }
        }
        EvalMode::ETest => {
            let points = etest_points(&space.etest(), cfg.eval.etest_points);
            let set = build_etest(
                model.as_ref(),
                points,
                cfg.eval.etest_groups,
                cfg.eval.etest_group_size,
                derive_seed(cfg.eval.seed, tags::ETEST),
            )?;
            let surface = Some(cfg.eval.surface_group.min(set.groups.len() - 1));
            let ic = inference_config(cfg)?;
            let gt = infer(&Evaluator::GroundTruth(model.as_ref()).prepare(&set.groups)?, &set, &ic, surface)?;
            let nl = match &net {
                Some(n) => Some(infer(
                    &Evaluator::Nler { net: n, model: model.as_ref() }.prepare(&set.groups)?,
                    &set,
                    &ic,
                    surface,
                )?),
                None => None,
            };
            let r = etest_metrics(nl.as_ref(), &gt, &set);
            push("etest_gt_coverage".into(), r.gt_coverage);
            push("etest_gt_mean_area".into(), r.gt_mean_area);
            push("etest_gt_mean_area_fraction".into(), r.gt_mean_area_fraction);
            push("etest_gt_lambda_mean".into(), mean(&r.gt_null_lambdas));
            if nl.is_some() {
                push("etest_lrts_mse".into(), r.lrts_mse);
                push("etest_nler_coverage".into(), r.nler_coverage);
                push("etest_nler_mean_area".into(), r.nler_mean_area);
                push("etest_nler_mean_area_fraction".into(), r.nler_mean_area_fraction);
                push("etest_nler_lambda_mean".into(), mean(&r.nler_null_lambdas));
                for (k, v) in r.mle_median_sq_error.iter().enumerate() {
                    push(format!("etest_mle_median_sq_error_{}", names[k]), *v);
                }
            }

            let mut null = Table::new(&["evaluator", "lambda"]);
            r.gt_null_lambdas.iter().for_each(|l| null.push(["gt".to_string(), l.to_string()]));
            r.nler_null_lambdas.iter().for_each(|l| null.push(["nler".to_string(), l.to_string()]));
            null.write(&metrics_dir.join(format!("{run}_etest_null.tsv")))?;
            binary.push(Array::f64("gt_null_lambdas", vec![r.gt_null_lambdas.len()], r.gt_null_lambdas.clone()));
            binary.push(Array::f64("nler_null_lambdas", vec![r.nler_null_lambdas.len()], r.nler_null_lambdas.clone()));

            let mut surf = Table::new(&["evaluator", "x", "y", "value"]);
            surface_table("gt", &gt, &mut surf);
            if let Some(n) = &nl {
                surface_table("nler", n, &mut surf);
            }
            surf.write(&metrics_dir.join(format!("{run}_etest_surface.tsv")))?;
            if let Some(s) = &gt.surface {
                let g = s.group;
                let mut marks = Table::new(&["marker", "x", "y"]);
                let truth = set.truth(g);
                marks.push(["truth".to_string(), truth[0].to_string(), truth[1].to_string()]);
                marks.push(["gt_mle".to_string(), gt.mles[g][0].to_string(), gt.mles[g][1].to_string()]);
                if let Some(n) = &nl {
                    marks.push(["nler_mle".to_string(), n.mles[g][0].to_string(), n.mles[g][1].to_string()]);
                }
                marks.write(&metrics_dir.join(format!("{run}_etest_markers.tsv")))?;
            }
        }
    }
    let elapsed = if cfg.run.determinism { 0.0 } else { started.elapsed().as_secs_f64() };
    push(format!("{}_eval_time", mode.name()), elapsed);

    for r in &rows {
        binary.push(Array::f64(&r.metric, vec![1], vec![r.value]));
    }
    let stem = format!("{run}_{}", mode.name());
    let table = metrics_dir.join(format!("{stem}.tsv"));
    metrics_table(&rows).write(&table)?;
    let bin = metrics_dir.join(format!("{stem}.nlerfs"));
    binary.write(&bin)?;
    let mut meta = base_meta(cfg, "metrics");
    meta.set("loss_mode", label);
    meta.write(&bin)?;
    Ok(EvalOutput { table, rows })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

// ---- report ----

pub struct ReportOutput {
    pub paired: PathBuf,
    pub curves: PathBuf,
    pub pairs: usize,
    pub unpaired: usize,
}

type Key = (String, String, String, usize, u64);

/// Joins BCE-only and ASA rows on (metric, case, size label, N, seed).
pub fn cmd_report(out_dir: &Path) -> CliResult<ReportOutput> {
    let metrics_dir = out_dir.join("metrics");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&metrics_dir)
        .map_err(|e| CliError::io(&metrics_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            name.ends_with("_ltest.tsv") || name.ends_with("_etest.tsv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no metrics files in {}", metrics_dir.display())));
    }
    let mut joined: BTreeMap<Key, BTreeMap<String, f64>> = BTreeMap::new();
    for f in &files {
        for r in parse_metrics(&Table::read(f)?)? {
            joined.entry((r.metric, r.case, r.size_label, r.n, r.seed)).or_default().insert(r.loss_mode, r.value);
        }
    }
    let mut paired = Table::new(&["metric", "case", "size_label", "N", "seed", "bce", "asa", "gt", "paired"]);
    let (mut pairs, mut unpaired) = (0, 0);
    let cell = |m: &BTreeMap<String, f64>, k: &str| m.get(k).map_or(String::new(), |v| v.to_string());
    for ((metric, case, size, n, seed), by_mode) in &joined {
        let is_pair = by_mode.contains_key("bce") && by_mode.contains_key("asa");
        let has_nler = by_mode.contains_key("bce") || by_mode.contains_key("asa");
        if is_pair {
            pairs += 1;
        } else if has_nler {
            unpaired += 1;
            warn!("missing pair for {metric} {case} {size} N={n} seed={seed}");
        }
        paired.push([
            metric.clone(),
            case.clone(),
            size.clone(),
            n.to_string(),
            seed.to_string(),
            cell(by_mode, "bce"),
            cell(by_mode, "asa"),
            cell(by_mode, "gt"),
            (is_pair as u8).to_string(),
        ]);
    }

    let mut curves = Table::new(&["case", "size_label", "N", "seed", "loss_mode", "history"]);
    let runs_dir = out_dir.join("runs");
    if let Ok(entries) = std::fs::read_dir(&runs_dir) {
        let mut runs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        runs.sort();
        for run in runs {
            let history = run.join("history.tsv");
            let Some(name) = run.file_name().and_then(|s| s.to_str()) else { continue };
            // <case>_<size>_N<n>_<loss>_s<seed>
            let parts: Vec<&str> = name.rsplitn(4, '_').collect();
            if !history.exists() || parts.len() != 4 {
                continue;
            }
            let (seed, loss, n, prefix) =
                (parts[0].trim_start_matches('s'), parts[1], parts[2].trim_start_matches('N'), parts[3]);
            let Some((case, size)) = prefix.split_once('_') else { continue };
            curves.push([case, size, n, seed, loss, &format!("runs/{name}/history.tsv")]);
        }
    }
    let report = out_dir.join("report");
    let paired_path = report.join("paired.tsv");
    let curves_path = report.join("curves.tsv");
    paired.write(&paired_path)?;
    curves.write(&curves_path)?;
    Ok(ReportOutput { paired: paired_path, curves: curves_path, pairs, unpaired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nler_core::models::{SisConfig, SisModel};
    use nler_core::space::Case;

    #[test]
    fn seeds_are_distinct_per_tag() {
        let s: Vec<u64> = (1..=4).map(|t| derive_seed(0, t)).collect();
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(derive_seed(5, 1), derive_seed(5, 1));
    }

    #[test]
    fn dataset_round_trip() {
        let model = SisModel::new(SisConfig::unit_square()).unwrap();
        let data = generate_dataset(&model, &Case::Sis.space().train(), 20, 3).unwrap();
        let a = dataset_artifact(&data).unwrap();
        let back = dataset_from_artifact(&Artifact::from_bytes(&a.to_bytes().unwrap()).unwrap(), &model).unwrap();
        assert_eq!(back, data);
        assert_eq!(a.i32s("states").unwrap().0, &[20, 13]);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = build_architecture(Case::Gp, "30K", &[1, 8, 8], None, 4).unwrap();
        let a = checkpoint_artifact(&net, &[1e-5; 3]);
        let back = model_from_checkpoint(&Artifact::from_bytes(&a.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.specs(), net.specs());
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = [0.1, -0.2, -2.0];
        assert_eq!(back.forward(&x, &t).unwrap().to_bits(), net.forward(&x, &t).unwrap().to_bits());
    }
}
