//! TOML run configuration. Every key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use nler_core::models::{GaussianLocation, GpModel, Grid, SisConfig, SisModel, StochasticModel, StpModel};
use nler_core::nn::{layer_stack, max_conv_blocks};
use nler_core::space::Case;
use nler_core::training::{FdConfig, LossMode, Reduction, TrainConfig};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub case: String,
    pub size_label: String,
    pub n: usize,
    pub loss_mode: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Frozen clock and fixed metadata timestamps.
    pub determinism: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            case: "sis".into(),
            size_label: "30K".into(),
            n: 10_000,
            loss_mode: "bce".into(),
            seed: 0,
            out_dir: PathBuf::from("nler-out"),
            determinism: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `two_squares` (K = 8) or `unit_square` (K = 4).
    pub sis_layout: String,
    pub grid_side: usize,
    /// Defaults to `n`.
    pub validation_size: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { sis_layout: "two_squares".into(), grid_side: 8, validation_size: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub min_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    /// `mean` or `sum`.
    pub reduction: Option<String>,
    pub alpha_interval: Option<u64>,
    pub alpha_window: Option<usize>,
    pub fd_initial_epsilon: Option<f64>,
    pub fd_rel_error_threshold: Option<f64>,
    pub fd_floor: Option<f64>,
    /// Spatial conv+pool blocks; defaults to what the grid supports.
    pub conv_blocks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Seed of the held-out sets, shared by every run so they compare.
    pub seed: u64,
    pub ltest_size: usize,
    pub etest_points: usize,
    pub etest_groups: usize,
    pub etest_group_size: usize,
    pub level: f64,
    pub mle_grid: Option<usize>,
    pub wilks_grid: Option<usize>,
    /// Group whose score surface is exported.
    pub surface_group: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            seed: 7,
            ltest_size: 20_000,
            etest_points: 100,
            etest_groups: 30,
            etest_group_size: 10,
            level: 0.95,
            mle_grid: None,
            wilks_grid: None,
            surface_group: 0,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn case(&self) -> CliResult<Case> {
        Case::parse(&self.run.case).map_err(config_err)
    }

    pub fn loss_mode(&self) -> CliResult<LossMode> {
        LossMode::parse(&self.run.loss_mode).map_err(config_err)
    }

    pub fn validation_size(&self) -> usize {
        self.data.validation_size.unwrap_or(self.run.n)
    }

    pub fn validate(&self) -> CliResult<()> {
        let case = self.case()?;
        self.loss_mode()?;
        if self.run.n == 0 || self.validation_size() == 0 {
            return Err(CliError::Config("dataset sizes must be positive".into()));
        }
        let model = self.model()?;
        layer_stack(case, &self.run.size_label, &model.input_shape(), self.train.conv_blocks).map_err(config_err)?;
        if let (Case::Gp | Case::Stp, Some(b)) = (case, self.train.conv_blocks) {
            let max = max_conv_blocks(self.data.grid_side);
            if b == 0 || b > max {
                return Err(CliError::Config(format!(
                    "conv_blocks must be in 1..={max} for a {0}x{0} grid",
                    self.data.grid_side
                )));
            }
        }
        self.train_config(LossMode::Bce)?;
        let e = &self.eval;
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(CliError::Config(format!("eval.level {} outside (0, 1)", e.level)));
        }
        if e.ltest_size == 0 || e.etest_points == 0 || e.etest_groups == 0 || e.etest_group_size == 0 {
            return Err(CliError::Config("evaluation set sizes must be positive".into()));
        }
        if e.mle_grid == Some(0) || e.wilks_grid == Some(0) {
            return Err(CliError::Config("evaluation grids need at least one point per dimension".into()));
        }
        Ok(())
    }

    pub fn sis_config(&self) -> CliResult<SisConfig> {
        match self.data.sis_layout.as_str() {
            "two_squares" => Ok(SisConfig::two_squares()),
            "unit_square" => Ok(SisConfig::unit_square()),
            other => Err(CliError::Config(format!("unknown sis_layout {other:?}"))),
        }
    }

    pub fn model(&self) -> CliResult<Box<dyn StochasticModel>> {
        Ok(match self.case()? {
            Case::Sis => Box::new(SisModel::new(self.sis_config()?).map_err(config_err)?),
            Case::Gp => Box::new(GpModel::new(Grid::new(self.data.grid_side).map_err(config_err)?)),
            Case::Stp => Box::new(StpModel::new(Grid::new(self.data.grid_side).map_err(config_err)?)),
            Case::Toy => Box::new(GaussianLocation::default()),
        })
    }

    pub fn train_config(&self, mode: LossMode) -> CliResult<TrainConfig> {
        let case = self.case()?;
        let t = &self.train;
        let mut c = TrainConfig::for_case(case, self.run.n, mode, self.run.seed);
        c.batch_size = t.batch_size.unwrap_or(c.batch_size);
        c.learning_rate = t.learning_rate.unwrap_or(c.learning_rate);
        c.weight_decay = t.weight_decay.unwrap_or(c.weight_decay);
        c.min_epochs = t.min_epochs.unwrap_or(c.min_epochs);
        c.max_epochs = t.max_epochs.unwrap_or(c.max_epochs);
        c.patience = t.patience.unwrap_or(c.patience);
        c.alpha_interval = t.alpha_interval.unwrap_or(c.alpha_interval);
        c.alpha_window = t.alpha_window.unwrap_or(c.alpha_window);
        c.reduction = match t.reduction.as_deref() {
            None | Some("mean") => Reduction::Mean,
            Some("sum") => Reduction::Sum,
            Some(other) => return Err(CliError::Config(format!("unknown reduction {other:?}"))),
        };
        let d = case.space().dim();
        let mut fd = FdConfig::new(d);
        if let Some(e) = t.fd_initial_epsilon {
            fd.epsilon = vec![e; d];
        }
        fd.rel_error_threshold = t.fd_rel_error_threshold.unwrap_or(fd.rel_error_threshold);
        fd.floor = t.fd_floor.unwrap_or(fd.floor);
        c.fd = fd;
        if c.batch_size == 0 || c.alpha_interval == 0 || c.alpha_window == 0 || c.max_epochs == 0 {
            return Err(CliError::Config(
                "batch_size, alpha_interval, alpha_window and max_epochs must be positive".into(),
            ));
        }
        if !(c.learning_rate > 0.0) || !(c.weight_decay >= 0.0) {
            return Err(CliError::Config("learning_rate must be positive and weight_decay nonnegative".into()));
        }
        if !(c.fd.epsilon[0] > 0.0 && c.fd.floor > 0.0 && c.fd.rel_error_threshold > 0.0) {
            return Err(CliError::Config("finite-difference settings must be positive".into()));
        }
        Ok(c)
    }

    /// Hash of everything that determines the simulated data.
    pub fn data_hash(&self) -> String {
        let canonical = format!(
            "case={}\nn={}\nvalidation_size={}\nseed={}\nsis_layout={}\ngrid_side={}\n",
            self.run.case.to_ascii_lowercase(),
            self.run.n,
            self.validation_size(),
            self.run.seed,
            self.data.sis_layout,
            self.data.grid_side
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// `<case>_<size>_N<n>_<loss>_s<seed>`.
    pub fn run_name(&self, loss: &str) -> String {
        format!(
            "{}_{}_N{}_{}_s{}",
            self.run.case.to_ascii_lowercase(),
            self.run.size_label,
            self.run.n,
            loss,
            self.run.seed
        )
    }

    pub fn data_dir(&self) -> PathBuf {
        self.run.out_dir.join("data").join(format!(
            "{}_N{}_s{}",
            self.run.case.to_ascii_lowercase(),
            self.run.n,
            self.run.seed
        ))
    }

    pub fn run_dir(&self, loss: &str) -> PathBuf {
        self.run.out_dir.join("runs").join(self.run_name(loss))
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.run.out_dir.join("metrics")
    }
}
