use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nler::pipeline::{cmd_eval, cmd_report, cmd_simulate, cmd_train, EvalMode};
use nler::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "nler", version, about = "Train and evaluate score-augmented ratio estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Bce,
    Asa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ltest,
    Etest,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    loss: Option<Loss>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    determinism: Option<Switch>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training and validation datasets.
    Simulate(Common),
    /// Train a network on simulated datasets.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        val_data: Option<PathBuf>,
    },
    /// Compute L-test or E-test metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ltest")]
        mode: Mode,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the exact likelihood only (no checkpoint).
        #[arg(long)]
        ground_truth: bool,
    },
    /// Pair BCE-only and ASA metrics across runs.
    Report(Common),
}

fn load(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(l) = c.loss {
        cfg.run.loss_mode = match l {
            Loss::Bce => "bce",
            Loss::Asa => "asa",
        }
        .into();
    }
    if let Some(o) = &c.out {
        cfg.run.out_dir = o.clone();
    }
    if let Some(d) = c.determinism {
        cfg.run.determinism = matches!(d, Switch::On);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let out = cmd_simulate(&load(&c)?)?;
            println!("{}\n{}", out.train.display(), out.validation.display());
        }
        Command::Train { common, train_data, val_data } => {
            let out = cmd_train(&load(&common)?, train_data.as_deref(), val_data.as_deref())?;
            println!("{}", out.checkpoint.display());
        }
        Command::Eval { common, mode, checkpoint, ground_truth } => {
            if ground_truth && checkpoint.is_some() {
                return Err(CliError::Config("--ground-truth takes no checkpoint".into()));
            }
            let mode = match mode {
                Mode::Ltest => EvalMode::LTest,
                Mode::Etest => EvalMode::ETest,
            };
            let out = cmd_eval(&load(&common)?, mode, checkpoint.as_deref(), ground_truth)?;
            println!("{}", out.table.display());
        }
        Command::Report(c) => {
            let out = cmd_report(&load(&c)?.run.out_dir)?;
            println!("{}\n{}", out.paired.display(), out.curves.display());
            if out.unpaired > 0 {
                eprintln!("warning: {} metric rows have no BCE/ASA partner", out.unpaired);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
