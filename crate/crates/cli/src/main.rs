//! `takres` — runs the seeded experiments and writes their result tables.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 configuration error,
//! 3 divergence-dominated result (more than 90 % of runs diverged).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use takres::harness::{default_workers, run_experiment, EmbedMode, Experiment, ExperimentConfig, Scale};
use takres::Error;

#[derive(Parser)]
#[command(name = "takres", version, about = "Reservoir prediction, delay-embedding diagnostics and neuron control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated Mackey-Glass or FitzHugh-Nagumo series.
    Gen(Common),
    /// ACF, false nearest neighbours or the delay matrix of a series.
    Embed {
        #[arg(value_enum, default_value = "all")]
        mode: EmbedArg,
        /// Series CSV (`value` column); a generated Mackey-Glass series otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Ensemble free-run benchmark of the classical readout.
    Predict(Common),
    /// Node lag profiles of the ensemble.
    Cca(Common),
    /// Lag-window filtered readouts over candidate spacings.
    ScanTau(Common),
    /// Distortion bounds and prediction quality over μ.
    ScanMu(Common),
    /// Distortion bounds at the configured μ.
    Bounds(Common),
    /// Ensemble benchmark of the delayed readout.
    Trrnn(Common),
    /// Delayed readout over the τ_T grid.
    ScanDelay(Common),
    /// One controlled FitzHugh-Nagumo run.
    FhnControl(Common),
    /// Controlled runs over node counts and architectures.
    NodeSweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedArg {
    All,
    Acf,
    Fnn,
    Embed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct Common {
    /// JSON config merged over the experiment's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    /// Base seed of every derived network, sequence and neuron seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Result directory [default: config `output`, else results/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs; 0 uses every core [default: $TAKRES_WORKERS or 0].
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err.downcast_ref::<Error>().is_some_and(|e| {
                matches!(e, Error::Config(_) | Error::Parameter(_) | Error::UnknownExperiment(_) | Error::Json(_))
            });
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (experiment, common, embed) = match cli.command {
        Command::Gen(c) => (Experiment::Gen, c, None),
        Command::Embed { mode, input, common } => (Experiment::Embed, common, Some((mode, input))),
        Command::Predict(c) => (Experiment::Predict, c, None),
        Command::Cca(c) => (Experiment::Cca, c, None),
        Command::ScanTau(c) => (Experiment::ScanTau, c, None),
        Command::ScanMu(c) => (Experiment::ScanMu, c, None),
        Command::Bounds(c) => (Experiment::Bounds, c, None),
        Command::Trrnn(c) => (Experiment::Trrnn, c, None),
        Command::ScanDelay(c) => (Experiment::ScanDelay, c, None),
        Command::FhnControl(c) => (Experiment::FhnControl, c, None),
        Command::NodeSweep(c) => (Experiment::NodeSweep, c, None),
    };
    let scale = common.scale.map(|s| match s {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Paper => Scale::Paper,
    });
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path, Some(experiment), scale)?,
        None => ExperimentConfig::resolve(None, Some(experiment), scale)?,
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.set_workers(common.workers.unwrap_or_else(default_workers));
    if let Some((mode, input)) = embed {
        cfg.embed.mode = match mode {
            EmbedArg::All => EmbedMode::All,
            EmbedArg::Acf => EmbedMode::Acf,
            EmbedArg::Fnn => EmbedMode::Fnn,
            EmbedArg::Embed => EmbedMode::Embed,
        };
        if input.is_some() {
            cfg.embed.input = input;
        }
    }
    cfg.validate()?;
    let out = common
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));
    let record = run_experiment(&cfg, &out).with_context(|| format!("{experiment} failed"))?;
    println!("{}", serde_json::to_string_pretty(&record.summary)?);
    println!("config hash {} -> {}", record.config_hash, out.display());
    if record.summary.divergence_dominated() {
        log::warn!("divergence-dominated result: {:.1}% of runs diverged", record.summary.divergence_pct.unwrap_or(0.0));
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}
