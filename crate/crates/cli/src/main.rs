use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wifiprox::config::PipelineConfig;
use wifiprox::models::{FeatureSet, ModelKind};

mod stages;

/// Infer person-to-person proximity from co-located WiFi scans.
#[derive(Debug, Parser)]
#[command(name = "wifiprox", version)]
struct Cli {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all stage files (overrides `work_dir`).
    #[arg(long, global = true)]
    dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pairing window in seconds.
    #[arg(long, global = true)]
    delta_t: Option<i64>,
    #[arg(long, global = true)]
    featureset: Option<FeatureSet>,
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    train_size: Option<usize>,
    /// Abort on the first malformed log line instead of skipping it.
    #[arg(long, global = true)]
    strict_parse: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a population and write WiFi, Bluetooth and ground-truth logs.
    Generate,
    /// Drop ambiguous routers and detect home routers.
    Clean,
    /// Build labelled candidate pairs.
    Pair,
    /// Compute the feature table.
    Featurize,
    /// Tune and fit a tree ensemble on the configured featureset.
    Train,
    /// Score the held-out set and the single-feature baselines.
    Evaluate,
    /// Aggregate every evaluation into one summary.
    Report,
    /// Print the resolved configuration as a documented config file.
    Config,
}

pub enum Failure {
    Data(wifiprox::Error),
    Config(wifiprox::Error),
}

impl From<wifiprox::Error> for Failure {
    fn from(e: wifiprox::Error) -> Self {
        Failure::Data(e)
    }
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, wifiprox::Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.dir {
        cfg.work_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = cli.delta_t {
        cfg.delta_t = dt;
    }
    if let Some(fs) = cli.featureset {
        cfg.featureset = fs;
    }
    if let Some(model) = cli.model {
        cfg.model = model;
    }
    if let Some(n) = cli.train_size {
        cfg.train_size = n;
    }
    cfg.strict_parse |= cli.strict_parse;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(cli).map_err(Failure::Config)?;
    match cli.command {
        Command::Generate => stages::generate(&cfg)?,
        Command::Clean => stages::clean(&cfg)?,
        Command::Pair => stages::pair(&cfg)?,
        Command::Featurize => stages::featurize(&cfg)?,
        Command::Train => stages::train(&cfg)?,
        Command::Evaluate => stages::evaluate(&cfg)?,
        Command::Report => stages::report(&cfg)?,
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("wifiprox: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Config(e)) => {
            eprintln!("wifiprox: configuration: {e}");
            ExitCode::from(4)
        }
    }
}
