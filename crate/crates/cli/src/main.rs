//! `clipedit`: synthesize corpora, warm up, co-train with clip editing,
//! evaluate checkpoints and run ablation sweeps.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numeric
//! failure during training or evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Axis;
use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<clipedit::Error> for Failure {
    fn from(e: clipedit::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "clipedit",
    version,
    about = "Timestamp-supervised clip editing for caption-to-clip retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set edit.k=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for editing and evaluation; results do not depend on it.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Re-read and validate every output after writing it.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus (features/ and annotations.jsonl).
    Synth(Common),
    /// Warm up on initial clips; writes warmup.cfp and test metrics.
    Warmup(Common),
    /// Warm-up, control set, then student/teacher co-training with editing.
    Cotrain(Common),
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Sweep one setting; one co-training run per value plus sweep.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. `3,5,10,15`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(c) | Command::Warmup(c) | Command::Cotrain(c) => c,
            Command::Eval { common, .. } | Command::Ablate { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.command.common();
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(out) = &common.out {
        cfg.paths.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let check = common.check;
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, check),
        Command::Warmup(_) => commands::warmup(&cfg, check),
        Command::Cotrain(_) => commands::cotrain_cmd(&cfg, check),
        Command::Eval { checkpoint, .. } => commands::eval(&cfg, checkpoint, check),
        Command::Ablate { axis, values, .. } => commands::ablate(&cfg, *axis, values, check),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
