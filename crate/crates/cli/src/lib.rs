//! Experiment driver: config parsing, seeded dispatch, report persistence.
//!
//! Exit codes: 0 success, 1 runtime failure (with stage), 2 config parse
//! failure (with line/column), 3 parameter precondition failure (naming the
//! parameter).

/// Status output that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use clap::Parser;
use std::path::PathBuf;

use config::ConfigMap;
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "sparse-transfer",
    about = "Seeded verification experiments for sparse coding and parameter transfer"
)]
pub struct CliArgs {
    /// Configuration file with dotted keys (e.g. `genmodel.sigma = 0.1`).
    #[arg(long)]
    pub config: PathBuf,

    /// Command to run; overrides the `command` config key.
    #[arg(long)]
    pub command: Option<String>,

    /// Base seed; overrides the `seed` config key (default 0).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Trial count; overrides the `trials` config key.
    #[arg(long)]
    pub trials: Option<usize>,

    /// Report path; overrides the `output_path` config key. The summary CSV
    /// is written next to it with a `.csv` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &CliArgs) -> Result<(), CliError> {
    let mut cfg = ConfigMap::from_file(&args.config)?;
    if let Some(cmd) = &args.command {
        cfg.set("command", cmd.clone());
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(trials) = args.trials {
        cfg.set("trials", trials.to_string());
    }
    if let Some(out) = &args.out {
        cfg.set("output_path", out.display().to_string());
    }

    let command = cfg.require_str("command")?.to_string();
    let seed = cfg.get_u64("seed")?.unwrap_or(0);
    let trials = cfg.get_usize("trials")?;
    let out = PathBuf::from(cfg.require_str("output_path")?);

    commands::dispatch(&command, &cfg, seed, trials, &out)
}
