//! Command-line front end for the `iwsl` library.

pub mod audit;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use commands::{Context, Failure};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "iwsl",
    version,
    about = "Importance-weighted structure learning on synthetic scene graphs"
)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides IWSL_OUT and `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training set (and held-out set if holdout_count > 0).
    Synth,
    /// Train on a dataset; writes checkpoint.bin, loss.csv and train.json.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a checkpoint; writes metrics.csv and metrics.json for both readouts.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to <out>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train once, then evaluate the held-out set for each sample count.
    AblateSamples {
        /// Comma-separated sample counts (overrides `ablate_samples`).
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<usize>>,
    },
    /// Run the oracle and gradient cross-checks; exit 1 on any failure.
    Audit,
    /// Summarise the outputs found in the output directory as report.md.
    Report,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            Ok(RunConfig::parse_str(&text)?)
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let ctx = Context {
        out: commands::resolve_out(cli.out.as_deref(), &cfg),
        cfg,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.workers)
        .build()
        .map_err(|e| Failure::usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Train { dataset } => commands::train(&ctx, dataset),
        Command::Eval {
            dataset,
            checkpoint,
        } => commands::eval(&ctx, dataset, checkpoint.as_deref()),
        Command::AblateSamples { samples } => commands::ablate_samples(&ctx, samples.as_deref()),
        Command::Audit => commands::audit(&ctx),
        Command::Report => commands::report(&ctx),
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                commands::EXIT_USAGE
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
