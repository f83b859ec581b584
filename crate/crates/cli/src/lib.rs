//! Batch driver for the homogenization solvers.

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};

use clap::Parser;

pub use config::{Command, ConfigError, ExperimentConfig, PlotKind};
pub use output::{export_plotdata, write_outputs, Manifest, OutputError};
pub use run::{execute, Results};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mvhom", version, about = "Homogenized densities of manifold-constrained linear-growth energies")]
pub struct Cli {
    /// tfhom | theta | fhom-eval | gamma-sweep | certify | probes
    pub command: String,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overridden by MVHOM_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Solver(#[from] mvhom_core::Error),
    #[error("invalid thread count: {0}")]
    Threads(String),
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub results: Results,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

fn thread_count(cli: Option<usize>, config: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Ok(v) = std::env::var("MVHOM_THREADS") {
        let n = v.trim().parse::<usize>().map_err(|_| CliError::Threads(v.clone()))?;
        return Ok(Some(n));
    }
    Ok(cli.or(config))
}

/// Parses the config, runs the command and writes all artifacts.
pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    let command = Command::parse(&cli.command).ok_or_else(|| CliError::UnknownCommand(cli.command.clone()))?;
    let text = std::fs::read_to_string(&cli.config).map_err(|source| CliError::Io {
        path: cli.config.clone(),
        source,
    })?;
    let base = cli.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let cfg = ExperimentConfig::parse(&text, command, cli.seed, &base)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("mvhom-out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads, cfg.threads)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Threads(e.to_string()))?;
    let results = pool.install(|| execute(&cfg))?;
    let manifest = write_outputs(&out_dir, command, cfg.seed, &text, &results, &cfg.plots)?;
    Ok(RunOutcome {
        out_dir,
        manifest,
        results,
    })
}

/// Exit status for the process: 0, 2 when some solve did not converge, 1 on error.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(outcome) => {
            if outcome.exit_code() == EXIT_NOT_CONVERGED {
                log::warn!("some solves stopped before convergence; results were written");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
