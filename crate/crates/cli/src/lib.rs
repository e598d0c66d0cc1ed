//! Command implementations behind the `topoexplain` binary.

pub mod commands;
pub mod config;
mod staging;

use std::path::{Path, PathBuf};

pub use commands::{cmd_build_mapper, cmd_rank, cmd_stability, cmd_synth};
pub use config::{Plan, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or rejected input data.
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] topoexplain::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    BuildMapper,
    Rank,
    Stability,
    Synth,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Loads and validates the config, then runs `command` on a pool of the
/// configured size. Returns the written files.
pub fn run(command: Command, config_path: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = overrides.threads {
        cfg.threads = threads;
    }
    let plan = cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.config.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {} threads: {e}", plan.config.threads)))?;
    pool.install(|| match command {
        Command::BuildMapper => cmd_build_mapper(&plan),
        Command::Rank => cmd_rank(&plan),
        Command::Stability => cmd_stability(&plan),
        Command::Synth => cmd_synth(&plan),
    })
}
