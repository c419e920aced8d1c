//! Configuration-driven experiment runner for the MP correlator simulation.
//!
//! A run reads an [`config::ExperimentConfig`], validates every parameter
//! against the experiment's schema, computes all artifacts in memory and only
//! then writes them, so a failed run leaves no files behind.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiments::{Experiment, Plan};
pub use output::Artifacts;

use std::path::Path;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "MPCORR_THREADS";

/// Thread count from the environment, then the config, else rayon's default.
pub fn resolve_threads(config_threads: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
            if n == 0 {
                return Err(CliError::Usage(format!("{THREADS_ENV} must be positive")));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(config_threads),
    }
}

/// Runs a plan on a dedicated pool of `threads` workers.
pub fn run_plan(plan: &Plan, seed: u64, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Numerical(format!("cannot start worker pool: {e}")))?;
    pool.install(|| plan.run(seed))
}

/// Validates, runs and writes one configured experiment.
pub fn execute(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let plan = config.plan()?;
    let threads = resolve_threads(config.threads)?;
    let mut artifacts = run_plan(&plan, config.seed, threads)?;
    artifacts.add_manifest(config, &plan)?;
    artifacts.write_to(Path::new(&config.output_dir))?;
    Ok(artifacts)
}
