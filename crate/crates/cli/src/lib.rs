//! Batch runner: JSON experiment configs in, CSV or JSON tables with reproduction metadata out.

pub mod config;
pub mod experiments;
pub mod output;
pub mod sweep;
pub mod validate;

use std::time::Instant;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use output::{Artifact, Metadata};
pub use validate::{validate, ValidationReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Validates, computes and packages one experiment. Nothing is written.
pub fn execute(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let report = validate(cfg);
    if report.has_errors() {
        let msg: Vec<String> = report.errors().map(|v| format!("{}: {}", v.code, v.message)).collect();
        return Err(CliError::Schema(msg.join("; ")));
    }
    for w in report.warnings() {
        log::warn!("{}: {}", w.code, w.message);
    }
    let start = Instant::now();
    let out = experiments::compute(cfg)?;
    let metadata = Metadata {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        git_revision: env!("SQCAT_GIT_REV"),
        kind: cfg.experiment.kind(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        tolerances: Default::default(),
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings: report.warnings().cloned().collect(),
        skipped: out.skipped,
        summary: out.summary,
        config: cfg.clone(),
    };
    Ok(Artifact { metadata, table: out.table })
}
