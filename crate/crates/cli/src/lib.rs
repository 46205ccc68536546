//! `qms-lab`: runs experiments on inductive sequences from a JSON config and
//! writes `<experiment>_<command>.csv` plus a JSON sidecar with witness data.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

pub use commands::Command;
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
pub use report::{Report, ReportRow};

/// Paths of the files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub report: Report,
}

/// Builds the report for `cmd` without touching the filesystem.
pub fn execute(cmd: Command, config: &ExperimentConfig) -> Result<Report> {
    let seed = config.validate()?;
    let seq = config.build_sequence()?;
    let ideals = config.build_ideals(&seq)?;
    let mut digest_view = config.clone();
    digest_view.output = Default::default();
    let digest = report::sha256_hex(serde_json::to_string(&digest_view)?.as_bytes());
    let ctx = commands::Context {
        config,
        seed,
        seq,
        ideals,
    };
    let mut report = Report::new(&config.experiment, cmd.name(), seed, digest);
    commands::run_command(cmd, &ctx, &mut report)?;
    Ok(report)
}

/// Loads the config, applies overrides, runs the command and writes both
/// report files. Failing rows are still written before the error is returned.
pub fn run(cmd: Command, config_path: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides);
    let report = execute(cmd, &config)?;
    let (csv, json) = report.write(&config.output.dir)?;
    let failures: Vec<String> = report.failures().into_iter().map(String::from).collect();
    if !failures.is_empty() {
        return Err(CliError::Numeric {
            detail: format!("{} row(s) failed; see {}", failures.len(), json.display()),
            quantities: failures,
        });
    }
    Ok(RunOutput { csv, json, report })
}
