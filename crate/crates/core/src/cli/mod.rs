//! Batch front end: configuration, epoch-file replay, the estimator pipeline
//! and output files.
//!
//! Three commands are exposed as library functions and wired to the `raps`
//! binary:
//!
//! * [`simulate`] writes an epoch file and a truth file for a scenario.
//! * [`run`] runs the configured estimators over a scenario or an epoch file.
//! * [`report`] recomputes the summaries from a records file.

pub mod epoch_file;
pub mod output;
pub mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::{risk_trace, summarize_all};
use crate::propagation::ProcessNoiseParams;
use crate::selection::SelectorConfig;
use crate::simulator::{generate_scenario, ScenarioConfig};
use crate::types::EstimatorKind;

pub use epoch_file::{
    load_epoch_file, load_truth_file, write_epoch_file, write_truth_file, EpochFile, EpochFileHeader,
};
pub use pipeline::{
    run_estimator, run_estimators, EstimatorTrack, InitialCondition, PipelineOptions, RunInput, TraceEntry,
};

pub const EPOCH_FILE_NAME: &str = "epochs.jsonl";
pub const TRUTH_FILE_NAME: &str = "truth.jsonl";
pub const RECORDS_FILE_NAME: &str = "records.csv";
pub const SUMMARY_FILE_NAME: &str = "summary.csv";
pub const RISK_TRACE_FILE_NAME: &str = "risk_trace.csv";
pub const CDF_FILE_NAME: &str = "cdf.csv";
pub const SELECTIONS_FILE_NAME: &str = "selections.jsonl";
pub const MANIFEST_FILE_NAME: &str = "manifest.json";

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
        }
    }

    pub(crate) fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Self::Data(format!("{context}: {err}"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidInterval(_) | Error::InstanceTooLarge { .. } => {
                Self::Config(e.to_string())
            }
            other => Self::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Ekf, EstimatorKind::Td, EstimatorKind::RapsGreedy]
}

/// Contents of the TOML configuration file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario to simulate when no epoch file is given.
    pub scenario: ScenarioConfig,
    /// Replay this epoch file instead of simulating.
    pub epoch_file: Option<PathBuf>,
    /// Truth for the epoch file; without it error statistics are skipped.
    pub truth_file: Option<PathBuf>,
    pub estimators: Vec<EstimatorKind>,
    /// Selector settings shared by all estimators; `strategy` is ignored.
    pub selector: SelectorConfig,
    pub process_noise: ProcessNoiseParams,
    pub initial: InitialCondition,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            epoch_file: None,
            truth_file: None,
            estimators: default_estimators(),
            selector: SelectorConfig::default(),
            process_noise: ProcessNoiseParams::default(),
            initial: InitialCondition::default(),
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative file paths are resolved against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for file in [&mut config.epoch_file, &mut config.truth_file].into_iter().flatten() {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.estimators.is_empty() {
            return Err(CliError::Config("at least one estimator is required".into()));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(CliError::Config("estimators are listed more than once".into()));
        }
        if self.epoch_file.is_none() {
            self.scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.truth_file.is_some() && self.epoch_file.is_none() {
            return Err(CliError::Config("truth_file requires epoch_file".into()));
        }
        self.selector.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.process_noise
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.initial.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            selector: self.selector,
            process_noise: self.process_noise,
            initial: self.initial.clone(),
            keep_trace: false,
        }
    }

    /// Measurement stream and truth from the epoch file or the scenario.
    pub fn input(&self) -> CliResult<RunInput> {
        match &self.epoch_file {
            Some(path) => {
                let file = load_epoch_file(path)?;
                let truth = self.truth_file.as_deref().map(load_truth_file).transpose()?;
                RunInput::from_epoch_file(file, truth.map(|t| t.1))
            }
            None => Ok(RunInput::from_scenario(generate_scenario(&self.scenario)?)),
        }
    }
}

/// Writes `epochs.jsonl` and `truth.jsonl` for the configured scenario.
pub fn simulate(config: &RunConfig, out: &Path) -> CliResult<()> {
    let scenario = generate_scenario(&config.scenario)?;
    fs::create_dir_all(out).map_err(|e| CliError::data(out.display(), e))?;
    let header = EpochFileHeader::new(scenario.origin, scenario.constellations, scenario.windows.clone());
    write_epoch_file(&out.join(EPOCH_FILE_NAME), &header, &scenario.epochs)?;
    write_truth_file(&out.join(TRUTH_FILE_NAME), &header, &scenario.truth)?;
    log::info!("wrote {} epochs to {}", scenario.epochs.len(), out.display());
    Ok(())
}

/// Runs every configured estimator and writes all output files to `out`.
pub fn run(config: &RunConfig, out: &Path) -> CliResult<Vec<EstimatorTrack>> {
    config.validate()?;
    let input = config.input()?;
    let tracks = run_estimators(&input, &config.estimators, &config.pipeline_options())?;
    fs::create_dir_all(out).map_err(|e| CliError::data(out.display(), e))?;
    let records: Vec<_> = tracks.iter().flat_map(|t| t.records.iter().cloned()).collect();
    output::write_records(&out.join(RECORDS_FILE_NAME), &records)?;
    output::write_risk_trace(&out.join(RISK_TRACE_FILE_NAME), &risk_trace(&records)?)?;
    output::write_selections(&out.join(SELECTIONS_FILE_NAME), &tracks)?;
    if input.truth.is_some() {
        output::write_summary(&out.join(SUMMARY_FILE_NAME), &summarize_all(&records)?)?;
        output::write_cdf(&out.join(CDF_FILE_NAME), &records)?;
    }
    output::write_manifest(&out.join(MANIFEST_FILE_NAME), config, &input)?;
    for track in &tracks {
        let fallbacks = track.records.iter().filter(|r| !r.feasible).count();
        log::info!(
            "{}: {} epochs, {} infeasible",
            track.estimator,
            track.records.len(),
            fallbacks
        );
    }
    Ok(tracks)
}

/// Summary, CDF and risk-trace files recomputed from a records file.
pub fn report(records_path: &Path, out: &Path) -> CliResult<()> {
    let records = output::read_records(records_path)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: no records", records_path.display())));
    }
    fs::create_dir_all(out).map_err(|e| CliError::data(out.display(), e))?;
    output::write_summary(&out.join(SUMMARY_FILE_NAME), &summarize_all(&records)?)?;
    output::write_cdf(&out.join(CDF_FILE_NAME), &records)?;
    output::write_risk_trace(&out.join(RISK_TRACE_FILE_NAME), &risk_trace(&records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = RunConfig::default();
        let back = RunConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let config =
            RunConfig::from_toml("estimators = [\"EKF\"]\n[scenario]\nduration = 60.0\noutlier_windows = []\n")
                .unwrap();
        assert_eq!(config.estimators, vec![EstimatorKind::Ekf]);
        assert_eq!(config.scenario.duration, 60.0);
        assert_eq!(config.scenario.epoch_interval, 1.0);
        assert_eq!(config.selector.lambda, 1.5);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "estimators = []",
            "unknown_key = 1",
            "estimators = [\"EKF\", \"EKF\"]",
            "[selector]\nlambda = -1.0",
            "[scenario]\nduration = -5.0",
            "truth_file = \"t.jsonl\"",
            "[initial]\nposition_sigma = 0.0",
        ] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn error_mapping() {
        assert_eq!(CliError::from(Error::SingularCovariance).exit_code(), 3);
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).exit_code(), 2);
    }
}
