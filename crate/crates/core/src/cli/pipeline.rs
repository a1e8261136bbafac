//! Side-by-side estimator runs over one measurement stream.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CliError, CliResult, EpochFile};
use crate::error::{Error, Result};
use crate::geodesy::GeodeticPosition;
use crate::metrics::{he_ve, ned_error};
use crate::propagation::{time_update, ProcessNoiseParams};
use crate::selection::{SelectionOutcome, Selector, SelectorConfig};
use crate::simulator::{sky_label, Scenario, TimeWindow, TruthRecord};
use crate::types::{
    index, ConstellationSet, EpochMeasurements, EpochRecord, EstimatorKind, SelectionVector, StateEstimate,
};

/// Measurement stream shared by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInput {
    pub constellations: ConstellationSet,
    pub origin: GeodeticPosition,
    pub windows: Vec<TimeWindow>,
    pub epochs: Vec<EpochMeasurements>,
    pub truth: Option<Vec<TruthRecord>>,
}

impl RunInput {
    pub fn from_scenario(scenario: Scenario) -> Self {
        Self {
            constellations: scenario.constellations,
            origin: scenario.origin,
            windows: scenario.windows,
            epochs: scenario.epochs,
            truth: Some(scenario.truth),
        }
    }

    pub fn from_epoch_file(file: EpochFile, truth: Option<Vec<TruthRecord>>) -> CliResult<Self> {
        if let Some(truth) = &truth {
            let aligned = truth.len() == file.epochs.len() && truth.iter().zip(&file.epochs).all(|(r, e)| r.t == e.t);
            if !aligned {
                return Err(CliError::Data("truth file epochs do not match the epoch file".into()));
            }
        }
        Ok(Self {
            constellations: file.header.constellations,
            origin: file.header.origin,
            windows: file.header.windows,
            epochs: file.epochs,
            truth,
        })
    }
}

/// Initial estimate. Without an explicit mean the truth at the first epoch is
/// used, or the origin with zero clocks when no truth is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCondition {
    pub mean: Option<Vec<f64>>,
    pub position_sigma: f64,
    pub velocity_sigma: f64,
    pub acceleration_sigma: f64,
    pub clock_sigma: f64,
    pub drift_sigma: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            mean: None,
            position_sigma: 10.0,
            velocity_sigma: 2.0,
            acceleration_sigma: 1.0,
            clock_sigma: 100.0,
            drift_sigma: 10.0,
        }
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.position_sigma,
            self.velocity_sigma,
            self.acceleration_sigma,
            self.clock_sigma,
            self.drift_sigma,
        ];
        if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter("initial sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn covariance(&self, n_s: usize) -> DMatrix<f64> {
        let n = index::dim(n_s);
        let sigma = |i: usize| match i {
            0..3 => self.position_sigma,
            3..6 => self.velocity_sigma,
            6..9 => self.acceleration_sigma,
            i if i == index::drift(n_s) => self.drift_sigma,
            _ => self.clock_sigma,
        };
        DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| sigma(i).powi(2)))
    }

    pub fn estimate(&self, input: &RunInput) -> Result<StateEstimate> {
        let n_s = input.constellations.len();
        let t0 = input.epochs.first().map(|e| e.t).unwrap_or_default();
        let mean = match (&self.mean, &input.truth) {
            (Some(m), _) => DVector::from_column_slice(m),
            (None, Some(truth)) => truth[0].state.as_vector().clone(),
            (None, None) => {
                let mut x = DVector::zeros(index::dim(n_s));
                x.rows_mut(0, 3).copy_from(&input.origin.to_ecef());
                x
            }
        };
        StateEstimate::from_covariance(t0, mean, self.covariance(n_s))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOptions {
    /// Shared selector settings; the strategy is set per estimator.
    pub selector: SelectorConfig,
    pub process_noise: ProcessNoiseParams,
    pub initial: InitialCondition,
    /// Keep every prior and selection outcome for auditing.
    pub keep_trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub prior: StateEstimate,
    pub outcome: SelectionOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTrack {
    pub estimator: EstimatorKind,
    pub records: Vec<EpochRecord>,
    pub selections: Vec<SelectionVector>,
    pub trace: Vec<TraceEntry>,
    pub final_estimate: StateEstimate,
}

/// Runs one estimator over the whole stream; each epoch's prior is the time
/// update of that estimator's own previous posterior.
pub fn run_estimator(input: &RunInput, estimator: EstimatorKind, options: &PipelineOptions) -> Result<EstimatorTrack> {
    if input.epochs.is_empty() {
        return Err(Error::InvalidParameter("no epochs to process".into()));
    }
    let n_s = input.constellations.len();
    let selector = Selector::new(SelectorConfig {
        strategy: estimator,
        ..options.selector
    });
    let mut posterior = options.initial.estimate(input)?;
    let mut records = Vec::with_capacity(input.epochs.len());
    let mut selections = Vec::with_capacity(input.epochs.len());
    let mut trace = Vec::new();
    for (k, epoch) in input.epochs.iter().enumerate() {
        let prior = if k == 0 {
            posterior.clone()
        } else {
            time_update(&posterior, epoch.t - posterior.t(), &options.process_noise, n_s)?
        };
        let outcome = selector.select(&prior, epoch, input.constellations)?;
        if !outcome.b.feasible {
            log::debug!("{estimator}: t = {} infeasible, all measurements used", epoch.t);
        }
        posterior = outcome.result.posterior(epoch.t)?;

        let err = match &input.truth {
            Some(truth) => ned_error(&posterior.state(input.constellations)?, &truth[k].state, &input.origin),
            None => nalgebra::Vector3::from_element(f64::NAN),
        };
        let (he, ve) = he_ve(&err);
        records.push(EpochRecord {
            t: epoch.t,
            estimator,
            risk: outcome.result.risk,
            n_used: outcome.b.count(),
            n_available: outcome.b.len(),
            err_n: err.x,
            err_e: err.y,
            err_d: err.z,
            he,
            ve,
            feasible: outcome.b.feasible,
            sky: sky_label(&input.windows, epoch.t),
        });
        selections.push(outcome.b.clone());
        if options.keep_trace {
            trace.push(TraceEntry { prior, outcome });
        }
    }
    Ok(EstimatorTrack {
        estimator,
        records,
        selections,
        trace,
        final_estimate: posterior,
    })
}

/// Runs the estimators concurrently; tracks come back in the requested order.
pub fn run_estimators(
    input: &RunInput,
    estimators: &[EstimatorKind],
    options: &PipelineOptions,
) -> Result<Vec<EstimatorTrack>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = estimators
            .iter()
            .map(|&kind| scope.spawn(move || run_estimator(input, kind, options)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("estimator thread panicked"))
            .collect()
    })
}
