//! Pseudorange and Doppler measurement models, their Jacobians, and the
//! pseudorange variance model.
//!
//! Receiver clock offsets are carried in meters, so the pseudorange
//! prediction adds `dt` directly without a speed-of-light factor. Doppler
//! measurements are assumed compensated for satellite motion and clock drift,
//! leaving `los . v_r + dtdot`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Observations;
use crate::geodesy::iono_mapping_factor;
use crate::types::{
    index, ConstellationId, ConstellationSet, EpochMeasurements, Measurement, MeasurementKind, StateVector,
};

/// Noise model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModelParams {
    /// PPP correction residual excluding the ionosphere, meters.
    pub sigma_b: f64,
    /// Vertical TEC product uncertainty, TECU.
    pub sigma_a: f64,
    /// Pseudorange noise floor, meters.
    pub sigma_rho: f64,
    /// Doppler noise, m/s.
    pub sigma_doppler: f64,
    /// Ionospheric delay per TECU at the signal frequency, meters.
    pub tecu_to_meters: f64,
}

impl Default for NoiseModelParams {
    fn default() -> Self {
        Self {
            sigma_b: 0.1,
            sigma_a: 6.15,
            sigma_rho: 0.9,
            sigma_doppler: 1.414,
            tecu_to_meters: 0.1624,
        }
    }
}

impl NoiseModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_b,
            self.sigma_a,
            self.sigma_rho,
            self.sigma_doppler,
            self.tecu_to_meters,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "noise model parameters must be positive".into(),
            ))
        }
    }

    /// Variance of the residual common-mode error: correction residual plus
    /// the mapped vertical TEC uncertainty.
    pub fn cme_variance(&self, elevation: f64) -> f64 {
        let iono = iono_mapping_factor(elevation) * self.sigma_a * self.tecu_to_meters;
        self.sigma_b * self.sigma_b + iono * iono
    }
}

/// Pseudorange variance, m^2: `sigma_b^2 + (M(el) sigma_a kappa)^2 + sigma_rho^2`.
pub fn pseudorange_variance(params: &NoiseModelParams, elevation: f64) -> f64 {
    params.cme_variance(elevation) + params.sigma_rho * params.sigma_rho
}

/// Unit line-of-sight vector from the satellite to the receiver.
pub fn los_vector(receiver: &Vector3<f64>, satellite: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = receiver - satellite;
    let range = d.norm();
    if range == 0.0 || !range.is_finite() {
        return Err(Error::ZeroRange);
    }
    Ok(d / range)
}

fn clock_slot(constellations: ConstellationSet, c: ConstellationId) -> Result<usize> {
    constellations
        .clock_slot(c)
        .map(index::clock)
        .ok_or_else(|| Error::InvalidParameter(format!("{c} has no clock state")))
}

fn position_of(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[0], x[1], x[2])
}

fn velocity_of(x: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(x[3], x[4], x[5])
}

pub fn predict_pseudorange(x: &StateVector, sat_pos: &Vector3<f64>, constellation: ConstellationId) -> Result<f64> {
    let slot = clock_slot(x.constellations(), constellation)?;
    let p = x.position();
    los_vector(&p, sat_pos)?;
    Ok((p - sat_pos).norm() + x.as_vector()[slot])
}

pub fn predict_doppler(x: &StateVector, sat_pos: &Vector3<f64>) -> Result<f64> {
    let los = los_vector(&x.position(), sat_pos)?;
    Ok(los.dot(&x.velocity()) + x.drift())
}

/// Predicted value of `m` at the raw state vector `x`.
fn predict_raw(x: &DVector<f64>, constellations: ConstellationSet, m: &Measurement) -> Result<f64> {
    let p = position_of(x);
    let s = m.sat_position();
    match m.kind {
        MeasurementKind::Pseudorange => {
            let slot = clock_slot(constellations, m.constellation)?;
            los_vector(&p, &s)?;
            Ok((p - s).norm() + x[slot])
        }
        MeasurementKind::Doppler => {
            let los = los_vector(&p, &s)?;
            Ok(los.dot(&velocity_of(x)) + x[index::drift(constellations.len())])
        }
    }
}

fn jacobian_raw(x: &DVector<f64>, constellations: ConstellationSet, m: &Measurement) -> Result<DVector<f64>> {
    let los = los_vector(&position_of(x), &m.sat_position())?;
    let mut row = DVector::zeros(x.len());
    match m.kind {
        MeasurementKind::Pseudorange => {
            row.rows_mut(index::POSITION.start, 3).copy_from(&los);
            row[clock_slot(constellations, m.constellation)?] = 1.0;
        }
        MeasurementKind::Doppler => {
            // d(los)/dp is O(|v| / range) and is dropped.
            row.rows_mut(index::VELOCITY.start, 3).copy_from(&los);
            row[index::drift(constellations.len())] = 1.0;
        }
    }
    Ok(row)
}

pub fn predict(x: &StateVector, m: &Measurement) -> Result<f64> {
    predict_raw(x.as_vector(), x.constellations(), m)
}

/// Row of `dh/dx` for one measurement.
pub fn jacobian_row(x: &StateVector, m: &Measurement) -> Result<DVector<f64>> {
    jacobian_raw(x.as_vector(), x.constellations(), m)
}

/// Diagonal measurement covariance in epoch order.
pub fn build_measurement_covariance(epoch: &EpochMeasurements) -> Result<DMatrix<f64>> {
    let variances = epoch
        .measurements
        .iter()
        .enumerate()
        .map(|(index, m)| {
            if m.sigma > 0.0 && m.sigma.is_finite() {
                Ok(m.sigma * m.sigma)
            } else {
                Err(Error::NonPositiveSigma { index, sigma: m.sigma })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_diagonal(&DVector::from_vec(variances)))
}

/// An epoch bound to the state layout it will be estimated against.
#[derive(Debug, Clone, Copy)]
pub struct GnssObservations<'a> {
    pub epoch: &'a EpochMeasurements,
    pub constellations: ConstellationSet,
}

impl<'a> GnssObservations<'a> {
    pub fn new(epoch: &'a EpochMeasurements, constellations: ConstellationSet) -> Self {
        Self { epoch, constellations }
    }
}

impl Observations for GnssObservations<'_> {
    fn len(&self) -> usize {
        self.epoch.measurements.len()
    }

    fn value(&self, i: usize) -> f64 {
        self.epoch.measurements[i].value
    }

    fn sigma(&self, i: usize) -> f64 {
        self.epoch.measurements[i].sigma
    }

    fn predict(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        predict_raw(x, self.constellations, &self.epoch.measurements[i])
    }

    fn jacobian_row(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        jacobian_raw(x, self.constellations, &self.epoch.measurements[i])
    }
}
