//! Discrete-time position/velocity/acceleration + clock dynamics.
//!
//! Each axis is a triple integrator driven by white jerk noise. Every
//! constellation clock offset integrates the single shared drift and adds its
//! own white noise; the drift is a random walk.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{index, StateEstimate};

/// Continuous-time noise power spectral densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoiseParams {
    /// Jerk PSD per axis, m^2/s^5.
    pub jerk_psd: f64,
    /// Clock offset PSD, m^2/s.
    pub clock_offset_psd: f64,
    /// Clock drift PSD, m^2/s^3.
    pub clock_drift_psd: f64,
}

impl Default for ProcessNoiseParams {
    fn default() -> Self {
        Self {
            jerk_psd: 0.1,
            clock_offset_psd: 1.0,
            clock_drift_psd: 0.01,
        }
    }
}

impl ProcessNoiseParams {
    pub fn validate(&self) -> Result<()> {
        let v = [self.jerk_psd, self.clock_offset_psd, self.clock_drift_psd];
        if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || v.iter().all(|p| *p == 0.0) {
            return Err(Error::InvalidParameter(
                "process noise PSDs must be non-negative and not all zero".into(),
            ));
        }
        Ok(())
    }
}

fn check_interval(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInterval(dt))
    }
}

pub fn transition_matrix(dt: f64, n_constellations: usize) -> Result<DMatrix<f64>> {
    check_interval(dt)?;
    let n = index::dim(n_constellations);
    let mut phi = DMatrix::identity(n, n);
    for axis in 0..3 {
        let (p, v, a) = (axis, 3 + axis, 6 + axis);
        phi[(p, v)] = dt;
        phi[(p, a)] = 0.5 * dt * dt;
        phi[(v, a)] = dt;
    }
    let drift = index::drift(n_constellations);
    for k in 0..n_constellations {
        phi[(index::clock(k), drift)] = dt;
    }
    Ok(phi)
}

pub fn process_noise(dt: f64, params: &ProcessNoiseParams, n_constellations: usize) -> Result<DMatrix<f64>> {
    check_interval(dt)?;
    let n = index::dim(n_constellations);
    let mut q = DMatrix::zeros(n, n);
    let s = params.jerk_psd;
    let (t2, t3, t4, t5) = (dt.powi(2), dt.powi(3), dt.powi(4), dt.powi(5));
    for axis in 0..3 {
        let (p, v, a) = (axis, 3 + axis, 6 + axis);
        let entries = [
            (p, p, s * t5 / 20.0),
            (p, v, s * t4 / 8.0),
            (p, a, s * t3 / 6.0),
            (v, v, s * t3 / 3.0),
            (v, a, s * t2 / 2.0),
            (a, a, s * dt),
        ];
        for (i, j, value) in entries {
            q[(i, j)] = value;
            q[(j, i)] = value;
        }
    }
    let sf = params.clock_offset_psd;
    let sg = params.clock_drift_psd;
    let drift = index::drift(n_constellations);
    for i in 0..n_constellations {
        for j in 0..n_constellations {
            let white = if i == j { sf * dt } else { 0.0 };
            q[(index::clock(i), index::clock(j))] = white + sg * t3 / 3.0;
        }
        q[(index::clock(i), drift)] = sg * t2 / 2.0;
        q[(drift, index::clock(i))] = sg * t2 / 2.0;
    }
    q[(drift, drift)] = sg * dt;
    Ok(q)
}

/// `x' = Phi x`, `P' = Phi P Phi^T + Q`, symmetrized, with the information refreshed.
pub fn propagate(estimate: &StateEstimate, phi: &DMatrix<f64>, q: &DMatrix<f64>, dt: f64) -> Result<StateEstimate> {
    let n = estimate.dim();
    if phi.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "transition {:?} / noise {:?} for state of dimension {n}",
            phi.shape(),
            q.shape()
        )));
    }
    let x: DVector<f64> = phi * estimate.x();
    let p = phi * estimate.covariance() * phi.transpose() + q;
    StateEstimate::from_covariance(estimate.t() + dt, x, p)
}

pub fn time_update(
    estimate: &StateEstimate,
    dt: f64,
    params: &ProcessNoiseParams,
    n_constellations: usize,
) -> Result<StateEstimate> {
    let phi = transition_matrix(dt, n_constellations)?;
    let q = process_noise(dt, params, n_constellations)?;
    propagate(estimate, &phi, &q, dt)
}
