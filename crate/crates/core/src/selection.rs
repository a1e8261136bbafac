//! Measurement selection strategies.
//!
//! All strategies share the MAP update of [`crate::estimation`] and differ
//! only in how the selection vector `b` is chosen:
//!
//! * [`select_ekf`] uses everything.
//! * [`select_td`] drops measurements whose prior residual fails the
//!   `lambda`-sigma test.
//! * [`select_raps_exhaustive`] and [`select_raps_greedy`] minimize the risk
//!   subject to the diagonal information constraint
//!   `diag(J⁻) + Σᵢ (bᵢ/σᵢ²) diag(hᵢᵀhᵢ) >= J_d` on the constrained entries.
//!
//! When even `b = 1` violates the constraint the RAPS solvers fall back to
//! using every measurement and flag the epoch infeasible.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{jacobian, map_update, residuals, variances, MapSolveResult, Observations};
use crate::geodesy::{ecef_to_geodetic, ned_rotation};
use crate::models::GnssObservations;
use crate::types::{
    index, ConstellationSet, EpochMeasurements, EstimatorKind, PerformanceSpec, SelectionVector, StateEstimate,
};

/// Hard cap on the exhaustive search size.
pub const MAX_EXHAUSTIVE_LIMIT: usize = 24;

/// Frame in which the position/velocity information bounds are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintFrame {
    /// Local North-East-Down at the prior position.
    #[default]
    Ned,
    /// State frame as-is.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub strategy: EstimatorKind,
    /// Threshold-decision multiplier.
    pub lambda: f64,
    pub spec: PerformanceSpec,
    pub exhaustive_limit: usize,
    pub max_outer_iterations: usize,
    pub frame: ConstraintFrame,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            strategy: EstimatorKind::RapsGreedy,
            lambda: 1.5,
            spec: PerformanceSpec::default(),
            exhaustive_limit: 16,
            max_outer_iterations: 10,
            frame: ConstraintFrame::Ned,
        }
    }
}

impl SelectorConfig {
    pub fn with_strategy(strategy: EstimatorKind) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        if self.exhaustive_limit > MAX_EXHAUSTIVE_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "exhaustive_limit must not exceed {MAX_EXHAUSTIVE_LIMIT}"
            )));
        }
        self.spec.validate()
    }
}

/// `Σᵢ (bᵢ/σᵢ²) hᵢ[k]² + J⁻[k, k]` for each constrained state index `k`.
pub fn constraint_lhs(
    b: &SelectionVector,
    h: &DMatrix<f64>,
    variances: &DVector<f64>,
    j_minus: &DMatrix<f64>,
    indices: &[usize],
) -> Vec<f64> {
    indices
        .iter()
        .map(|&k| {
            (0..h.nrows())
                .filter(|&i| b.get(i))
                .fold(j_minus[(k, k)], |acc, i| acc + h[(i, k)].powi(2) / variances[i])
        })
        .collect()
}

/// Diagonal information constraint with the per-measurement contributions
/// precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalConstraint {
    base: Vec<f64>,
    contributions: Vec<Vec<f64>>,
    bounds: Vec<f64>,
}

impl DiagonalConstraint {
    pub fn new(
        h: &DMatrix<f64>,
        variances: &DVector<f64>,
        j_minus: &DMatrix<f64>,
        indices: &[usize],
        bounds: &[f64],
    ) -> Result<Self> {
        if indices.len() != bounds.len() {
            return Err(Error::Dimension(format!(
                "{} constrained indices but {} bounds",
                indices.len(),
                bounds.len()
            )));
        }
        if let Some(&k) = indices.iter().find(|&&k| k >= j_minus.nrows()) {
            return Err(Error::Dimension(format!("constrained index {k} out of range")));
        }
        let base = indices.iter().map(|&k| j_minus[(k, k)]).collect();
        let contributions = (0..h.nrows())
            .map(|i| indices.iter().map(|&k| h[(i, k)].powi(2) / variances[i]).collect())
            .collect();
        Ok(Self {
            base,
            contributions,
            bounds: bounds.to_vec(),
        })
    }

    /// Constraint with no bounds; always satisfied.
    pub fn unconstrained(n_measurements: usize) -> Self {
        Self {
            base: vec![],
            contributions: vec![vec![]; n_measurements],
            bounds: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    fn lhs_by<F: Fn(usize) -> bool>(&self, selected: F) -> Vec<f64> {
        let mut lhs = self.base.clone();
        for (i, row) in self.contributions.iter().enumerate() {
            if selected(i) {
                for (acc, c) in lhs.iter_mut().zip(row) {
                    *acc += c;
                }
            }
        }
        lhs
    }

    pub fn lhs(&self, b: &SelectionVector) -> Vec<f64> {
        self.lhs_by(|i| b.get(i))
    }

    fn check(&self, lhs: &[f64]) -> bool {
        lhs.iter().zip(&self.bounds).all(|(l, d)| l >= d)
    }

    pub fn is_satisfied(&self, b: &SelectionVector) -> bool {
        self.check(&self.lhs(b))
    }

    fn is_satisfied_mask(&self, mask: u64) -> bool {
        self.check(&self.lhs_by(|i| mask >> i & 1 == 1))
    }
}

/// Jacobian at the prior and prior information, with the position and
/// velocity blocks rotated into the constraint frame.
pub fn frame_align<O: Observations + ?Sized>(
    prior: &StateEstimate,
    obs: &O,
    frame: ConstraintFrame,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = jacobian(obs, prior.x())?;
    let j = prior.information().clone();
    match frame {
        ConstraintFrame::Identity => Ok((h, j)),
        ConstraintFrame::Ned => {
            let n = prior.dim();
            if n < index::VELOCITY.end {
                return Err(Error::Dimension(format!(
                    "state of dimension {n} has no velocity block"
                )));
            }
            let x = prior.x();
            let g = ecef_to_geodetic(&Vector3::new(x[0], x[1], x[2]))?;
            let r_t = ned_rotation(&g).transpose();
            // x_ecef = T x_ned
            let mut t = DMatrix::identity(n, n);
            t.view_mut((index::POSITION.start, index::POSITION.start), (3, 3))
                .copy_from(&r_t);
            t.view_mut((index::VELOCITY.start, index::VELOCITY.start), (3, 3))
                .copy_from(&r_t);
            let h_ned = h * &t;
            let j_ned = t.transpose() * j * &t;
            Ok((h_ned, j_ned))
        }
    }
}

/// A prior, its observations, and the constraint the RAPS solvers honor.
pub struct SelectionProblem<'a, O: Observations + ?Sized> {
    pub prior: &'a StateEstimate,
    pub obs: &'a O,
    pub constraint: DiagonalConstraint,
}

impl<'a, O: Observations + ?Sized + Sync> SelectionProblem<'a, O> {
    pub fn new(prior: &'a StateEstimate, obs: &'a O, constraint: DiagonalConstraint) -> Result<Self> {
        if constraint.len() != obs.len() {
            return Err(Error::Dimension(format!(
                "constraint covers {} measurements, epoch has {}",
                constraint.len(),
                obs.len()
            )));
        }
        Ok(Self { prior, obs, constraint })
    }

    /// Problem with the bounds checked on `indices` in the given frame.
    pub fn aligned(
        prior: &'a StateEstimate,
        obs: &'a O,
        frame: ConstraintFrame,
        indices: &[usize],
        bounds: &[f64],
    ) -> Result<Self> {
        let (h, j) = frame_align(prior, obs, frame)?;
        let constraint = DiagonalConstraint::new(&h, &variances(obs), &j, indices, bounds)?;
        Self::new(prior, obs, constraint)
    }

    fn outcome(&self, b: SelectionVector, result: MapSolveResult, fallback_used: bool) -> SelectionOutcome {
        let constraint_satisfied = self.constraint.is_satisfied(&b);
        let feasible = self.constraint.is_satisfied(&SelectionVector::all(b.len()));
        SelectionOutcome {
            b: SelectionVector { feasible, ..b },
            result,
            constraint_satisfied,
            fallback_used,
        }
    }

    fn fallback(&self) -> Result<SelectionOutcome> {
        let b = SelectionVector::all(self.obs.len());
        let result = map_update(self.prior, self.obs, &b)?;
        Ok(self.outcome(b, result, true))
    }
}

/// Builds the NED-constrained problem for a GNSS epoch.
pub fn gnss_problem<'a>(
    prior: &'a StateEstimate,
    obs: &'a GnssObservations<'a>,
    spec: &PerformanceSpec,
    frame: ConstraintFrame,
) -> Result<SelectionProblem<'a, GnssObservations<'a>>> {
    let indices: Vec<usize> = index::POSITION.chain(index::VELOCITY).collect();
    SelectionProblem::aligned(prior, obs, frame, &indices, &spec.bounds())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub b: SelectionVector,
    pub result: MapSolveResult,
    pub constraint_satisfied: bool,
    pub fallback_used: bool,
}

pub fn select_ekf<O: Observations + ?Sized + Sync>(problem: &SelectionProblem<'_, O>) -> Result<SelectionOutcome> {
    let b = SelectionVector::all(problem.obs.len());
    let result = map_update(problem.prior, problem.obs, &b)?;
    Ok(problem.outcome(b, result, false))
}

/// Threshold decisions on the prior residuals, evaluated once.
pub fn select_td<O: Observations + ?Sized + Sync>(
    problem: &SelectionProblem<'_, O>,
    lambda: f64,
) -> Result<SelectionOutcome> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let res = residuals(problem.prior, problem.obs)?;
    let flags = res
        .r
        .iter()
        .zip(res.sigma.iter())
        .map(|(r, s)| r.abs() < lambda * s)
        .collect();
    let b = SelectionVector::from_flags(flags);
    let result = map_update(problem.prior, problem.obs, &b)?;
    Ok(problem.outcome(b, result, false))
}

/// `true` when `a` precedes `b` lexicographically with entry 0 first.
fn mask_lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    diff != 0 && a & (diff & diff.wrapping_neg()) == 0
}

/// Exact RAPS by enumeration of every selection vector.
///
/// Ties in risk prefer more measurements, then the lexicographically
/// smallest `b`.
pub fn select_raps_exhaustive<O: Observations + ?Sized + Sync>(
    problem: &SelectionProblem<'_, O>,
    limit: usize,
) -> Result<SelectionOutcome> {
    let n = problem.obs.len();
    let limit = limit.min(MAX_EXHAUSTIVE_LIMIT);
    if n > limit {
        return Err(Error::InstanceTooLarge { count: n, limit });
    }
    if !problem.constraint.is_satisfied(&SelectionVector::all(n)) {
        return problem.fallback();
    }
    let candidates: Vec<u64> = (0..1u64 << n)
        .filter(|&m| problem.constraint.is_satisfied_mask(m))
        .collect();
    let risks = candidates
        .par_iter()
        .map(|&m| map_update(problem.prior, problem.obs, &SelectionVector::from_mask(m, n)).map(|r| (m, r.risk)))
        .collect::<Result<Vec<_>>>()?;
    let better = |a: &(u64, f64), b: &(u64, f64)| match a.1.partial_cmp(&b.1) {
        Some(Ordering::Less) => true,
        Some(Ordering::Greater) | None => false,
        Some(Ordering::Equal) => match a.0.count_ones().cmp(&b.0.count_ones()) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => mask_lex_less(a.0, b.0),
        },
    };
    let mut best = risks[0];
    for cand in &risks[1..] {
        if better(cand, &best) {
            best = *cand;
        }
    }
    let b = SelectionVector::from_mask(best.0, n);
    let result = map_update(problem.prior, problem.obs, &b)?;
    Ok(problem.outcome(b, result, false))
}

/// Greedy block-coordinate RAPS.
///
/// Alternates a MAP solve at the current `b` with a removal pass: starting
/// from all measurements, drop them in decreasing order of normalized squared
/// residual at the current estimate whenever the constraint still holds. Stops
/// when `b` repeats or after `max_outer_iterations`, returning the lowest-risk
/// selection visited (which includes `b = 1`).
pub fn select_raps_greedy<O: Observations + ?Sized + Sync>(
    problem: &SelectionProblem<'_, O>,
    max_outer_iterations: usize,
) -> Result<SelectionOutcome> {
    let n = problem.obs.len();
    let all = SelectionVector::all(n);
    if !problem.constraint.is_satisfied(&all) {
        return problem.fallback();
    }
    let mut b = all;
    let mut result = map_update(problem.prior, problem.obs, &b)?;
    let mut best = (b.clone(), result.clone());

    for _ in 0..max_outer_iterations {
        let mut costs = Vec::with_capacity(n);
        for i in 0..n {
            let e = problem.obs.predict(i, &result.x_plus)? - problem.obs.value(i);
            costs.push((i, e * e / problem.obs.variance(i)));
        }
        costs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut next = SelectionVector::all(n);
        for &(i, _) in &costs {
            next.flags[i] = false;
            if !problem.constraint.is_satisfied(&next) {
                next.flags[i] = true;
            }
        }
        if next.flags == b.flags {
            break;
        }
        b = next;
        result = map_update(problem.prior, problem.obs, &b)?;
        if result.risk < best.1.risk {
            best = (b.clone(), result.clone());
        }
    }
    let (b, result) = best;
    Ok(problem.outcome(b, result, false))
}

/// Strategy dispatch for GNSS epochs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Selector {
    pub config: SelectorConfig,
}

impl Selector {
    pub fn new(config: SelectorConfig) -> Self {
        Self { config }
    }

    pub fn select(
        &self,
        prior: &StateEstimate,
        epoch: &EpochMeasurements,
        constellations: ConstellationSet,
    ) -> Result<SelectionOutcome> {
        let obs = GnssObservations::new(epoch, constellations);
        let problem = gnss_problem(prior, &obs, &self.config.spec, self.config.frame)?;
        self.select_problem(&problem)
    }

    pub fn select_problem<O: Observations + ?Sized + Sync>(
        &self,
        problem: &SelectionProblem<'_, O>,
    ) -> Result<SelectionOutcome> {
        match self.config.strategy {
            EstimatorKind::Ekf => select_ekf(problem),
            EstimatorKind::Td => select_td(problem, self.config.lambda),
            EstimatorKind::RapsExhaustive => select_raps_exhaustive(problem, self.config.exhaustive_limit),
            EstimatorKind::RapsGreedy => select_raps_greedy(problem, self.config.max_outer_iterations),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::LinearObservations;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_problem<'a>(
        prior: &'a StateEstimate,
        obs: &'a LinearObservations,
        bound: f64,
    ) -> SelectionProblem<'a, LinearObservations> {
        SelectionProblem::aligned(prior, obs, ConstraintFrame::Identity, &[0], &[bound]).unwrap()
    }

    fn unit_prior() -> StateEstimate {
        StateEstimate::from_covariance(0.0, dvector![0.0], dmatrix![1.0]).unwrap()
    }

    fn two_point() -> LinearObservations {
        LinearObservations::new(dmatrix![1.0; 1.0], dvector![0.1, 3.0], dvector![1.0, 1.0]).unwrap()
    }

    #[test]
    fn lhs_examples() {
        let h = dmatrix![1.0];
        let v = dvector![1.0];
        let j = dmatrix![1.0];
        assert_eq!(constraint_lhs(&SelectionVector::all(1), &h, &v, &j, &[0]), vec![2.0]);
        assert_eq!(constraint_lhs(&SelectionVector::none(1), &h, &v, &j, &[0]), vec![1.0]);
        let c = DiagonalConstraint::new(&h, &v, &j, &[0], &[2.0]).unwrap();
        assert_eq!(c.lhs(&SelectionVector::all(1)), vec![2.0]);
        assert!(c.is_satisfied(&SelectionVector::all(1)));
        assert!(!c.is_satisfied(&SelectionVector::none(1)));
    }

    #[test]
    fn exhaustive_on_scalar_instance() {
        let prior = unit_prior();
        let obs = two_point();
        let problem = scalar_problem(&prior, &obs, 2.0);
        let out = select_raps_exhaustive(&problem, 16).unwrap();
        assert_eq!(out.b.flags, vec![true, false]);
        assert_abs_diff_eq!(out.result.risk, 0.005, epsilon = 1e-12);
        assert!(out.constraint_satisfied && out.b.feasible && !out.fallback_used);
    }

    #[test]
    fn greedy_on_scalar_instance() {
        let prior = unit_prior();
        let obs = two_point();
        let problem = scalar_problem(&prior, &obs, 2.0);
        let out = select_raps_greedy(&problem, 10).unwrap();
        assert_eq!(out.b.flags, vec![true, false]);
        assert_abs_diff_eq!(out.result.risk, 0.005, epsilon = 1e-12);
    }

    #[test]
    fn prior_alone_satisfies_bound() {
        let prior = unit_prior();
        let obs = two_point();
        let problem = scalar_problem(&prior, &obs, 0.5);
        let out = select_raps_exhaustive(&problem, 16).unwrap();
        assert_eq!(out.b.count(), 0);
        assert_eq!(out.result.risk, 0.0);
        let out = select_raps_greedy(&problem, 10).unwrap();
        assert_eq!(out.b.count(), 0);
    }

    #[test]
    fn unreachable_bound_falls_back() {
        let prior = unit_prior();
        let obs = two_point();
        let problem = scalar_problem(&prior, &obs, 10.0);
        for out in [
            select_raps_exhaustive(&problem, 16).unwrap(),
            select_raps_greedy(&problem, 10).unwrap(),
        ] {
            assert!(out.fallback_used);
            assert!(out.b.is_all());
            assert!(!out.b.feasible);
            assert!(!out.constraint_satisfied);
        }
    }

    #[test]
    fn single_measurement_meeting_bound_exactly() {
        let prior = unit_prior();
        let obs = LinearObservations::new(dmatrix![1.0], dvector![0.4], dvector![1.0]).unwrap();
        let problem = scalar_problem(&prior, &obs, 2.0);
        let out = select_raps_greedy(&problem, 10).unwrap();
        assert!(out.b.is_all());
        assert!(!out.fallback_used);
    }

    #[test]
    fn exhaustive_size_limit() {
        let prior = unit_prior();
        let obs = LinearObservations::new(
            DMatrix::from_element(5, 1, 1.0),
            DVector::zeros(5),
            DVector::from_element(5, 1.0),
        )
        .unwrap();
        let problem = scalar_problem(&prior, &obs, 2.0);
        assert_eq!(
            select_raps_exhaustive(&problem, 4).unwrap_err(),
            Error::InstanceTooLarge { count: 5, limit: 4 }
        );
    }

    #[test]
    fn td_examples() {
        // sigma_r = sqrt(P + sigma^2) = 1 with a near-zero prior covariance.
        let prior = StateEstimate::from_covariance(0.0, dvector![0.0], dmatrix![1e-16]).unwrap();
        let obs = LinearObservations::new(dmatrix![1.0; 1.0], dvector![2.0, 1.0], dvector![1.0, 1.0]).unwrap();
        let problem = scalar_problem(&prior, &obs, 1.0);
        let out = select_td(&problem, 1.5).unwrap();
        assert_eq!(out.b.flags, vec![false, true]);

        let zero = LinearObservations::new(dmatrix![1.0; 1.0], dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        let problem = scalar_problem(&prior, &zero, 1.0);
        let td = select_td(&problem, 1.5).unwrap();
        let ekf = select_ekf(&problem).unwrap();
        assert_eq!(td, ekf);
        assert!(select_td(&problem, 0.0).is_err());
    }

    #[test]
    fn empty_epoch() {
        let prior = unit_prior();
        let obs = LinearObservations::new(DMatrix::zeros(0, 1), DVector::zeros(0), DVector::zeros(0)).unwrap();
        let problem = scalar_problem(&prior, &obs, 0.5);
        let out = select_ekf(&problem).unwrap();
        assert!(out.b.is_empty());
        assert_eq!(out.result.x_plus, *prior.x());
    }

    #[test]
    fn lexicographic_masks() {
        // b = (0, 1) precedes b = (1, 0).
        assert!(mask_lex_less(0b10, 0b01));
        assert!(!mask_lex_less(0b01, 0b10));
        assert!(!mask_lex_less(0b11, 0b11));
    }

    #[test]
    fn exhaustive_tie_prefers_more_measurements() {
        // Two exact observations at the prior mean: every selection has zero risk.
        let prior = unit_prior();
        let obs = LinearObservations::new(dmatrix![1.0; 1.0], dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        let problem = scalar_problem(&prior, &obs, 0.5);
        let out = select_raps_exhaustive(&problem, 16).unwrap();
        assert!(out.b.is_all());
    }

    #[test]
    fn identity_alignment_keeps_rows() {
        let prior = StateEstimate::from_covariance(0.0, dvector![1.0, 2.0], DMatrix::identity(2, 2)).unwrap();
        let obs =
            LinearObservations::new(dmatrix![1.0, 2.0; 3.0, 4.0], dvector![0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        let (h, j) = frame_align(&prior, &obs, ConstraintFrame::Identity).unwrap();
        assert_eq!(&h, obs.h());
        assert_eq!(&j, prior.information());
        assert!(frame_align(&prior, &obs, ConstraintFrame::Ned).is_err());
    }
}
