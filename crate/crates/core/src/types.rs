//! Core data model shared by every module.
//!
//! The navigation state is ordered `[p, v, a, dt(1..n_s), dtdot]` with
//! dimension `10 + n_s`; the layout helpers in [`index`] are the only place
//! where those offsets are spelled out. Epoch measurements are stored
//! pseudoranges first, then Dopplers, and selection vectors index into that
//! order.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State vector offsets.
pub mod index {
    use std::ops::Range;

    pub const POSITION: Range<usize> = 0..3;
    pub const VELOCITY: Range<usize> = 3..6;
    pub const ACCELERATION: Range<usize> = 6..9;
    /// First receiver clock offset slot.
    pub const CLOCK_BASE: usize = 9;

    /// Clock offset slot for the `k`-th constellation of the state.
    pub const fn clock(k: usize) -> usize {
        CLOCK_BASE + k
    }

    /// Clock drift slot for a state with `n_s` constellations.
    pub const fn drift(n_s: usize) -> usize {
        CLOCK_BASE + n_s
    }

    /// Total state dimension for `n_s` constellations.
    pub const fn dim(n_s: usize) -> usize {
        10 + n_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstellationId {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "Galileo")]
    Galileo,
    #[serde(rename = "BeiDou")]
    BeiDou,
}

impl ConstellationId {
    pub const ALL: [ConstellationId; 3] = [Self::Gps, Self::Galileo, Self::BeiDou];

    fn bit(self) -> u8 {
        match self {
            Self::Gps => 1,
            Self::Galileo => 2,
            Self::BeiDou => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gps => "GPS",
            Self::Galileo => "Galileo",
            Self::BeiDou => "BeiDou",
        }
    }
}

impl fmt::Display for ConstellationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-empty set of constellations, each owning one clock offset state.
///
/// Clock slots follow the fixed GPS, Galileo, BeiDou order restricted to the
/// members of the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ConstellationId>", into = "Vec<ConstellationId>")]
pub struct ConstellationSet(u8);

impl ConstellationSet {
    pub fn new<I: IntoIterator<Item = ConstellationId>>(members: I) -> Result<Self> {
        let bits = members.into_iter().fold(0u8, |acc, c| acc | c.bit());
        if bits == 0 {
            return Err(Error::InvalidParameter("at least one constellation is required".into()));
        }
        Ok(Self(bits))
    }

    pub fn all() -> Self {
        Self(7)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn contains(&self, c: ConstellationId) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ConstellationId> + '_ {
        ConstellationId::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Rank of `c` among the members, i.e. its clock offset index.
    pub fn clock_slot(&self, c: ConstellationId) -> Option<usize> {
        if !self.contains(c) {
            return None;
        }
        Some((self.0 & (c.bit() - 1)).count_ones() as usize)
    }

    pub fn state_dim(&self) -> usize {
        index::dim(self.len())
    }
}

impl TryFrom<Vec<ConstellationId>> for ConstellationSet {
    type Error = Error;

    fn try_from(v: Vec<ConstellationId>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConstellationSet> for Vec<ConstellationId> {
    fn from(s: ConstellationSet) -> Self {
        s.iter().collect()
    }
}

/// Typed view of the navigation state `[p, v, a, dt(1..n_s), dtdot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateVectorRepr", into = "StateVectorRepr")]
pub struct StateVector {
    constellations: ConstellationSet,
    values: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateVectorRepr {
    constellations: ConstellationSet,
    values: Vec<f64>,
}

impl TryFrom<StateVectorRepr> for StateVector {
    type Error = Error;

    fn try_from(r: StateVectorRepr) -> Result<Self> {
        Self::from_vector(r.constellations, DVector::from_vec(r.values))
    }
}

impl From<StateVector> for StateVectorRepr {
    fn from(s: StateVector) -> Self {
        Self {
            constellations: s.constellations,
            values: s.values.as_slice().to_vec(),
        }
    }
}

impl StateVector {
    pub fn zeros(constellations: ConstellationSet) -> Self {
        Self {
            constellations,
            values: DVector::zeros(constellations.state_dim()),
        }
    }

    pub fn from_vector(constellations: ConstellationSet, values: DVector<f64>) -> Result<Self> {
        if values.len() != constellations.state_dim() {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected {}",
                values.len(),
                constellations.state_dim()
            )));
        }
        Ok(Self { constellations, values })
    }

    pub fn constellations(&self) -> ConstellationSet {
        self.constellations
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }

    fn block(&self, r: Range<usize>) -> Vector3<f64> {
        Vector3::new(self.values[r.start], self.values[r.start + 1], self.values[r.start + 2])
    }

    fn set_block(&mut self, r: Range<usize>, v: &Vector3<f64>) {
        self.values.rows_mut(r.start, 3).copy_from(v);
    }

    pub fn position(&self) -> Vector3<f64> {
        self.block(index::POSITION)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.block(index::VELOCITY)
    }

    pub fn acceleration(&self) -> Vector3<f64> {
        self.block(index::ACCELERATION)
    }

    pub fn set_position(&mut self, p: &Vector3<f64>) {
        self.set_block(index::POSITION, p)
    }

    pub fn set_velocity(&mut self, v: &Vector3<f64>) {
        self.set_block(index::VELOCITY, v)
    }

    pub fn set_acceleration(&mut self, a: &Vector3<f64>) {
        self.set_block(index::ACCELERATION, a)
    }

    /// Clock offset slot of `c` within the full state, if present.
    pub fn clock_index(&self, c: ConstellationId) -> Option<usize> {
        self.constellations.clock_slot(c).map(index::clock)
    }

    pub fn clock(&self, c: ConstellationId) -> Option<f64> {
        self.clock_index(c).map(|i| self.values[i])
    }

    pub fn set_clock(&mut self, c: ConstellationId, value: f64) -> Result<()> {
        let i = self
            .clock_index(c)
            .ok_or_else(|| Error::InvalidParameter(format!("{c} not in state")))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn drift_index(&self) -> usize {
        index::drift(self.constellations.len())
    }

    pub fn drift(&self) -> f64 {
        self.values[self.drift_index()]
    }

    pub fn set_drift(&mut self, value: f64) {
        let i = self.drift_index();
        self.values[i] = value;
    }
}

/// Gaussian state estimate with its covariance and cached information matrix.
///
/// The mean is a plain vector so that the estimation and selection routines
/// also run on toy linear problems; use [`StateVector::from_vector`] for the
/// typed GNSS view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    t: f64,
    x: DVector<f64>,
    p: DMatrix<f64>,
    j: DMatrix<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

impl StateEstimate {
    pub fn from_covariance(t: f64, x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        check_square(&x, &p)?;
        let p = symmetrize(&p);
        let j = spd_inverse(&p).ok_or(Error::SingularCovariance)?;
        Ok(Self { t, x, p, j })
    }

    pub fn from_information(t: f64, x: DVector<f64>, j: DMatrix<f64>) -> Result<Self> {
        check_square(&x, &j)?;
        let j = symmetrize(&j);
        let p = spd_inverse(&j).ok_or(Error::SingularInformation)?;
        Ok(Self { t, x, p, j })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn state(&self, constellations: ConstellationSet) -> Result<StateVector> {
        StateVector::from_vector(constellations, self.x.clone())
    }
}

fn check_square(x: &DVector<f64>, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != x.len() || m.ncols() != x.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, state has {} entries",
            m.nrows(),
            m.ncols(),
            x.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementKind {
    Pseudorange,
    Doppler,
}

/// One corrected GNSS observation.
///
/// `value` and `sigma` are meters for pseudoranges and m/s for Dopplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sat_id: u32,
    pub constellation: ConstellationId,
    pub kind: MeasurementKind,
    pub value: f64,
    pub sigma: f64,
    pub sat_pos: [f64; 3],
    pub sat_vel: [f64; 3],
    pub elevation: f64,
}

impl Measurement {
    pub fn sat_position(&self) -> Vector3<f64> {
        Vector3::from(self.sat_pos)
    }

    pub fn sat_velocity(&self) -> Vector3<f64> {
        Vector3::from(self.sat_vel)
    }
}

/// All measurements of one epoch: every pseudorange, then every Doppler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMeasurements {
    pub t: f64,
    pub measurements: Vec<Measurement>,
}

impl EpochMeasurements {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Number of distinct satellites contributing to the epoch.
    pub fn satellite_count(&self) -> usize {
        let mut ids: Vec<_> = self.measurements.iter().map(|m| (m.constellation, m.sat_id)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Checks the pseudoranges-then-Dopplers ordering and positive sigmas.
    pub fn validate(&self) -> Result<()> {
        let mut seen_doppler = false;
        for (i, m) in self.measurements.iter().enumerate() {
            if !(m.sigma > 0.0) || !m.sigma.is_finite() {
                return Err(Error::NonPositiveSigma {
                    index: i,
                    sigma: m.sigma,
                });
            }
            match m.kind {
                MeasurementKind::Doppler => seen_doppler = true,
                MeasurementKind::Pseudorange if seen_doppler => {
                    return Err(Error::InvalidParameter(format!(
                        "pseudorange at index {i} follows a Doppler"
                    )))
                }
                MeasurementKind::Pseudorange => {}
            }
        }
        Ok(())
    }

    /// Copy of the epoch restricted to the given satellites, order preserved.
    pub fn restricted_to(&self, keep: &[(ConstellationId, u32)]) -> Self {
        Self {
            t: self.t,
            measurements: self
                .measurements
                .iter()
                .filter(|m| keep.contains(&(m.constellation, m.sat_id)))
                .cloned()
                .collect(),
        }
    }
}

/// Binary measurement-usage flags in epoch order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionVector {
    pub flags: Vec<bool>,
    /// Whether the performance constraint was satisfiable this epoch.
    pub feasible: bool,
}

impl SelectionVector {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags, feasible: true }
    }

    pub fn all(n: usize) -> Self {
        Self::from_flags(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        Self::from_flags(vec![false; n])
    }

    /// Selection encoded by the low `n` bits of `mask`, bit `i` for entry `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self::from_flags((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn is_all(&self) -> bool {
        self.flags.iter().all(|&b| b)
    }

    pub fn get(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        if self.flags[i] {
            1.0
        } else {
            0.0
        }
    }

    /// `0`/`1` string in epoch order, used by the selection log.
    pub fn to_bit_string(&self) -> String {
        self.flags.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::InvalidParameter(format!("bad selection flag {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_flags)
    }
}

/// Lower bounds on the NED position and velocity information diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSpec {
    /// 1/m^2, north, east, down.
    pub position: [f64; 3],
    /// 1/(m/s)^2, north, east, down.
    pub velocity: [f64; 3],
}

impl Default for PerformanceSpec {
    /// Bounds corresponding to the SAE J2945 68% accuracy target.
    fn default() -> Self {
        Self {
            position: [1.929, 1.929, 0.121],
            velocity: [1.389, 1.389, 0.347],
        }
    }
}

impl PerformanceSpec {
    pub fn bounds(&self) -> [f64; 6] {
        let [a, b, c] = self.position;
        let [d, e, f] = self.velocity;
        [a, b, c, d, e, f]
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds().iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("performance bounds must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "TD")]
    Td,
    #[serde(rename = "RAPS-greedy")]
    RapsGreedy,
    #[serde(rename = "RAPS-exhaustive")]
    RapsExhaustive,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ekf => "EKF",
            Self::Td => "TD",
            Self::RapsGreedy => "RAPS-greedy",
            Self::RapsExhaustive => "RAPS-exhaustive",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ekf" => Ok(Self::Ekf),
            "td" => Ok(Self::Td),
            "raps-greedy" | "raps_greedy" | "raps" => Ok(Self::RapsGreedy),
            "raps-exhaustive" | "raps_exhaustive" => Ok(Self::RapsExhaustive),
            other => Err(Error::InvalidParameter(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkyLabel {
    Open,
    Obstructed,
}

impl SkyLabel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Open => "Open",
            Self::Obstructed => "Obstructed",
        }
    }
}

impl FromStr for SkyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Open" => Ok(Self::Open),
            "Obstructed" => Ok(Self::Obstructed),
            other => Err(Error::InvalidParameter(format!("unknown sky label {other:?}"))),
        }
    }
}

/// One estimator's output for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub t: f64,
    pub estimator: EstimatorKind,
    pub risk: f64,
    pub n_used: usize,
    pub n_available: usize,
    pub err_n: f64,
    pub err_e: f64,
    pub err_d: f64,
    pub he: f64,
    pub ve: f64,
    pub feasible: bool,
    pub sky: SkyLabel,
}

impl EpochRecord {
    pub fn n_removed(&self) -> usize {
        self.n_available - self.n_used
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clock_slots_follow_fixed_order() {
        let all = ConstellationSet::all();
        assert_eq!(all.clock_slot(ConstellationId::Gps), Some(0));
        assert_eq!(all.clock_slot(ConstellationId::Galileo), Some(1));
        assert_eq!(all.clock_slot(ConstellationId::BeiDou), Some(2));
        assert_eq!(all.state_dim(), 13);

        let gb = ConstellationSet::new([ConstellationId::BeiDou, ConstellationId::Gps]).unwrap();
        assert_eq!(gb.clock_slot(ConstellationId::BeiDou), Some(1));
        assert_eq!(gb.clock_slot(ConstellationId::Galileo), None);
        assert_eq!(gb.state_dim(), 12);
        assert!(ConstellationSet::new([]).is_err());
    }

    #[test]
    fn state_vector_index_map() {
        let set = ConstellationSet::all();
        let values = DVector::from_iterator(13, (0..13).map(|i| i as f64));
        let x = StateVector::from_vector(set, values).unwrap();
        assert_eq!(x.position(), Vector3::new(0.0, 1.0, 2.0));
        assert_eq!(x.velocity(), Vector3::new(3.0, 4.0, 5.0));
        assert_eq!(x.acceleration(), Vector3::new(6.0, 7.0, 8.0));
        assert_eq!(x.clock(ConstellationId::Gps), Some(9.0));
        assert_eq!(x.clock(ConstellationId::BeiDou), Some(11.0));
        assert_eq!(x.drift(), 12.0);

        let single = ConstellationSet::new([ConstellationId::Gps]).unwrap();
        assert!(StateVector::from_vector(single, DVector::zeros(13)).is_err());
        assert_eq!(StateVector::zeros(single).drift_index(), 10);
    }

    #[test]
    fn estimate_caches_inverse() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let est = StateEstimate::from_covariance(0.0, DVector::zeros(2), p).unwrap();
        let id = est.information() * est.covariance();
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            StateEstimate::from_covariance(0.0, DVector::zeros(2), bad),
            Err(Error::SingularCovariance)
        );
    }

    #[test]
    fn epoch_ordering_is_checked() {
        let m = |kind, sigma| Measurement {
            sat_id: 1,
            constellation: ConstellationId::Gps,
            kind,
            value: 0.0,
            sigma,
            sat_pos: [0.0; 3],
            sat_vel: [0.0; 3],
            elevation: 1.0,
        };
        let ok = EpochMeasurements {
            t: 0.0,
            measurements: vec![m(MeasurementKind::Pseudorange, 1.0), m(MeasurementKind::Doppler, 1.0)],
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.satellite_count(), 1);
        let swapped = EpochMeasurements {
            t: 0.0,
            measurements: vec![m(MeasurementKind::Doppler, 1.0), m(MeasurementKind::Pseudorange, 1.0)],
        };
        assert!(swapped.validate().is_err());
        let zero = EpochMeasurements {
            t: 0.0,
            measurements: vec![m(MeasurementKind::Pseudorange, 0.0)],
        };
        assert!(matches!(zero.validate(), Err(Error::NonPositiveSigma { .. })));
    }

    #[test]
    fn selection_bits() {
        let b = SelectionVector::from_mask(0b101, 4);
        assert_eq!(b.to_bit_string(), "1010");
        assert_eq!(b.count(), 2);
        assert_eq!(SelectionVector::from_bit_string("1010").unwrap().flags, b.flags);
        assert!(SelectionVector::from_bit_string("102").is_err());
    }

    #[test]
    fn estimator_names_parse() {
        for k in [
            EstimatorKind::Ekf,
            EstimatorKind::Td,
            EstimatorKind::RapsGreedy,
            EstimatorKind::RapsExhaustive,
        ] {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn serde_round_trip_is_exact(
            values in prop::collection::vec(-1e8f64..1e8, 13),
            t in 0.0f64..1e5,
            sigma in 1e-3f64..10.0,
            el in 0.0f64..1.5,
        ) {
            let x = StateVector::from_vector(ConstellationSet::all(), DVector::from_vec(values)).unwrap();
            let json = serde_json::to_string(&x).unwrap();
            let back: StateVector = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, &x);

            let epoch = EpochMeasurements {
                t,
                measurements: vec![Measurement {
                    sat_id: 7,
                    constellation: ConstellationId::Galileo,
                    kind: MeasurementKind::Pseudorange,
                    value: x.as_vector()[0],
                    sigma,
                    sat_pos: [x.as_vector()[1], x.as_vector()[2], x.as_vector()[3]],
                    sat_vel: [x.as_vector()[4], 0.0, -0.0],
                    elevation: el,
                }],
            };
            let json = serde_json::to_string(&epoch).unwrap();
            let back: EpochMeasurements = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, epoch);
        }
    }
}
