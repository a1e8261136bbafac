//! Error statistics, segment summaries and risk traces.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{ned_rotation, GeodeticPosition};
use crate::types::{EpochRecord, EstimatorKind, SkyLabel, StateVector};

/// Horizontal error threshold for the tighter lane-level bound, meters.
pub const HE_TIGHT: f64 = 1.0;
/// Horizontal accuracy target, meters.
pub const HE_TARGET: f64 = 1.5;
/// Vertical accuracy target, meters.
pub const VE_TARGET: f64 = 3.0;
/// Probability at which the accuracy targets must hold.
pub const TARGET_PROBABILITY: f64 = 0.68;

pub fn ned_error(estimate: &StateVector, truth: &StateVector, origin: &GeodeticPosition) -> Vector3<f64> {
    ned_rotation(origin) * (estimate.position() - truth.position())
}

pub fn he_ve(err: &Vector3<f64>) -> (f64, f64) {
    (err.x.hypot(err.y), err.z.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Overall,
    Obstructed,
    Open,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Self::Overall, Self::Obstructed, Self::Open];

    pub fn name(self) -> &'static str {
        match self {
            Self::Overall => "Overall",
            Self::Obstructed => "Obstructed",
            Self::Open => "Open",
        }
    }

    pub fn contains(self, sky: SkyLabel) -> bool {
        match self {
            Self::Overall => true,
            Self::Obstructed => sky == SkyLabel::Obstructed,
            Self::Open => sky == SkyLabel::Open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
}

impl SeriesStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySegment("no samples".into()));
        }
        let n = values.len() as f64;
        Ok(Self {
            mean: values.iter().sum::<f64>() / n,
            rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Fraction of samples `<= threshold`.
pub fn fraction_within(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().filter(|&&v| v <= threshold).count() as f64 / values.len() as f64
}

/// One row of a segment summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub segment: Segment,
    pub estimator: EstimatorKind,
    pub epochs: usize,
    pub he: SeriesStats,
    pub ve: SeriesStats,
    pub p_he_1_0: f64,
    pub p_he_1_5: f64,
    pub p_ve_3_0: f64,
    pub fallback_epochs: usize,
}

/// Per-estimator statistics over the epochs of `segment`, ordered by estimator.
pub fn summarize(records: &[EpochRecord], segment: Segment) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<EstimatorKind, Vec<&EpochRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| segment.contains(r.sky)) {
        groups.entry(r.estimator).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(Error::EmptySegment(segment.name().into()));
    }
    groups
        .into_iter()
        .map(|(estimator, rs)| {
            let he: Vec<f64> = rs.iter().map(|r| r.he).collect();
            let ve: Vec<f64> = rs.iter().map(|r| r.ve).collect();
            Ok(SummaryRow {
                segment,
                estimator,
                epochs: rs.len(),
                he: SeriesStats::of(&he)?,
                ve: SeriesStats::of(&ve)?,
                p_he_1_0: fraction_within(&he, HE_TIGHT),
                p_he_1_5: fraction_within(&he, HE_TARGET),
                p_ve_3_0: fraction_within(&ve, VE_TARGET),
                fallback_epochs: rs.iter().filter(|r| !r.feasible).count(),
            })
        })
        .collect()
}

/// Summaries for every segment that has epochs.
pub fn summarize_all(records: &[EpochRecord]) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for segment in Segment::ALL {
        match summarize(records, segment) {
            Ok(mut r) => rows.append(&mut r),
            Err(Error::EmptySegment(_)) if segment != Segment::Overall => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub t: f64,
    pub estimator: EstimatorKind,
    pub risk: f64,
    pub n_removed: usize,
    pub n_available: usize,
}

/// Risk and removal counts per estimator, in time order.
///
/// Every estimator must report the same epoch times.
pub fn risk_trace(records: &[EpochRecord]) -> Result<BTreeMap<EstimatorKind, Vec<RiskPoint>>> {
    let mut out: BTreeMap<EstimatorKind, Vec<RiskPoint>> = BTreeMap::new();
    for r in records {
        out.entry(r.estimator).or_default().push(RiskPoint {
            t: r.t,
            estimator: r.estimator,
            risk: r.risk,
            n_removed: r.n_removed(),
            n_available: r.n_available,
        });
    }
    for series in out.values_mut() {
        series.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    let mut series = out.values();
    if let Some(first) = series.next() {
        for other in series {
            let aligned = first.len() == other.len() && first.iter().zip(other).all(|(a, b)| a.t == b.t);
            if !aligned {
                return Err(Error::MisalignedEpochs(format!(
                    "{} and {} report different epochs",
                    first[0].estimator, other[0].estimator
                )));
            }
        }
    }
    Ok(out)
}

/// Sorted samples with empirical quantiles `k / n`.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| (v, (k + 1) as f64 / n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ConstellationSet;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn record(estimator: EstimatorKind, t: f64, he: f64, sky: SkyLabel) -> EpochRecord {
        EpochRecord {
            t,
            estimator,
            risk: 1.0,
            n_used: 40,
            n_available: 46,
            err_n: he,
            err_e: 0.0,
            err_d: 0.5,
            he,
            ve: 0.5,
            feasible: true,
            sky,
        }
    }

    #[test]
    fn ned_error_examples() {
        let set = ConstellationSet::all();
        let truth = StateVector::zeros(set);
        let origin = GeodeticPosition::new(0.0, 0.0, 0.0);
        assert_eq!(ned_error(&truth, &truth, &origin), Vector3::zeros());
        let mut est = truth.clone();
        est.set_position(&Vector3::new(0.0, 0.0, 1.0));
        let e = ned_error(&est, &truth, &origin);
        assert_abs_diff_eq!(e, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn he_ve_examples() {
        assert_eq!(he_ve(&Vector3::new(3.0, 4.0, -2.0)), (5.0, 2.0));
        assert_eq!(he_ve(&Vector3::zeros()), (0.0, 0.0));
    }

    #[test]
    fn summary_statistics() {
        let records = vec![
            record(EstimatorKind::Ekf, 0.0, 3.0, SkyLabel::Open),
            record(EstimatorKind::Ekf, 1.0, 4.0, SkyLabel::Open),
        ];
        let rows = summarize(&records, Segment::Overall).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].he.mean, 3.5);
        assert_abs_diff_eq!(rows[0].he.rms, 12.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(rows[0].he.max, 4.0);
        assert_eq!(rows[0].p_he_1_5, 0.0);
        assert!(matches!(
            summarize(&records, Segment::Obstructed),
            Err(Error::EmptySegment(_))
        ));
    }

    #[test]
    fn perfect_track_has_full_probability() {
        let records: Vec<_> = (0..10)
            .map(|k| record(EstimatorKind::Td, k as f64, 0.0, SkyLabel::Open))
            .collect();
        let row = &summarize(&records, Segment::Open).unwrap()[0];
        assert_eq!((row.p_he_1_0, row.p_he_1_5, row.p_ve_3_0), (1.0, 1.0, 1.0));
    }

    #[test]
    fn targets() {
        assert_eq!(
            (HE_TIGHT, HE_TARGET, VE_TARGET, TARGET_PROBABILITY),
            (1.0, 1.5, 3.0, 0.68)
        );
    }

    #[test]
    fn trace_rejects_misaligned() {
        let records = vec![
            record(EstimatorKind::Ekf, 0.0, 1.0, SkyLabel::Open),
            record(EstimatorKind::Td, 1.0, 1.0, SkyLabel::Open),
        ];
        assert!(matches!(risk_trace(&records), Err(Error::MisalignedEpochs(_))));
        let records = vec![
            record(EstimatorKind::Ekf, 0.0, 1.0, SkyLabel::Open),
            record(EstimatorKind::Td, 0.0, 1.0, SkyLabel::Open),
        ];
        let trace = risk_trace(&records).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[&EstimatorKind::Td][0].n_removed, 6);
    }

    #[test]
    fn cdf_is_sorted() {
        let c = cdf(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn rms_bounds(values in prop::collection::vec(0.0f64..1e3, 1..200)) {
            let s = SeriesStats::of(&values).unwrap();
            prop_assert!(s.rms >= s.mean * (1.0 - 1e-12));
            prop_assert!(s.mean >= 0.0);
            prop_assert!(s.max >= s.rms / (values.len() as f64).sqrt() * (1.0 - 1e-12));
            prop_assert!(s.max >= s.rms * (1.0 - 1e-12));
        }

        #[test]
        fn he_symmetric(n in -1e3f64..1e3, e in -1e3f64..1e3, d in -1e3f64..1e3) {
            prop_assert_eq!(he_ve(&Vector3::new(n, e, d)), he_ve(&Vector3::new(e, n, d)));
        }

        #[test]
        fn segments_partition(labels in prop::collection::vec(any::<bool>(), 1..100)) {
            let records: Vec<_> = labels
                .iter()
                .enumerate()
                .map(|(k, &o)| record(EstimatorKind::Ekf, k as f64, 1.0, if o { SkyLabel::Obstructed } else { SkyLabel::Open }))
                .collect();
            let count = |s| summarize(&records, s).map(|r| r[0].epochs).unwrap_or(0);
            prop_assert_eq!(count(Segment::Overall), count(Segment::Obstructed) + count(Segment::Open));
        }

        #[test]
        fn ned_error_preserves_norm(lat in -1.5f64..1.5, lon in -3.1f64..3.1, dx in -10.0f64..10.0, dy in -10.0f64..10.0, dz in -10.0f64..10.0) {
            let set = ConstellationSet::all();
            let truth = StateVector::zeros(set);
            let mut est = truth.clone();
            let d = Vector3::new(dx, dy, dz);
            est.set_position(&d);
            let e = ned_error(&est, &truth, &GeodeticPosition::new(lat, lon, 0.0));
            prop_assert!((e.norm() - d.norm()).abs() < 1e-12);
        }
    }
}
