//! CSV and JSON output files.
//!
//! Floating-point columns use nine significant digits in scientific
//! notation so that output files compare byte-for-byte across runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CliError, CliResult, EstimatorTrack, RunConfig, RunInput};
use crate::metrics::{cdf, RiskPoint, Segment, SummaryRow};
use crate::types::{EpochRecord, EstimatorKind, SkyLabel};

/// Nine significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::data(path.display(), e))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let err = |e: csv::Error| CliError::data(path.display(), e);
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::data(path.display(), e))
}

pub const RECORD_COLUMNS: [&str; 12] = [
    "t",
    "estimator",
    "risk",
    "n_used",
    "n_available",
    "err_n",
    "err_e",
    "err_d",
    "he",
    "ve",
    "feasible",
    "sky",
];

pub fn write_records(path: &Path, records: &[EpochRecord]) -> CliResult<()> {
    write_rows(
        path,
        &RECORD_COLUMNS,
        records.iter().map(|r| {
            vec![
                fmt_f64(r.t),
                r.estimator.to_string(),
                fmt_f64(r.risk),
                r.n_used.to_string(),
                r.n_available.to_string(),
                fmt_f64(r.err_n),
                fmt_f64(r.err_e),
                fmt_f64(r.err_d),
                fmt_f64(r.he),
                fmt_f64(r.ve),
                r.feasible.to_string(),
                r.sky.name().to_string(),
            ]
        }),
    )
}

pub fn read_records(path: &Path) -> CliResult<Vec<EpochRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::data(path.display(), e))?;
    let headers = reader.headers().map_err(|e| CliError::data(path.display(), e))?.clone();
    if headers.iter().ne(RECORD_COLUMNS) {
        return Err(CliError::Data(format!("{}: unexpected columns", path.display())));
    }
    let mut out = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let lineno = k + 2;
        let at = |msg: String| CliError::Data(format!("{}:{lineno}: {msg}", path.display()));
        let row = row.map_err(|e| at(e.to_string()))?;
        let f = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|e| at(format!("{}: {e}", RECORD_COLUMNS[i])))
        };
        let u = |i: usize| {
            row[i]
                .parse::<usize>()
                .map_err(|e| at(format!("{}: {e}", RECORD_COLUMNS[i])))
        };
        out.push(EpochRecord {
            t: f(0)?,
            estimator: row[1].parse::<EstimatorKind>().map_err(|e| at(e.to_string()))?,
            risk: f(2)?,
            n_used: u(3)?,
            n_available: u(4)?,
            err_n: f(5)?,
            err_e: f(6)?,
            err_d: f(7)?,
            he: f(8)?,
            ve: f(9)?,
            feasible: row[10].parse::<bool>().map_err(|e| at(format!("feasible: {e}")))?,
            sky: row[11].parse::<SkyLabel>().map_err(|e| at(e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    write_rows(
        path,
        &[
            "segment",
            "estimator",
            "epochs",
            "he_mean",
            "he_rms",
            "he_max",
            "ve_mean",
            "ve_rms",
            "ve_max",
            "p_he_le_1.0",
            "p_he_le_1.5",
            "p_ve_le_3.0",
            "fallback_epochs",
        ],
        rows.iter().map(|r| {
            vec![
                r.segment.name().to_string(),
                r.estimator.to_string(),
                r.epochs.to_string(),
                fmt_f64(r.he.mean),
                fmt_f64(r.he.rms),
                fmt_f64(r.he.max),
                fmt_f64(r.ve.mean),
                fmt_f64(r.ve.rms),
                fmt_f64(r.ve.max),
                fmt_f64(r.p_he_1_0),
                fmt_f64(r.p_he_1_5),
                fmt_f64(r.p_ve_3_0),
                r.fallback_epochs.to_string(),
            ]
        }),
    )
}

pub fn write_risk_trace(path: &Path, trace: &BTreeMap<EstimatorKind, Vec<RiskPoint>>) -> CliResult<()> {
    write_rows(
        path,
        &["t", "estimator", "risk", "n_removed", "n_available"],
        trace.values().flatten().map(|p| {
            vec![
                fmt_f64(p.t),
                p.estimator.to_string(),
                fmt_f64(p.risk),
                p.n_removed.to_string(),
                p.n_available.to_string(),
            ]
        }),
    )
}

/// Sorted HE and VE samples with empirical quantiles, per estimator and segment.
pub fn write_cdf(path: &Path, records: &[EpochRecord]) -> CliResult<()> {
    let mut groups: BTreeMap<EstimatorKind, Vec<&EpochRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.estimator).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (estimator, rs) in &groups {
        for segment in Segment::ALL {
            let selected: Vec<_> = rs.iter().filter(|r| segment.contains(r.sky)).collect();
            for (metric, values) in [
                ("he", selected.iter().map(|r| r.he).collect::<Vec<_>>()),
                ("ve", selected.iter().map(|r| r.ve).collect()),
            ] {
                for (value, q) in cdf(&values) {
                    rows.push(vec![
                        estimator.to_string(),
                        segment.name().to_string(),
                        metric.to_string(),
                        fmt_f64(value),
                        fmt_f64(q),
                    ]);
                }
            }
        }
    }
    write_rows(path, &["estimator", "segment", "metric", "value", "quantile"], rows)
}

#[derive(Serialize)]
struct SelectionLine {
    t: f64,
    estimator: EstimatorKind,
    b: String,
    feasible: bool,
    risk: f64,
}

/// One JSON object per estimator and epoch with the selection as a `0`/`1` string.
pub fn write_selections(path: &Path, tracks: &[EstimatorTrack]) -> CliResult<()> {
    let err = |e: &dyn std::fmt::Display| CliError::data(path.display(), e);
    let mut w = BufWriter::new(File::create(path).map_err(|e| err(&e))?);
    for track in tracks {
        for (record, b) in track.records.iter().zip(&track.selections) {
            let line = SelectionLine {
                t: record.t,
                estimator: track.estimator,
                b: b.to_bit_string(),
                feasible: b.feasible,
                risk: record.risk,
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| err(&e))?;
            w.write_all(b"\n").map_err(|e| err(&e))?;
        }
    }
    w.flush().map_err(|e| err(&e))
}

/// Configuration echo and provenance for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub config: RunConfig,
}

pub fn write_manifest(path: &Path, config: &RunConfig, input: &RunInput) -> CliResult<()> {
    let manifest = Manifest {
        name: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.epoch_file.is_none().then_some(config.scenario.seed),
        epochs: input.epochs.len(),
        config: config.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(path.display(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::data(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.00000000e0");
        assert_eq!(fmt_f64(-0.000123456789123), "-1.23456789e-4");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn records_round_trip_at_printed_precision() {
        let r = EpochRecord {
            t: 12.0,
            estimator: EstimatorKind::RapsGreedy,
            risk: 3.25,
            n_used: 40,
            n_available: 46,
            err_n: 0.125,
            err_e: -0.5,
            err_d: 1.0,
            he: 0.515388203,
            ve: 1.0,
            feasible: true,
            sky: SkyLabel::Obstructed,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_records(&path).unwrap(), vec![r]);
    }
}
