//! Line-delimited JSON epoch and truth files.
//!
//! Line 1 is an [`EpochFileHeader`]; every following non-blank line is one
//! [`EpochMeasurements`] (or one [`TruthRecord`] in a truth file). Numbers are
//! written in shortest round-trip decimal form, so reading a written file
//! returns bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CliError, CliResult};
use crate::geodesy::GeodeticPosition;
use crate::simulator::{TimeWindow, TruthRecord};
use crate::types::{ConstellationSet, EpochMeasurements};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochFileHeader {
    pub version: u32,
    /// NED origin for error statistics.
    pub origin: GeodeticPosition,
    /// Constellations whose clocks are in the state, in clock-slot order.
    pub constellations: ConstellationSet,
    pub n_s: usize,
    /// Obstructed windows used to label epochs.
    #[serde(default)]
    pub windows: Vec<TimeWindow>,
}

impl EpochFileHeader {
    pub fn new(origin: GeodeticPosition, constellations: ConstellationSet, windows: Vec<TimeWindow>) -> Self {
        Self {
            version: FORMAT_VERSION,
            origin,
            constellations,
            n_s: constellations.len(),
            windows,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if self.n_s != self.constellations.len() {
            return Err(format!(
                "n_s = {} but {} constellations listed",
                self.n_s,
                self.constellations.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochFile {
    pub header: EpochFileHeader,
    pub epochs: Vec<EpochMeasurements>,
}

fn write_lines<T: Serialize>(path: &Path, header: &EpochFileHeader, rows: &[T]) -> CliResult<()> {
    let err = |e: &dyn std::fmt::Display| CliError::data(path.display(), e);
    let mut w = BufWriter::new(File::create(path).map_err(|e| err(&e))?);
    serde_json::to_writer(&mut w, header).map_err(|e| err(&e))?;
    w.write_all(b"\n").map_err(|e| err(&e))?;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| err(&e))?;
        w.write_all(b"\n").map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> CliResult<(EpochFileHeader, Vec<(usize, T)>)> {
    let file = File::open(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let at = |msg: &dyn std::fmt::Display| CliError::Data(format!("{}:{lineno}: {msg}", path.display()));
        let line = line.map_err(|e| at(&e))?;
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => {
                let h: EpochFileHeader = serde_json::from_str(&line).map_err(|e| at(&e))?;
                h.validate().map_err(|e| at(&e))?;
                header = Some(h);
            }
            Some(_) => rows.push((lineno, serde_json::from_str(&line).map_err(|e| at(&e))?)),
        }
    }
    let header = header.ok_or_else(|| CliError::Data(format!("{}: no epochs", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no epochs", path.display())));
    }
    Ok((header, rows))
}

fn check_times(path: &Path, times: impl Iterator<Item = (usize, f64)>) -> CliResult<()> {
    let mut prev = f64::NEG_INFINITY;
    for (lineno, t) in times {
        if !(t > prev) {
            return Err(CliError::Data(format!(
                "{}:{lineno}: epoch time {t} does not increase (previous {prev})",
                path.display()
            )));
        }
        prev = t;
    }
    Ok(())
}

pub fn write_epoch_file(path: &Path, header: &EpochFileHeader, epochs: &[EpochMeasurements]) -> CliResult<()> {
    write_lines(path, header, epochs)
}

/// Reads and validates an epoch file.
pub fn load_epoch_file(path: &Path) -> CliResult<EpochFile> {
    let (header, rows) = read_lines::<EpochMeasurements>(path)?;
    check_times(path, rows.iter().map(|(l, e)| (*l, e.t)))?;
    for (lineno, epoch) in &rows {
        epoch
            .validate()
            .map_err(|e| CliError::Data(format!("{}:{lineno}: {e}", path.display())))?;
        if let Some(m) = epoch
            .measurements
            .iter()
            .find(|m| !header.constellations.contains(m.constellation))
        {
            return Err(CliError::Data(format!(
                "{}:{lineno}: constellation {} not declared in the header",
                path.display(),
                m.constellation
            )));
        }
    }
    Ok(EpochFile {
        header,
        epochs: rows.into_iter().map(|(_, e)| e).collect(),
    })
}

pub fn write_truth_file(path: &Path, header: &EpochFileHeader, truth: &[TruthRecord]) -> CliResult<()> {
    write_lines(path, header, truth)
}

pub fn load_truth_file(path: &Path) -> CliResult<(EpochFileHeader, Vec<TruthRecord>)> {
    let (header, rows) = read_lines::<TruthRecord>(path)?;
    check_times(path, rows.iter().map(|(l, r)| (*l, r.t)))?;
    Ok((header, rows.into_iter().map(|(_, r)| r).collect()))
}
