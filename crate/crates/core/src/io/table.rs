//! CSV tables: peaks, envelopes and loss curves.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhythm::{OnsetEnvelope, RhythmPeaks};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::format(format!("CSV {}", path.display()), format!("{other:?}")),
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_rows_to(file, rows).map_err(|e| e.in_stage("cli_io", Some(path.to_path_buf())))
}

/// Header line, then one CSV record per row.
pub fn write_rows_to<T: Serialize, W: std::io::Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(Path::new("output"), e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn peak_rows(p: &RhythmPeaks) -> Vec<PeakRow> {
    p.indices.iter().map(|&index| PeakRow { index, time: p.time_of(index) }).collect()
}

pub fn envelope_rows(o: &OnsetEnvelope) -> Vec<EnvelopeRow> {
    o.values
        .iter()
        .enumerate()
        .map(|(index, &value)| EnvelopeRow {
            index,
            time: o.offset + index as f64 / o.frame_rate,
            value,
        })
        .collect()
}
