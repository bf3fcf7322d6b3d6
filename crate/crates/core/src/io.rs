//! Trajectory CSV and run-summary JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{RecordMeta, Sample, TrajectoryRecord, COLUMNS};

/// Writes the record as CSV. Values use Rust's shortest round-trip
/// formatting, so [`parse_csv`] recovers them exactly.
pub fn write_csv(record: &TrajectoryRecord, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for s in &record.samples {
        let row = s.to_row();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn emit_csv(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(record, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Parses CSV produced by [`write_csv`]. Run metadata is not part of the
/// CSV and comes back empty.
pub fn parse_csv(text: &str) -> Result<TrajectoryRecord> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Csv {
        line: 1,
        reason: "missing header".into(),
    })?;
    if header != COLUMNS.join(",") {
        return Err(Error::Csv {
            line: 1,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let mut row = [0.0; COLUMNS.len()];
        let mut fields = line.split(',');
        for (k, slot) in row.iter_mut().enumerate() {
            let raw = fields.next().ok_or_else(|| Error::Csv {
                line: n,
                reason: format!("expected {} fields, got {k}", COLUMNS.len()),
            })?;
            *slot = raw.parse().map_err(|_| Error::Csv {
                line: n,
                reason: format!("bad number `{raw}` in column {}", COLUMNS[k]),
            })?;
        }
        if fields.next().is_some() {
            return Err(Error::Csv {
                line: n,
                reason: "too many fields".into(),
            });
        }
        samples.push(Sample::from_row(&row));
    }
    Ok(TrajectoryRecord {
        samples,
        meta: RecordMeta {
            scenario_hash: String::new(),
            seed: 0,
            rng: String::new(),
            measurement_updates: 0,
            min_covariance_eigenvalue: None,
            max_covariance_asymmetry: None,
        },
    })
}

pub fn read_csv(path: &Path) -> Result<TrajectoryRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Pretty-printed JSON, newline-terminated.
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
