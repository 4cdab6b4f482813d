//! Sensor CSV files: header `t,ch1,...,chM`, one row per sample, `t` in
//! seconds, strictly increasing and uniformly spaced.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ou_process::{SampleTimes, SensorBatch};

use super::format::fixed;

/// Relative tolerance on the sample spacing.
const SPACING_TOLERANCE: f64 = 1e-6;

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line: line as usize, message: message.into() }
}

pub fn read_sensor_csv(path: &Path) -> Result<SensorBatch> {
    let file = std::fs::File::open(path).map_err(|e| parse_error(path, 0, format!("cannot open: {e}")))?;
    parse_sensor_csv(file, path)
}

/// Parses sensor CSV from any reader; `path` only labels error messages.
pub fn parse_sensor_csv<R: std::io::Read>(input: R, path: &Path) -> Result<SensorBatch> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(parse_error(path, 1, "empty file, expected header t,ch1,...")),
        Some(r) => r.map_err(|e| parse_error(path, 1, e.to_string()))?,
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"t") || names.len() < 2 {
        return Err(parse_error(path, 1, "header must be t,ch1,...,chM with M >= 1"));
    }
    for (i, name) in names.iter().enumerate().skip(1) {
        if *name != format!("ch{i}") {
            return Err(parse_error(path, 1, format!("column {} should be ch{i}, found {name:?}", i + 1)));
        }
    }
    let m = names.len() - 1;

    let mut times = Vec::new();
    let mut channels = vec![Vec::new(); m];
    let mut lines = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != m + 1 {
            return Err(parse_error(path, line, format!("expected {} fields, found {}", m + 1, record.len())));
        }
        let mut values = record.iter().map(|f| {
            let f = f.trim();
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(path, line, format!("not a finite number: {f:?}"))),
            }
        });
        times.push(values.next().unwrap()?);
        for ch in channels.iter_mut() {
            ch.push(values.next().unwrap()?);
        }
        lines.push(line);
    }
    if times.len() < 2 {
        return Err(parse_error(path, lines.last().copied().unwrap_or(1), "need at least 2 data rows"));
    }

    let spacing = times[1] - times[0];
    if !(spacing > 0.0) {
        return Err(parse_error(path, lines[1], "t must be strictly increasing"));
    }
    for i in 1..times.len() {
        let step = times[i] - times[i - 1];
        if !(step > 0.0) {
            return Err(parse_error(path, lines[i], "t must be strictly increasing"));
        }
        if (step - spacing).abs() > SPACING_TOLERANCE * spacing {
            return Err(parse_error(
                path,
                lines[i],
                format!("non-uniform spacing: step {step} differs from {spacing}"),
            ));
        }
    }
    SensorBatch::new(channels, SampleTimes::new(times)?)
}

pub fn write_sensor_csv(path: &Path, batch: &SensorBatch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain((1..=batch.n_channels()).map(|i| format!("ch{i}"))).collect();
    w.write_record(&header).map_err(csv_io)?;
    for (i, t) in batch.times().as_slice().iter().enumerate() {
        let row = std::iter::once(fixed(*t)).chain(batch.channels().iter().map(|ch| fixed(ch[i])));
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
