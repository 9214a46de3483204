use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use super::{DataError, RampLabel, TIMESTAMP_FORMAT};

/// One observation on the sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub timestamp: NaiveDateTime,
    /// Watts.
    pub power: f64,
    /// Degrees Celsius.
    pub temperature: f64,
}

impl SampleRecord {
    pub fn new(timestamp: NaiveDateTime, power: f64, temperature: f64) -> Self {
        Self {
            timestamp,
            power,
            temperature,
        }
    }
}

/// Loads a `timestamp,power_w,temp_c` file. Lines starting with `#` are
/// comments.
pub fn load_series(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, DataError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_series(file)
}

pub fn read_series<R: Read>(reader: R) -> Result<Vec<SampleRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp", "power_w", "temp_c"] {
        return Err(DataError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut records: Vec<SampleRecord> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            DataError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| DataError::Parse { line, message };

        if row.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", row.len())));
        }
        let timestamp = NaiveDateTime::parse_from_str(&row[0], TIMESTAMP_FORMAT)
            .map_err(|e| parse_err(format!("timestamp '{}': {e}", &row[0])))?;
        let power = parse_finite(&row[1]).map_err(|m| parse_err(format!("power_w {m}")))?;
        let temperature = parse_finite(&row[2]).map_err(|m| parse_err(format!("temp_c {m}")))?;

        if let Some(prev) = records.last() {
            if timestamp < prev.timestamp {
                return Err(DataError::NonMonotone {
                    line,
                    previous: prev.timestamp,
                    found: timestamp,
                });
            }
        }
        records.push(SampleRecord::new(timestamp, power, temperature));
    }
    Ok(records)
}

fn parse_finite(field: &str) -> Result<f64, String> {
    let value: f64 = field.parse().map_err(|_| format!("'{field}' is not a number"))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{field}' is not finite"))
    }
}

/// Output of [`clean_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    pub records: Vec<SampleRecord>,
    pub removed: usize,
    /// Indices `i` into `records` where `records[i]` does not follow
    /// `records[i - 1]` by exactly one sampling interval.
    pub gaps: Vec<usize>,
}

/// Drops bad points: non-finite or negative power, non-finite temperature,
/// and any timestamp not strictly after the last kept one.
pub fn clean_series(records: &[SampleRecord], sampling_minutes: u32) -> CleanReport {
    let mut kept: Vec<SampleRecord> = Vec::with_capacity(records.len());
    for rec in records {
        let valid = rec.power.is_finite() && rec.power >= 0.0 && rec.temperature.is_finite();
        let after_last = kept.last().is_none_or(|last| rec.timestamp > last.timestamp);
        if valid && after_last {
            kept.push(*rec);
        }
    }

    let step = Duration::minutes(i64::from(sampling_minutes));
    let gaps = kept
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].timestamp - w[0].timestamp != step)
        .map(|(i, _)| i + 1)
        .collect();

    CleanReport {
        removed: records.len() - kept.len(),
        records: kept,
        gaps,
    }
}

/// Writes records in the input layout, so the output can be read back by
/// [`load_series`].
pub fn write_series<W: Write>(mut out: W, header_comment: &str, records: &[SampleRecord]) -> Result<(), DataError> {
    let io = |e| DataError::io("<series>", e);
    writeln!(out, "# {header_comment}").map_err(io)?;
    writeln!(out, "timestamp,power_w,temp_c").map_err(io)?;
    for rec in records {
        writeln!(
            out,
            "{},{},{}",
            rec.timestamp.format(TIMESTAMP_FORMAT),
            rec.power,
            rec.temperature
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Writes `timestamp,power_w,temp_c,label`; unlabeled rows get `NA`.
pub fn write_labeled_series<W: Write>(
    mut out: W,
    header_comment: &str,
    records: &[SampleRecord],
    labels: &[Option<RampLabel>],
) -> Result<(), DataError> {
    if records.len() != labels.len() {
        return Err(DataError::LabelMismatch {
            records: records.len(),
            labels: labels.len(),
        });
    }
    let io = |e| DataError::io("<labeled series>", e);
    writeln!(out, "# {header_comment}").map_err(io)?;
    writeln!(out, "timestamp,power_w,temp_c,label").map_err(io)?;
    for (rec, label) in records.iter().zip(labels) {
        let label = label.map_or_else(|| "NA".to_string(), |l| l.value().to_string());
        writeln!(
            out,
            "{},{},{},{}",
            rec.timestamp.format(TIMESTAMP_FORMAT),
            rec.power,
            rec.temperature,
            label
        )
        .map_err(io)?;
    }
    Ok(())
}
