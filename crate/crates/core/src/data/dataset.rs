use std::io::Write;

use chrono::{Datelike, Duration, NaiveDateTime};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{minmax_fit, DataError, NormalizationParams, RampLabel, SampleRecord};
use crate::wavelet::{window_band_features, WaveletFilter, BAND_FEATURES, WINDOW_LEN};

/// Feature matrix with one ramp label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<RampLabel>,
    pub feature_names: Vec<String>,
    /// Timestamp of the last sample in each row's window.
    pub timestamps: Vec<NaiveDateTime>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<RampLabel>,
        feature_names: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() || timestamps.len() != labels.len() {
            return Err(DataError::LabelMismatch {
                records: features.nrows(),
                labels: labels.len(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(DataError::DimensionMismatch {
                expected: features.ncols(),
                found: feature_names.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features.slice(ndarray::s![range.clone(), ..]).to_owned(),
            labels: self.labels[range.clone()].to_vec(),
            feature_names: self.feature_names.clone(),
            timestamps: self.timestamps[range].to_vec(),
        }
    }

    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
        }
    }

    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(1), columns),
            labels: self.labels.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            timestamps: self.timestamps.clone(),
        }
    }

    pub fn fit_normalization(&self) -> Result<NormalizationParams, DataError> {
        minmax_fit(self.features.view(), &self.feature_names)
    }

    pub fn normalized(&self, params: &NormalizationParams) -> Result<Dataset, DataError> {
        Ok(Dataset {
            features: params.apply(self.features.view())?,
            ..self.clone()
        })
    }

    /// Labels as `-1.0 / 0.0 / 1.0`, for correlation with features.
    pub fn label_values(&self) -> Vec<f64> {
        self.labels.iter().map(|l| f64::from(l.value())).collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for l in &self.labels {
            counts[l.class_index()] += 1;
        }
        counts
    }
}

/// Names of the 40 wavelet-dataset columns.
pub fn wavelet_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(BAND_FEATURES + WINDOW_LEN);
    for band in ["a3", "d3", "d2", "d1"] {
        for pos in 0..WINDOW_LEN {
            names.push(format!("{band}[{}]", lag_name(WINDOW_LEN - 1 - pos)));
        }
    }
    names.extend((0..WINDOW_LEN).map(|lag| format!("T[{}]", lag_name(lag))));
    names
}

fn raw_feature_names() -> Vec<String> {
    (0..WINDOW_LEN)
        .map(|lag| format!("P[{}]", lag_name(lag)))
        .chain((0..WINDOW_LEN).map(|lag| format!("T[{}]", lag_name(lag))))
        .collect()
}

fn lag_name(lag: usize) -> String {
    if lag == 0 {
        "t".to_string()
    } else {
        format!("t-{lag}")
    }
}

/// Indices `t` whose trailing window `t-7..=t` is gap-free and whose label is
/// known.
fn usable_rows<'a>(
    records: &'a [SampleRecord],
    labels: &'a [Option<RampLabel>],
    sampling_minutes: u32,
) -> Result<impl Iterator<Item = (usize, RampLabel)> + 'a, DataError> {
    if records.len() != labels.len() {
        return Err(DataError::LabelMismatch {
            records: records.len(),
            labels: labels.len(),
        });
    }
    if records.len() < WINDOW_LEN {
        return Err(DataError::SeriesTooShort {
            len: records.len(),
            needed: WINDOW_LEN,
        });
    }
    let span = Duration::minutes(i64::from(sampling_minutes) * (WINDOW_LEN as i64 - 1));
    Ok((WINDOW_LEN - 1..records.len()).filter_map(move |t| {
        let label = labels[t]?;
        (records[t].timestamp - records[t + 1 - WINDOW_LEN].timestamp == span).then_some((t, label))
    }))
}

fn assemble(
    rows: Vec<(Vec<f64>, RampLabel, NaiveDateTime)>,
    names: Vec<String>,
    available: usize,
) -> Result<Dataset, DataError> {
    if rows.is_empty() {
        return Err(DataError::SeriesTooShort {
            len: available,
            needed: WINDOW_LEN,
        });
    }
    let width = names.len();
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    let mut labels = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for (feats, label, ts) in rows {
        flat.extend(feats);
        labels.push(label);
        timestamps.push(ts);
    }
    let features = Array2::from_shape_vec((n, width), flat).expect("row widths are uniform");
    Dataset::new(features, labels, names, timestamps)
}

/// Builds the 40-column modeling dataset: the 32 band features of the power
/// window `t-7..=t` followed by `T(t), T(t-1), ..., T(t-7)`.
pub fn build_dataset(
    records: &[SampleRecord],
    labels: &[Option<RampLabel>],
    filter: &WaveletFilter,
    sampling_minutes: u32,
) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    for (t, label) in usable_rows(records, labels, sampling_minutes)? {
        let window = &records[t + 1 - WINDOW_LEN..=t];
        let power: Vec<f64> = window.iter().map(|r| r.power).collect();
        let mut feats = window_band_features(&power, filter)?;
        feats.extend(window.iter().rev().map(|r| r.temperature));
        rows.push((feats, label, records[t].timestamp));
    }
    assemble(rows, wavelet_feature_names(), records.len())
}

/// Undecomposed counterpart of [`build_dataset`]: `P(t), ..., P(t-7)` then
/// `T(t), ..., T(t-7)`.
pub fn build_raw_dataset(
    records: &[SampleRecord],
    labels: &[Option<RampLabel>],
    sampling_minutes: u32,
) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    for (t, label) in usable_rows(records, labels, sampling_minutes)? {
        let window = &records[t + 1 - WINDOW_LEN..=t];
        let feats = window
            .iter()
            .rev()
            .map(|r| r.power)
            .chain(window.iter().rev().map(|r| r.temperature))
            .collect();
        rows.push((feats, label, records[t].timestamp));
    }
    assemble(rows, raw_feature_names(), records.len())
}

/// Row counts for a train/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_rows: usize,
    /// Cap on test rows; `None` keeps the whole remainder.
    pub test_rows: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_rows: 1800,
            test_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTest {
    /// Calendar quarter (1..=4), when the split is per quarter.
    pub quarter: Option<u8>,
    pub train: Dataset,
    pub test: Dataset,
}

fn quarter_of(ts: &NaiveDateTime) -> u8 {
    ((ts.month0() / 3) + 1) as u8
}

fn partition(dataset: &Dataset, indices: &[usize], cfg: &SplitConfig, quarter: Option<u8>) -> TrainTest {
    let train = &indices[..cfg.train_rows];
    let rest = &indices[cfg.train_rows..];
    let test = match cfg.test_rows {
        Some(cap) => &rest[..cap.min(rest.len())],
        None => rest,
    };
    if test.is_empty() {
        match quarter {
            Some(q) => log::warn!(
                "quarter {q}: all {} rows used for training; test set is empty",
                train.len()
            ),
            None => log::warn!("all {} rows used for training; test set is empty", train.len()),
        }
    }
    TrainTest {
        quarter,
        train: dataset.select_rows(train),
        test: dataset.select_rows(test),
    }
}

/// Train/test partition of one calendar quarter: its first `train_rows` rows
/// train, the following rows test.
pub fn split_quarter(dataset: &Dataset, quarter: u8, cfg: &SplitConfig) -> Result<TrainTest, DataError> {
    if !(1..=4).contains(&quarter) {
        return Err(DataError::InvalidQuarter(quarter));
    }
    let indices: Vec<usize> = (0..dataset.len())
        .filter(|&i| quarter_of(&dataset.timestamps[i]) == quarter)
        .collect();
    if indices.len() < cfg.train_rows {
        return Err(DataError::QuarterTooSmall {
            quarter,
            rows: indices.len(),
            needed: cfg.train_rows,
        });
    }
    Ok(partition(dataset, &indices, cfg, Some(quarter)))
}

/// All four quarterly partitions; fails on the first quarter too small to
/// supply the training rows.
pub fn split_quarters(dataset: &Dataset, cfg: &SplitConfig) -> Result<Vec<TrainTest>, DataError> {
    (1..=4).map(|q| split_quarter(dataset, q, cfg)).collect()
}

/// First `train_rows` rows train, the rest test.
pub fn split_chronological(dataset: &Dataset, cfg: &SplitConfig) -> Result<TrainTest, DataError> {
    if dataset.len() < cfg.train_rows {
        return Err(DataError::InsufficientRows {
            rows: dataset.len(),
            needed: cfg.train_rows,
        });
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    Ok(partition(dataset, &indices, cfg, None))
}

/// Writes `f00..fNN,label` after a single `#` comment line.
pub fn write_dataset_csv<W: Write>(mut out: W, header_comment: &str, dataset: &Dataset) -> Result<(), DataError> {
    let io = |e| DataError::io("<dataset>", e);
    writeln!(out, "# {header_comment}").map_err(io)?;
    writeln!(out, "# columns: {}", dataset.feature_names.join(" ")).map_err(io)?;
    let header: Vec<String> = (0..dataset.width()).map(|j| format!("f{j:02}")).collect();
    writeln!(out, "{},label", header.join(",")).map_err(io)?;
    for (row, label) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", cells.join(","), label.value()).map_err(io)?;
    }
    Ok(())
}
