//! Power/temperature series ingestion, ramp labeling, normalization and
//! dataset assembly.

mod dataset;
mod normalize;
mod ramp;
mod series;
mod synth;

use std::path::PathBuf;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use dataset::{
    build_dataset, build_raw_dataset, split_chronological, split_quarter, split_quarters, wavelet_feature_names,
    write_dataset_csv, Dataset, SplitConfig, TrainTest,
};
pub use normalize::{minmax_fit, NormalizationParams};
pub use ramp::{label_ramps, RampConfig, RampLabel};
pub use series::{
    clean_series, load_series, read_series, write_labeled_series, write_series, CleanReport, SampleRecord,
};
pub use synth::{synth_series, InjectedRamp, SynthSeries};

/// Timestamp layout of the input CSV.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("input file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected 'timestamp,power_w,temp_c', found '{0}'")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {found} precedes {previous}")]
    NonMonotone {
        line: u64,
        previous: NaiveDateTime,
        found: NaiveDateTime,
    },
    #[error("invalid ramp configuration: {0}")]
    InvalidConfig(String),
    #[error("series of {len} records is too short; at least {needed} required")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("column {column} ({name}) is constant; min-max scaling is undefined")]
    ConstantColumn { column: usize, name: String },
    #[error("expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{labels} labels supplied for {records} records")]
    LabelMismatch { records: usize, labels: usize },
    #[error("quarter {quarter} has {rows} rows; {needed} are needed for training")]
    QuarterTooSmall { quarter: u8, rows: usize, needed: usize },
    #[error("dataset has {rows} rows; {needed} are needed for training")]
    InsufficientRows { rows: usize, needed: usize },
    #[error("quarter must be in 1..=4, got {0}")]
    InvalidQuarter(u8),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Wavelet(#[from] crate::wavelet::WaveletError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
