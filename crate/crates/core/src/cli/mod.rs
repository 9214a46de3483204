//! Command-line front end.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::chaos::ChaosError;
use crate::data::DataError;
use crate::dbn::DbnError;
use crate::eval::EvalError;
use crate::features::FeatureError;

pub use commands::run;
pub use config::{ChaosRanges, PathsConfig, RunConfig, SelectionConfig};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SHAPE: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "rampcast", version, about = "Wind-power ramp-event forecasting")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["haar", "db4"])]
    pub wavelet: Option<String>,
    /// Use all 40 dataset columns instead of greedy selection.
    #[arg(long, global = true)]
    pub no_feature_selection: bool,
    /// Train and test within one calendar quarter.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub quarter: Option<u8>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label ramp events and write the labeled series.
    Label { input: Option<PathBuf> },
    /// Largest Lyapunov exponent over a grid of delays and dimensions.
    Chaos {
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<usize>>,
        #[arg(long = "dims", value_delimiter = ',')]
        dimensions: Option<Vec<usize>>,
    },
    /// Run greedy feature selection on the training rows.
    Select { input: Option<PathBuf> },
    /// Build features, optionally select, train and save a model.
    Train { input: Option<PathBuf> },
    /// Score a saved model on the test rows.
    Evaluate {
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Write a synthetic series with injected ramps.
    Synth {
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long, default_value_t = 0.1)]
        ramp_rate: f64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Shape(_) => EXIT_SHAPE,
            CliError::Training(_) => EXIT_TRAINING,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let msg = e.to_string();
        match e {
            DataError::MissingFile(_)
            | DataError::Io { .. }
            | DataError::BadHeader(_)
            | DataError::Parse { .. }
            | DataError::NonMonotone { .. }
            | DataError::InvalidConfig(_)
            | DataError::InvalidQuarter(_)
            | DataError::Csv(_) => CliError::Input(msg),
            DataError::SeriesTooShort { .. }
            | DataError::ConstantColumn { .. }
            | DataError::DimensionMismatch { .. }
            | DataError::LabelMismatch { .. }
            | DataError::QuarterTooSmall { .. }
            | DataError::InsufficientRows { .. }
            | DataError::Wavelet(_) => CliError::Shape(msg),
        }
    }
}

impl From<DbnError> for CliError {
    fn from(e: DbnError) -> Self {
        let msg = e.to_string();
        match e {
            DbnError::Data(d) => d.into(),
            DbnError::Version { .. } | DbnError::Corrupt(_) | DbnError::Io { .. } | DbnError::InvalidConfig(_) => {
                CliError::Input(msg)
            }
            DbnError::Shape { .. } | DbnError::EnumerationTooLarge { .. } => CliError::Shape(msg),
            DbnError::NonFinite(_) | DbnError::NonFiniteLoss { .. } | DbnError::EmptyTrainingSet => {
                CliError::Training(msg)
            }
        }
    }
}

impl From<ChaosError> for CliError {
    fn from(e: ChaosError) -> Self {
        match e {
            ChaosError::InvalidConfig(_) | ChaosError::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Evaluator { subset, source } => match source.downcast::<DbnError>() {
                Ok(dbn) => match CliError::from(*dbn) {
                    CliError::Training(m) => CliError::Training(format!("selection subset {subset:?}: {m}")),
                    other => other,
                },
                Err(other) => CliError::Training(format!("selection subset {subset:?}: {other}")),
            },
            FeatureError::Io(_) => CliError::Input(e.to_string()),
            FeatureError::InvalidError { .. } => CliError::Training(e.to_string()),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::parse_from([
            "rampcast",
            "train",
            "data.csv",
            "--seed",
            "7",
            "--quarter",
            "3",
            "--wavelet",
            "db4",
        ]);
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.quarter, Some(3));
        assert!(matches!(cli.command, Command::Train { input: Some(_) }));
        assert!(Cli::try_parse_from(["rampcast", "train", "--quarter", "5"]).is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CliError::from(DataError::MissingFile("x.csv".into())).exit_code(), 2);
        let short = DataError::QuarterTooSmall {
            quarter: 2,
            rows: 10,
            needed: 1800,
        };
        assert_eq!(CliError::from(short).exit_code(), 3);
        assert_eq!(CliError::from(DbnError::NonFiniteLoss { epoch: 3 }).exit_code(), 4);
        assert_eq!(CliError::from(DbnError::Corrupt("x".into())).exit_code(), 2);
    }
}
