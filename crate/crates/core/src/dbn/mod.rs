//! Deep belief network: stacked Bernoulli RBMs pretrained with CD-1, then
//! fine-tuned end to end through a three-class softmax head.

mod io;
mod network;
mod rbm;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, NormalizationParams, RampLabel};

pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use network::{label_from_scores, Gradients, Network, ParamRef, N_CLASSES};
pub use rbm::{joint_prob_bruteforce, JointTable, RbmLayer, MAX_ENUMERATION_UNITS};

#[derive(Debug, Error)]
pub enum DbnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{units} units exceed the exhaustive enumeration limit of {limit}")]
    EnumerationTooLarge { units: usize, limit: usize },
    #[error("model file version {found} is not supported (this build reads version {supported})")]
    Version { found: u64, supported: u64 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How the momentum coefficient enters the CD weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentumMode {
    /// `Δw ← βΔw + η(⟨vh⟩_data − ⟨vh⟩_model)`, `w ← w + Δw`.
    #[default]
    Increment,
    /// `w ← βw + η(⟨vh⟩_data − ⟨vh⟩_model)`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// CD learning rate η.
    pub learning_rate: f64,
    /// Momentum β.
    pub momentum: f64,
    pub momentum_mode: MomentumMode,
    pub cd_steps: usize,
    pub pretrain_epochs: usize,
    /// Fine-tuning epochs K.
    pub finetune_max_iters: usize,
    pub finetune_learning_rate: f64,
    pub batch_size: usize,
    pub hidden_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.08,
            momentum: 0.9,
            momentum_mode: MomentumMode::Increment,
            cd_steps: 1,
            pretrain_epochs: 50,
            finetune_max_iters: 500,
            finetune_learning_rate: 0.05,
            batch_size: 32,
            hidden_layers: vec![70, 70],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DbnError> {
        let fail = |m: String| Err(DbnError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.cd_steps != 1 {
            return fail(format!("only CD-1 is supported, got cd_steps = {}", self.cd_steps));
        }
        if self.finetune_max_iters == 0 {
            return fail("finetune_max_iters must be at least 1".into());
        }
        if !(self.finetune_learning_rate > 0.0 && self.finetune_learning_rate.is_finite()) {
            return fail(format!(
                "finetune_learning_rate must be positive, got {}",
                self.finetune_learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return fail(format!(
                "hidden_layers must be non-empty and positive, got {:?}",
                self.hidden_layers
            ));
        }
        Ok(())
    }
}

/// A trained classifier with everything needed to score raw dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub network: Network,
    /// Scaling of the network inputs, fitted on the training rows.
    pub normalization: NormalizationParams,
    /// Names of the network inputs.
    pub feature_names: Vec<String>,
    /// Width of the dataset rows the model consumes.
    pub source_width: usize,
    /// Dataset columns fed to the network, in order.
    pub input_columns: Vec<usize>,
    pub seed: u64,
    pub config_hash: String,
}

/// Class probabilities in `[down, none, up]` order plus the decided label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub scores: [f64; 3],
    pub label: RampLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Reconstruction error per epoch, one curve per RBM.
    pub pretrain_errors: Vec<Vec<f64>>,
    /// Mean cross-entropy per fine-tuning epoch.
    pub loss_curve: Vec<f64>,
}

/// Fits normalization on `train`, pretrains and fine-tunes a fresh network on
/// the given columns. Fully determined by `(train, columns, config)`.
pub fn train_dbn(
    train: &Dataset,
    input_columns: &[usize],
    config: &TrainConfig,
) -> Result<(DbnModel, TrainReport), DbnError> {
    config.validate()?;
    if train.is_empty() {
        return Err(DbnError::EmptyTrainingSet);
    }
    if let Some(&bad) = input_columns.iter().find(|&&c| c >= train.width()) {
        return Err(DbnError::Shape {
            expected: train.width(),
            found: bad + 1,
        });
    }
    let subset = train.select_columns(input_columns);
    let normalization = subset.fit_normalization()?;
    let x = normalization.apply(subset.features.view())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::new(input_columns.len(), &config.hidden_layers, &mut rng);
    let pretrain_errors = network.pretrain(x.view(), config, &mut rng)?;
    let loss_curve = network.finetune(x.view(), &subset.labels, config, &mut rng)?;

    let model = DbnModel {
        network,
        normalization,
        feature_names: subset.feature_names,
        source_width: train.width(),
        input_columns: input_columns.to_vec(),
        seed: config.seed,
        config_hash: String::new(),
    };
    Ok((
        model,
        TrainReport {
            pretrain_errors,
            loss_curve,
        },
    ))
}

impl DbnModel {
    fn prepare(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>, DbnError> {
        if rows.ncols() != self.source_width {
            return Err(DbnError::Shape {
                expected: self.source_width,
                found: rows.ncols(),
            });
        }
        let selected = rows.select(Axis(1), &self.input_columns);
        Ok(self.normalization.apply(selected.view())?)
    }

    /// Scores one unnormalized dataset row.
    pub fn predict(&self, row: &[f64]) -> Result<Prediction, DbnError> {
        let view = ArrayView2::from_shape((1, row.len()), row).expect("single row");
        Ok(self.predict_batch(view)?[0])
    }

    pub fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<Prediction>, DbnError> {
        let x = self.prepare(rows)?;
        let scores = self.network.class_scores(x.view())?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|r| {
                let scores = [r[0], r[1], r[2]];
                Prediction {
                    scores,
                    label: label_from_scores(&scores),
                }
            })
            .collect())
    }

    /// Fraction of rows whose predicted label differs from the truth.
    pub fn error_rate(&self, data: &Dataset) -> Result<f64, DbnError> {
        if data.is_empty() {
            return Err(DbnError::EmptyTrainingSet);
        }
        let preds = self.predict_batch(data.features.view())?;
        let wrong = preds.iter().zip(&data.labels).filter(|(p, l)| p.label != **l).count();
        Ok(wrong as f64 / data.len() as f64)
    }
}
