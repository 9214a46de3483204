use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::data::{RampConfig, SplitConfig};
use crate::dbn::TrainConfig;
use crate::wavelet::WaveletFilter;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub enabled: bool,
    pub max_features: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosRanges {
    pub delays: Vec<usize>,
    pub dimensions: Vec<usize>,
}

impl Default for ChaosRanges {
    fn default() -> Self {
        Self {
            delays: vec![1, 2, 3],
            dimensions: vec![2, 3, 4],
        }
    }
}

/// Everything a command needs, loaded from a TOML file and overridden by
/// command-line flags. The training seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub wavelet: String,
    pub ramp: RampConfig,
    pub split: SplitConfig,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    pub chaos: ChaosRanges,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            wavelet: WaveletFilter::haar().name().to_string(),
            ramp: RampConfig::default(),
            split: SplitConfig::default(),
            selection: SelectionConfig::default(),
            train: TrainConfig::default(),
            chaos: ChaosRanges::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn filter(&self) -> Result<WaveletFilter, CliError> {
        self.wavelet.parse().map_err(|e| CliError::Input(format!("{e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.filter()?;
        self.ramp.validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Input(e.to_string()))?;
        if self.split.train_rows == 0 {
            return Err(CliError::Input("split.train_rows must be positive".into()));
        }
        if self.chaos.delays.is_empty() || self.chaos.dimensions.is_empty() {
            return Err(CliError::Input("chaos ranges must be non-empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded. Paths are excluded
    /// so that moving files around does not change the hash.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            paths: PathsConfig::default(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The comment line stamped on every artifact.
    pub fn provenance(&self) -> String {
        format!("seed={} config_hash={}", self.seed(), self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_constants() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.learning_rate, 0.08);
        assert_eq!(cfg.train.finetune_max_iters, 500);
        assert_eq!(cfg.train.hidden_layers, vec![70, 70]);
        assert_eq!(cfg.ramp.delta_t_minutes, 30);
        assert_eq!(cfg.ramp.threshold_h, 16.0);
        assert_eq!(cfg.split.train_rows, 1800);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn parse_partial_file() {
        let cfg = RunConfig::parse(
            "wavelet = \"db4\"\n[train]\nseed = 42\nhidden_layers = [10, 5]\n[ramp]\nthreshold_h = 20.0\n",
        )
        .unwrap();
        assert_eq!(cfg.filter().unwrap(), WaveletFilter::db4());
        assert_eq!(cfg.seed(), 42);
        assert_eq!(cfg.train.hidden_layers, vec![10, 5]);
        assert_eq!(cfg.ramp.threshold_h, 20.0);
        assert_eq!(cfg.train.learning_rate, 0.08);
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[train]\nlearnin_rate = 0.1\n").is_err());
        assert!(RunConfig::parse("wavelet = \"sym8\"\n").unwrap().validate().is_err());
    }

    #[test]
    fn hash_tracks_settings_not_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.input = Some("elsewhere.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert!(a.provenance().starts_with("seed=0 config_hash="));
    }
}
