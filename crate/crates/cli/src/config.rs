//! Effective run configuration: built-in defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use hexembed::aggregate::ShareMode;
use hexembed::autoencoder::{LossKind, SplitMode, TrainConfig};
use hexembed::analysis::tsne::TsneConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub resolution: u8,
    /// Custom feature schema; the built-in 88-column layout when absent.
    pub schema: Option<PathBuf>,
    /// Allowed `highway` values; the schema's highway bins when absent.
    pub driveable: Option<Vec<String>>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub k: usize,
    /// Merges written to the short dendrogram file.
    pub top_merges: usize,
    pub share_mode: ShareMode,
    pub perplexity: f64,
    pub tsne: TsneSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub latent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub test_ratio: f64,
    pub loss: LossKind,
    pub split: SplitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneSection {
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Restrict t-SNE to the regions of one city.
    pub city: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            resolution: 9,
            schema: None,
            driveable: None,
            model: ModelSection::default(),
            train: TrainSection::default(),
            k: 8,
            top_merges: 100,
            share_mode: ShareMode::Membership,
            perplexity: 100.0,
            tsne: TsneSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: 64, latent: 30 }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            test_ratio: t.test_ratio,
            loss: t.loss,
            split: t.split,
        }
    }
}

impl Default for TsneSection {
    fn default() -> Self {
        let t = TsneConfig::default();
        Self {
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            early_exaggeration: t.early_exaggeration,
            exaggeration_iterations: t.exaggeration_iterations,
            city: None,
        }
    }
}

/// Global flags that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution: Option<u8>,
    pub schema: Option<PathBuf>,
    pub k: Option<usize>,
    pub perplexity: Option<f64>,
}

impl Config {
    pub fn load(file: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => Config::default(),
        };
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = flags.resolution {
            cfg.resolution = v;
        }
        if let Some(v) = &flags.schema {
            cfg.schema = Some(v.clone());
        }
        if let Some(v) = flags.k {
            cfg.k = v;
        }
        if let Some(v) = flags.perplexity {
            cfg.perplexity = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.resolution > 15 {
            return bad(format!("resolution {} is outside 0..=15", self.resolution));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.perplexity.is_nan() || self.perplexity <= 0.0 {
            return bad(format!("perplexity must be positive, got {}", self.perplexity));
        }
        if self.model.hidden == 0 || self.model.latent == 0 {
            return bad("model sizes must be positive".into());
        }
        self.train_config().validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            test_ratio: self.train.test_ratio,
            seed: self.seed,
            loss: self.train.loss,
            split: self.train.split,
            ..TrainConfig::default()
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.tsne.iterations,
            learning_rate: self.tsne.learning_rate,
            early_exaggeration: self.tsne.early_exaggeration,
            exaggeration_iterations: self.tsne.exaggeration_iterations,
            momentum_switch: self.tsne.exaggeration_iterations,
            seed: self.seed,
            ..TsneConfig::default()
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"k": 5, "seed": 7, "train": {"epochs": 3}}"#).unwrap();
        let flags = Overrides {
            k: Some(3),
            ..Overrides::default()
        };
        let cfg = Config::load(Some(&path), &flags).unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.train.epochs), (3, 7, 3));
        assert_eq!(cfg.train.batch_size, 200);
        assert_eq!(cfg.resolution, 9);
    }

    #[test]
    fn unknown_fields_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"clusters": 5}"#).unwrap();
        assert!(matches!(Config::load(Some(&path), &Overrides::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn out_of_range_flags_are_rejected() {
        let flags = Overrides {
            resolution: Some(16),
            ..Overrides::default()
        };
        assert!(matches!(Config::load(None, &flags), Err(CliError::Usage(_))));
    }
}
