use std::fs;
use std::path::{Path, PathBuf};

use fsembed::encoder::{LossKind, SamplerConfig, TrainConfig, ValidationMetric, DEFAULT_HIDDEN};
use fsembed::sampling::OracleKind;
use fsembed::synthdata::FactorSpec;
use serde::Deserialize;

use crate::CliError;

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    /// A dataset CSV written by `gen-data`, relative to the config file.
    Path(PathBuf),
    /// Generated from the spec with the experiment seed.
    Spec(FactorSpec),
    /// A named built-in spec: `desk-scale` or `sprites-like`.
    Preset(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_oracle")]
    pub oracle: OracleKind,
    /// Defaults to recall@1, or mean explicitness under the factor oracle.
    #[serde(default)]
    pub validation_metric: Option<ValidationMetric>,
    #[serde(default)]
    pub max_labels: Option<usize>,
    #[serde(default)]
    pub max_per_label: Option<usize>,
    #[serde(default)]
    pub factors: Option<Vec<usize>>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
}

fn default_loss() -> LossKind {
    LossKind::Fstat { d: 2 }
}

fn default_oracle() -> OracleKind {
    OracleKind::Conjunction
}

fn default_hidden() -> Vec<usize> {
    vec![DEFAULT_HIDDEN]
}

fn default_embedding_dim() -> usize {
    16
}

fn default_fraction() -> f64 {
    0.2
}

impl ExperimentConfig {
    /// Parses the file and resolves a dataset path against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if let DatasetSource::Path(p) = &mut cfg.dataset {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new("")).join(&*p);
            }
            if !p.exists() {
                return Err(CliError::Usage(format!("dataset {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<Option<FactorSpec>, CliError> {
        let spec = match &self.dataset {
            DatasetSource::Path(_) => return Ok(None),
            DatasetSource::Spec(s) => s.clone(),
            DatasetSource::Preset(name) => match name.as_str() {
                "desk-scale" => FactorSpec::desk_scale(),
                "sprites-like" => FactorSpec::sprites_like(),
                _ => return Err(CliError::Usage(format!("unknown dataset preset {name:?}"))),
            },
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Some(spec))
    }

    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.embedding_dim);
        sizes
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let validation = self.validation_metric.unwrap_or(match self.oracle {
            OracleKind::Factor => ValidationMetric::MeanExplicitness,
            _ => ValidationMetric::RecallAt1,
        });
        let mut cfg = TrainConfig::new(self.loss, validation, self.seed);
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(CliError::Usage(format!("learning_rate must be positive, got {lr}")));
            }
            cfg.learning_rate = lr;
        }
        cfg.max_epochs = self.max_epochs.unwrap_or(cfg.max_epochs);
        cfg.patience = self.patience.unwrap_or(cfg.patience);
        cfg.validate(self.embedding_dim).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let mut s = SamplerConfig::new(self.oracle, &self.loss);
        s.max_labels = self.max_labels.unwrap_or(s.max_labels);
        s.max_per_label = self.max_per_label.unwrap_or(s.max_per_label);
        s.factors = self.factors.clone();
        s
    }
}
