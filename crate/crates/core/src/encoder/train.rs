//! Episodic training with early stopping on a validation metric.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, EncoderModel};
use crate::baselines::{self, DEFAULT_TRIPLET_MARGIN};
use crate::error::{Error, Result};
use crate::floss::{self, FLossConfig, LabeledEmbeddingBatch};
use crate::metrics::{self, ExplicitnessConfig};
use crate::sampling::{
    self, ClassPool, Episode, FactorEpisodeSampler, OracleKind, DEFAULT_MAX_LABELS,
    DEFAULT_MAX_PER_LABEL, DEFAULT_MAX_PER_VALUE_FSTAT, DEFAULT_MAX_PER_VALUE_TRIPLET,
    DEFAULT_MAX_VALUES,
};
use crate::synthdata::FactorialDataset;
use crate::Label;

pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const FSTAT_LEARNING_RATE: f64 = 2e-4;
pub const TRIPLET_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossKind {
    Fstat { d: usize },
    Triplet { margin: f64 },
}

impl LossKind {
    pub fn triplet() -> Self {
        LossKind::Triplet { margin: DEFAULT_TRIPLET_MARGIN }
    }

    pub fn default_learning_rate(&self) -> f64 {
        match self {
            LossKind::Fstat { .. } => FSTAT_LEARNING_RATE,
            LossKind::Triplet { .. } => TRIPLET_LEARNING_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMetric {
    /// Leave-one-out recall@1 on the validation instances, labelled by class.
    #[serde(rename = "recall@1")]
    RecallAt1,
    /// Mean one-vs-rest AUC over every value of every supervised factor.
    MeanExplicitness,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub validation: ValidationMetric,
}

impl TrainConfig {
    pub fn new(loss: LossKind, validation: ValidationMetric, seed: u64) -> Self {
        Self {
            loss,
            learning_rate: loss.default_learning_rate(),
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed,
            validation,
        }
    }

    pub fn validate(&self, embedding_dim: usize) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        match self.loss {
            LossKind::Fstat { d } => FLossConfig::new(d).validate(embedding_dim),
            LossKind::Triplet { margin } if !(margin >= 0.0 && margin.is_finite()) => {
                Err(Error::Config(format!("triplet margin must be non-negative, got {margin}")))
            }
            LossKind::Triplet { .. } => Ok(()),
        }
    }
}

/// How episodes are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub oracle: OracleKind,
    /// Labels (classes or factor values) per episode.
    pub max_labels: usize,
    /// Instances per label.
    pub max_per_label: usize,
    /// Factors the oracle uses: cycled by the factor oracle, conjoined into
    /// classes by the class oracle. Defaults to the class-relevant factors.
    #[serde(default)]
    pub factors: Option<Vec<usize>>,
}

impl SamplerConfig {
    pub fn new(oracle: OracleKind, loss: &LossKind) -> Self {
        let (max_labels, max_per_label) = match (oracle, loss) {
            (OracleKind::Factor, LossKind::Fstat { .. }) => (DEFAULT_MAX_VALUES, DEFAULT_MAX_PER_VALUE_FSTAT),
            (OracleKind::Factor, LossKind::Triplet { .. }) => (DEFAULT_MAX_VALUES, DEFAULT_MAX_PER_VALUE_TRIPLET),
            _ => (DEFAULT_MAX_LABELS, DEFAULT_MAX_PER_LABEL),
        };
        Self { oracle, max_labels, max_per_label, factors: None }
    }

    /// Factors supervised by this sampler.
    pub fn factor_indices(&self, dataset: &FactorialDataset) -> Result<Vec<usize>> {
        let factors = match (&self.factors, self.oracle) {
            (Some(f), OracleKind::Class | OracleKind::Factor) => f.clone(),
            _ => dataset.spec.class_factor_indices(),
        };
        if factors.is_empty() {
            return Err(Error::Config("the oracle has no factors to supervise".into()));
        }
        if let Some(f) = factors.iter().find(|&&f| f >= dataset.factor_count()) {
            return Err(Error::Config(format!("factor index {f} out of range")));
        }
        Ok(factors)
    }

    /// Per-instance class labels: the conjunction of the supervised factors.
    pub fn class_labels(&self, dataset: &FactorialDataset) -> Result<Vec<Label>> {
        let factors = self.factor_indices(dataset)?;
        if self.oracle == OracleKind::Conjunction {
            return Ok(sampling::conjunction_labels(dataset));
        }
        Ok(dataset
            .factor_values
            .iter()
            .map(|values| {
                let code = factors.iter().fold(0u64, |acc, &f| {
                    acc * dataset.spec.factors[f].value_count as u64 + values[f] as u64
                });
                Label(code as u32)
            })
            .collect())
    }
}

/// Instance indices for each role, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits every factor combination separately so each split sees every
/// combination in proportion.
pub fn split_dataset(
    dataset: &FactorialDataset,
    validation_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let valid = |f: f64| (0.0..1.0).contains(&f);
    if !valid(validation_fraction) || !valid(test_fraction) || validation_fraction + test_fraction >= 1.0 {
        return Err(Error::Config(format!(
            "split fractions ({validation_fraction}, {test_fraction}) must be in [0, 1) and sum below 1"
        )));
    }
    let mut groups: std::collections::BTreeMap<&[usize], Vec<usize>> = Default::default();
    for (i, v) in dataset.factor_values.iter().enumerate() {
        groups.entry(v.as_slice()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_val = (n * validation_fraction).round() as usize;
        let n_test = ((n * test_fraction).round() as usize).min(members.len() - n_val);
        split.validation.extend_from_slice(&members[..n_val]);
        split.test.extend_from_slice(&members[n_val..n_val + n_test]);
        split.train.extend_from_slice(&members[n_val + n_test..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean episode loss.
    pub train_loss: f64,
    pub val_metric: f64,
    /// Smallest selected `Φ` over the epoch's episodes (F-statistic loss).
    pub min_selected_phi: Option<f64>,
    /// Largest `|dL/dz|` over the epoch's episodes.
    pub embedding_grad_max: f64,
    /// Largest `|dL/dθ|` over the epoch's episodes.
    pub param_grad_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: EncoderModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were returned; 0 means the initial model.
    /// Among equal validation scores the latest epoch wins.
    pub best_epoch: usize,
    /// Validation metric of the returned model.
    pub best_metric: f64,
    /// Set when no epoch scored strictly above the initial model.
    pub no_improvement: bool,
}

enum EpisodeSource {
    Class { pool: ClassPool, max_labels: usize, max_per_label: usize },
    Factor(FactorEpisodeSampler),
}

impl EpisodeSource {
    fn episodes_per_epoch(&self) -> usize {
        match self {
            EpisodeSource::Class { pool, max_labels, max_per_label } => {
                pool.episodes_per_epoch(*max_labels, *max_per_label)
            }
            EpisodeSource::Factor(s) => s.episodes_per_epoch(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Result<Episode> {
        match self {
            EpisodeSource::Class { pool, max_labels, max_per_label } => {
                sampling::sample_class_episode(pool, *max_labels, *max_per_label, rng)
            }
            EpisodeSource::Factor(s) => s.sample(rng),
        }
    }
}

/// Embeds the given instances.
pub(crate) fn embed_indices(
    model: &EncoderModel,
    dataset: &FactorialDataset,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let obs: Vec<Vec<f64>> = indices.iter().map(|&i| dataset.observations[i].clone()).collect();
    model.forward(&obs)
}

struct Validator<'a> {
    dataset: &'a FactorialDataset,
    indices: &'a [usize],
    metric: ValidationMetric,
    labels: Vec<Label>,
    factors: Vec<usize>,
}

impl Validator<'_> {
    fn score(&self, model: &EncoderModel) -> Result<f64> {
        let codes = embed_indices(model, self.dataset, self.indices)?;
        match self.metric {
            ValidationMetric::RecallAt1 => {
                let labels: Vec<Label> = self.indices.iter().map(|&i| self.labels[i]).collect();
                metrics::recall_at_k_leave_one_out(&codes, &labels, 1)
            }
            ValidationMetric::MeanExplicitness => {
                let cfg = ExplicitnessConfig::default();
                let mut aucs = Vec::new();
                for &f in &self.factors {
                    let values: Vec<usize> = self.indices.iter().map(|&i| self.dataset.factor_values[i][f]).collect();
                    aucs.extend(metrics::explicitness_auc(&codes, &values, &cfg)?.per_value.into_iter().map(|v| v.auc));
                }
                if aucs.is_empty() {
                    return Err(Error::InsufficientData("no factor value to score on the validation split".into()));
                }
                Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
            }
        }
    }
}

fn grad_max(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Trains `model` on episodes drawn from `split.train` and keeps the
/// parameters with the best validation metric. Stops after `patience`
/// epochs scoring below the best so far, or after `max_epochs`.
pub fn train(
    mut model: EncoderModel,
    dataset: &FactorialDataset,
    split: &DatasetSplit,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate(model.output_dim())?;
    if model.input_dim() != dataset.observation_dim() {
        return Err(Error::Shape(format!(
            "encoder takes {} inputs, observations have {}",
            model.input_dim(),
            dataset.observation_dim()
        )));
    }
    if split.validation.len() < 2 {
        return Err(Error::InsufficientData("validation split needs at least two instances".into()));
    }
    let factors = sampler.factor_indices(dataset)?;
    let labels = sampler.class_labels(dataset)?;
    let mut source = match sampler.oracle {
        OracleKind::Class | OracleKind::Conjunction => EpisodeSource::Class {
            pool: ClassPool::new(sampler.oracle, &labels, &split.train)?,
            max_labels: sampler.max_labels,
            max_per_label: sampler.max_per_label,
        },
        OracleKind::Factor => EpisodeSource::Factor(FactorEpisodeSampler::new(
            dataset,
            &split.train,
            &factors,
            sampler.max_labels,
            sampler.max_per_label,
        )?),
    };
    let validator = Validator { dataset, indices: &split.validation, metric: cfg.validation, labels, factors };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(&model, AdamConfig::with_learning_rate(cfg.learning_rate))?;
    let episodes = source.episodes_per_epoch();
    let dim = model.output_dim();

    let mut best = model.clone();
    let mut best_metric = validator.score(&model)?;
    let mut best_epoch = 0;
    let mut since_improvement = 0;
    let mut improved = false;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut min_phi: Option<f64> = None;
        let mut emb_max: f64 = 0.0;
        let mut par_max: f64 = 0.0;
        for _ in 0..episodes {
            let episode = source.next(&mut rng)?;
            let obs: Vec<Vec<f64>> = episode.indices.iter().map(|&i| dataset.observations[i].clone()).collect();
            let cache = model.forward_cached(&obs)?;
            let batch = LabeledEmbeddingBatch::from_flat(dim, cache.output().to_vec(), episode.labels)
                .map_err(|e| Error::Divergence(format!("epoch {epoch}: {e}")))?;
            let (loss, grad) = match cfg.loss {
                LossKind::Fstat { d } => {
                    let eval = floss::f_loss_with_grad(&batch, &FLossConfig::new(d))?;
                    min_phi = Some(min_phi.map_or(eval.min_selected_phi, |m| m.min(eval.min_selected_phi)));
                    (eval.loss, eval.grad)
                }
                LossKind::Triplet { margin } => baselines::triplet_loss_with_grad(&batch, margin)?,
            };
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch}: loss is {loss}")));
            }
            let grads = model.backward_cached(&cache, &grad)?;
            loss_sum += loss;
            emb_max = emb_max.max(grad_max(&grad));
            par_max = par_max.max(grads.max_abs());
            adam_step(&mut model, &grads, &mut adam)?;
        }
        let val_metric = validator.score(&model)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / episodes as f64,
            val_metric,
            min_selected_phi: min_phi,
            embedding_grad_max: emb_max,
            param_grad_max: par_max,
        });
        // Ties go to the later epoch, so a saturated metric keeps training.
        if val_metric >= best_metric {
            improved |= val_metric > best_metric;
            best_metric = val_metric;
            best = model.clone();
            best_epoch = epoch;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best, log, best_epoch, best_metric, no_improvement: !improved })
}
