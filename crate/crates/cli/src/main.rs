//! `fsembed`: generate data, train encoders, embed and evaluate.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 training
//! failure, 4 incompatible model and data.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsembed::encoder::{split_dataset, train, DatasetSplit, EncoderModel};
use fsembed::io::{self, Dataset};
use fsembed::metrics::{evaluate_disentanglement, recall_at_k, recall_at_k_leave_one_out, EvalConfig, FactorColumn};
use fsembed::synthdata::{generate_factorial, generate_golden_code, FactorialDataset, GoldenPattern};
use fsembed::Label;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("training failed: {0}")]
    Training(fsembed::Error),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Core(#[from] fsembed::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Training(_) => 3,
            CliError::Incompatible(_) | CliError::Core(fsembed::Error::Shape(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "fsembed", version, about = "F-statistic embeddings and disentanglement metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a factorial dataset from a config, or a golden code.
    GenData {
        #[arg(long, conflicts_with = "golden")]
        config: Option<PathBuf>,
        /// Golden code pattern, a to p.
        #[arg(long)]
        golden: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra isotropic noise on golden codes.
        #[arg(long, default_value_t = 0.0, requires = "golden")]
        jitter: f64,
        /// Points per golden-code cluster.
        #[arg(long, default_value_t = 50, requires = "golden")]
        per_cluster: usize,
        /// Dataset CSV; the JSON header is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder; writes model.json, training_log.csv and split.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every row of a dataset with a trained model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall@k and disentanglement report for a dataset's codes.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with_all = ["codes_direct", "codes"])]
        model: Option<PathBuf>,
        /// Treat the dataset's values as codes (golden codes).
        #[arg(long, conflicts_with = "codes")]
        codes_direct: bool,
        /// Codes CSV from `embed`, one row per dataset row.
        #[arg(long)]
        codes: Option<PathBuf>,
        /// Split from `train`: evaluate test rows, retrieve from train rows.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Optional `(dimension, factor, mi)` CSV.
        #[arg(long)]
        mi_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, golden, seed, jitter, per_cluster, out } => {
            gen_data(config.as_deref(), golden.as_deref(), seed, jitter, per_cluster, &out)
        }
        Command::Train { config, seed, out } => cmd_train(&config, seed, &out),
        Command::Embed { model, data, out } => embed(&model, &data, &out),
        Command::Eval { data, model, codes_direct, codes, split, k, out, mi_out } => {
            let source = match (model, codes, codes_direct) {
                (Some(m), None, false) => Ok(CodeSource::Model(m)),
                (None, Some(c), false) => Ok(CodeSource::File(c)),
                (None, None, true) => Ok(CodeSource::Direct),
                _ => Err(CliError::Usage("give one of --model, --codes or --codes-direct".into())),
            };
            source.and_then(|s| eval(&data, &s, split.as_deref(), k, &out, mi_out.as_deref()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn gen_data(
    config: Option<&Path>,
    golden: Option<&str>,
    seed: Option<u64>,
    jitter: f64,
    per_cluster: usize,
    out: &Path,
) -> Result<(), CliError> {
    io::header_path(out).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(letter) = golden {
        let pattern = GoldenPattern::from_letter(letter).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let code = generate_golden_code(pattern, per_cluster, jitter, &mut rng)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        io::write_golden(out, &code)?;
        println!(
            "wrote golden code {} ({} points, {} factors) to {}",
            pattern.letter(),
            code.points.len(),
            pattern.factor_count(),
            out.display()
        );
        return Ok(());
    }
    let Some(config) = config else {
        return Err(CliError::Usage("gen-data needs --config or --golden".into()));
    };
    let cfg = ExperimentConfig::load(config)?;
    let Some(spec) = cfg.spec()? else {
        return Err(CliError::Usage("gen-data needs a dataset spec or preset, not a path".into()));
    };
    let data = generate_factorial(&spec, &mut ChaCha8Rng::seed_from_u64(seed.unwrap_or(cfg.seed)))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    io::write_factorial(out, &data)?;
    let factors: Vec<String> = spec.factors.iter().map(|f| format!("{}={}", f.name, f.value_count)).collect();
    println!(
        "wrote {} instances ({} factors: {}; {} dims) to {}",
        data.len(),
        spec.factors.len(),
        factors.join(", "),
        spec.observation_dim,
        out.display()
    );
    Ok(())
}

fn load_factorial(cfg: &ExperimentConfig, seed: u64) -> Result<FactorialDataset, CliError> {
    if let Some(spec) = cfg.spec()? {
        return generate_factorial(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(|e| CliError::Usage(e.to_string()));
    }
    let config::DatasetSource::Path(path) = &cfg.dataset else { unreachable!() };
    match io::read_dataset(path)? {
        Dataset::Factorial(d) => Ok(d),
        Dataset::Golden(_) => Err(CliError::Usage(format!("{} is a golden code, not trainable data", path.display()))),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    best_metric: f64,
    no_improvement: bool,
}

fn cmd_train(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let train_cfg = cfg.train_config()?;
    let sampler = cfg.sampler_config();
    let data = load_factorial(&cfg, cfg.seed)?;
    let split = split_dataset(&data, cfg.validation_fraction, cfg.test_fraction, cfg.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let model = EncoderModel::initialize(&cfg.layer_sizes(data.observation_dim()), cfg.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let outcome = train(model, &data, &split, &sampler, &train_cfg).map_err(CliError::Training)?;

    fs::create_dir_all(out).map_err(fsembed::Error::from)?;
    if !matches!(cfg.dataset, config::DatasetSource::Path(_)) {
        io::write_factorial(&out.join("data.csv"), &data)?;
    }
    fs::write(out.join("model.json"), outcome.model.to_json()?).map_err(fsembed::Error::from)?;
    io::write_training_log(&out.join("training_log.csv"), &outcome.log)?;
    io::write_json(&out.join("split.json"), &split)?;
    let summary = TrainSummary {
        seed: cfg.seed,
        epochs: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_metric: outcome.best_metric,
        no_improvement: outcome.no_improvement,
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    if outcome.no_improvement {
        eprintln!("warning: validation never rose above the initial model's {:.4}", outcome.best_metric);
    }
    println!(
        "trained {} epochs; best epoch {} with validation {} {:.4}; wrote {}",
        summary.epochs,
        summary.best_epoch,
        serde_json::to_value(train_cfg.validation).map_err(fsembed::Error::from)?,
        summary.best_metric,
        out.display()
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<EncoderModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    EncoderModel::from_json(&text).map_err(|e| CliError::Usage(format!("invalid model {}: {e}", path.display())))
}

fn apply_model(model: &EncoderModel, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CliError> {
    let width = values.first().map_or(0, Vec::len);
    if width != model.input_dim() {
        return Err(CliError::Incompatible(format!(
            "model takes {} inputs, data rows have {width}",
            model.input_dim()
        )));
    }
    Ok(model.forward(values)?)
}

fn read_data(path: &Path) -> Result<Dataset, CliError> {
    io::read_dataset(path).map_err(|e| CliError::Usage(format!("cannot read dataset {}: {e}", path.display())))
}

fn embed(model: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let model = read_model(model)?;
    let data = read_data(data)?;
    let codes = apply_model(&model, &data.values())?;
    io::write_codes(out, &codes)?;
    println!("wrote {} codes of dimension {} to {}", codes.len(), model.output_dim(), out.display());
    Ok(())
}

enum CodeSource {
    Model(PathBuf),
    File(PathBuf),
    Direct,
}

#[derive(Serialize)]
struct RecallAtK {
    k: usize,
    value: f64,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: fsembed::metrics::DisentanglementReport,
    recall_at_k: RecallAtK,
}

/// One label per distinct combination of the evaluated factors.
fn conjunction_of(factors: &[FactorColumn], rows: usize) -> Vec<Label> {
    let mut ids: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
    (0..rows)
        .map(|i| {
            let key: Vec<usize> = factors.iter().map(|f| f.values[i]).collect();
            let next = ids.len() as u32;
            Label(*ids.entry(key).or_insert(next))
        })
        .collect()
}

fn eval(
    data_path: &Path,
    source: &CodeSource,
    split: Option<&Path>,
    k: usize,
    out: &Path,
    mi_out: Option<&Path>,
) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let data = read_data(data_path)?;
    let codes = match source {
        CodeSource::Model(m) => apply_model(&read_model(m)?, &data.values())?,
        CodeSource::File(c) => {
            let codes = io::read_codes(c).map_err(|e| CliError::Usage(format!("cannot read codes: {e}")))?;
            if codes.len() != data.len() {
                return Err(CliError::Incompatible(format!(
                    "{} codes for {} dataset rows",
                    codes.len(),
                    data.len()
                )));
            }
            codes
        }
        CodeSource::Direct => {
            if matches!(data, Dataset::Factorial(_)) {
                eprintln!("warning: evaluating raw observations as codes");
            }
            data.values()
        }
    };
    let factors = data.eval_factors();
    let labels = conjunction_of(&factors, data.len());

    let split: Option<DatasetSplit> = match split {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read split {}: {e}", p.display())))?;
            let s: DatasetSplit = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid split {}: {e}", p.display())))?;
            let all = s.train.iter().chain(&s.validation).chain(&s.test);
            if let Some(i) = all.into_iter().find(|&&i| i >= data.len()) {
                return Err(CliError::Incompatible(format!("split index {i} beyond {} rows", data.len())));
            }
            Some(s)
        }
        None => None,
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| codes[i].clone()).collect::<Vec<_>>();
    let pick_labels = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let recall = |k: usize| -> Result<f64, CliError> {
        Ok(match &split {
            Some(s) => recall_at_k(&pick(&s.train), &pick_labels(&s.train), &pick(&s.test), &pick_labels(&s.test), k)?,
            None => recall_at_k_leave_one_out(&codes, &labels, k)?,
        })
    };
    let recall_1 = recall(1)?;
    let recall_k = if k == 1 { recall_1 } else { recall(k)? };

    let (eval_codes, eval_factors) = match &split {
        Some(s) => (
            pick(&s.test),
            factors
                .iter()
                .map(|f| FactorColumn { name: f.name.clone(), values: s.test.iter().map(|&i| f.values[i]).collect() })
                .collect(),
        ),
        None => (codes.clone(), factors),
    };
    let mut report = evaluate_disentanglement(&eval_codes, &eval_factors, &EvalConfig::default())?;
    report.recall_at_1 = Some(recall_1);
    report.metadata.dataset = Some(data_path.display().to_string());
    if let CodeSource::Model(m) = source {
        report.metadata.model = Some(m.display().to_string());
    }
    if let (Some(path), Some(mi)) = (mi_out, &report.mutual_info) {
        let names: Vec<String> = eval_factors.iter().map(|f| f.name.clone()).collect();
        io::write_mutual_info(path, mi, &names)?;
    }
    println!(
        "recall@{k} {recall_k:.4}, modularity {:.4}, explicitness {:.4}",
        report.modularity.mean, report.explicitness.mean
    );
    let output = EvalOutput { report, recall_at_k: RecallAtK { k, value: recall_k } };
    io::write_json(out, &output)?;
    Ok(())
}
