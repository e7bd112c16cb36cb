//! File formats.
//!
//! A dataset is a CSV body plus a JSON header with the same stem
//! (`data.csv` + `data.json`). The body has an `id` column, one integer
//! column per factor, then the real-valued columns (`o0..` for
//! observations, `z0..` for codes). Floats are written in shortest
//! round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EpochLog;
use crate::error::{Error, Result};
use crate::metrics::{FactorColumn, MutualInfoMatrix};
use crate::synthdata::{FactorSpec, FactorialDataset, GoldenCode, GoldenPattern};

pub const DATASET_FORMAT: &str = "fsembed-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetKind {
    Factorial { spec: FactorSpec },
    Golden { pattern: char, factors: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub rows: usize,
    #[serde(flatten)]
    pub kind: DatasetKind,
}

/// Either kind of dataset file, as read back.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Factorial(FactorialDataset),
    Golden(GoldenCode),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Factorial(d) => d.len(),
            Dataset::Golden(g) => g.points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of real values: observations or codes.
    pub fn values(&self) -> Vec<Vec<f64>> {
        match self {
            Dataset::Factorial(d) => d.observations.clone(),
            Dataset::Golden(g) => g.codes(),
        }
    }

    pub fn factor_names(&self) -> Vec<String> {
        match self {
            Dataset::Factorial(d) => d.spec.factors.iter().map(|f| f.name.clone()).collect(),
            Dataset::Golden(g) => golden_factor_names(g.pattern),
        }
    }

    pub fn factor_values(&self) -> &[Vec<usize>] {
        match self {
            Dataset::Factorial(d) => &d.factor_values,
            Dataset::Golden(g) => &g.factor_values,
        }
    }

    /// Factor columns to evaluate against. Noise factors of a factorial
    /// dataset are left out.
    pub fn eval_factors(&self) -> Vec<FactorColumn> {
        let names = self.factor_names();
        let keep: Vec<usize> = match self {
            Dataset::Factorial(d) => d.spec.class_factor_indices(),
            Dataset::Golden(_) => (0..names.len()).collect(),
        };
        keep.into_iter()
            .map(|f| FactorColumn {
                name: names[f].clone(),
                values: self.factor_values().iter().map(|v| v[f]).collect(),
            })
            .collect()
    }
}

fn golden_factor_names(pattern: GoldenPattern) -> Vec<String> {
    (0..pattern.factor_count()).map(|f| format!("f{f}")).collect()
}

/// Path of the JSON header paired with a CSV body.
pub fn header_path(csv_path: &Path) -> Result<PathBuf> {
    let header = csv_path.with_extension("json");
    if header == csv_path {
        return Err(Error::Config(format!("{} must not be a .json file", csv_path.display())));
    }
    Ok(header)
}

fn write_table(
    path: &Path,
    factor_names: &[String],
    value_prefix: &str,
    factor_values: &[Vec<usize>],
    values: &[Vec<f64>],
) -> Result<()> {
    let width = values.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["id".to_string()];
    head.extend(factor_names.iter().cloned());
    head.extend((0..width).map(|j| format!("{value_prefix}{j}")));
    w.write_record(&head)?;
    for (i, (fv, row)) in factor_values.iter().zip(values).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(fv.iter().map(usize::to_string));
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Table {
    factor_values: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
}

fn read_table(path: &Path, factor_names: &[String], value_prefix: &str) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let head = r.headers()?.clone();
    let nf = factor_names.len();
    if head.len() < 1 + nf
        || &head[0] != "id"
        || head.iter().skip(1).take(nf).ne(factor_names.iter().map(String::as_str))
    {
        return Err(Error::Data(format!(
            "{}: expected columns id, {}",
            path.display(),
            factor_names.join(", ")
        )));
    }
    for (j, h) in head.iter().skip(1 + nf).enumerate() {
        if h != format!("{value_prefix}{j}") {
            return Err(Error::Data(format!("{}: unexpected column {h:?}", path.display())));
        }
    }
    let mut table = Table { factor_values: Vec::new(), values: Vec::new() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: {what}", path.display(), line + 1));
        let fv = rec
            .iter()
            .skip(1)
            .take(nf)
            .map(|v| v.trim().parse::<usize>().map_err(|_| bad(&format!("factor value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let row = rec
            .iter()
            .skip(1 + nf)
            .map(|v| match v.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(bad(&format!("value {v:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        table.factor_values.push(fv);
        table.values.push(row);
    }
    Ok(table)
}

fn write_header(csv_path: &Path, rows: usize, kind: DatasetKind) -> Result<()> {
    let header = DatasetHeader { format: DATASET_FORMAT.into(), version: DATASET_VERSION, rows, kind };
    write_json(&header_path(csv_path)?, &header)
}

pub fn write_factorial(csv_path: &Path, data: &FactorialDataset) -> Result<()> {
    let names: Vec<String> = data.spec.factors.iter().map(|f| f.name.clone()).collect();
    write_table(csv_path, &names, "o", &data.factor_values, &data.observations)?;
    write_header(csv_path, data.len(), DatasetKind::Factorial { spec: data.spec.clone() })
}

pub fn write_golden(csv_path: &Path, code: &GoldenCode) -> Result<()> {
    let names = golden_factor_names(code.pattern);
    write_table(csv_path, &names, "z", &code.factor_values, &code.codes())?;
    write_header(
        csv_path,
        code.points.len(),
        DatasetKind::Golden { pattern: code.pattern.letter(), factors: names },
    )
}

pub fn read_header(csv_path: &Path) -> Result<DatasetHeader> {
    let path = header_path(csv_path)?;
    let header: DatasetHeader = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported format {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    Ok(header)
}

fn check_factor_ranges(path: &Path, fv: &[Vec<usize>], counts: &[usize]) -> Result<()> {
    for (i, row) in fv.iter().enumerate() {
        for (f, (&v, &n)) in row.iter().zip(counts).enumerate() {
            if v >= n {
                return Err(Error::Data(format!(
                    "{}: row {}: factor {f} value {v} exceeds its {n} values",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Reads a dataset of either kind, checking the body against the header.
pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let header = read_header(csv_path)?;
    let data = match header.kind {
        DatasetKind::Factorial { spec } => {
            spec.validate()?;
            let names: Vec<String> = spec.factors.iter().map(|f| f.name.clone()).collect();
            let t = read_table(csv_path, &names, "o")?;
            if t.values.iter().any(|r| r.len() != spec.observation_dim) {
                return Err(Error::Shape(format!(
                    "{}: rows must have {} observation values",
                    csv_path.display(),
                    spec.observation_dim
                )));
            }
            let counts: Vec<usize> = spec.factors.iter().map(|f| f.value_count).collect();
            check_factor_ranges(csv_path, &t.factor_values, &counts)?;
            Dataset::Factorial(FactorialDataset { spec, observations: t.values, factor_values: t.factor_values })
        }
        DatasetKind::Golden { pattern, factors } => {
            let pattern = GoldenPattern::from_letter(&pattern.to_string())?;
            if factors != golden_factor_names(pattern) {
                return Err(Error::Data(format!("{}: factor names do not match pattern", csv_path.display())));
            }
            let t = read_table(csv_path, &factors, "z")?;
            let points = t
                .values
                .iter()
                .map(|r| <[f64; 2]>::try_from(r.as_slice()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Shape(format!("{}: golden codes are two-dimensional", csv_path.display())))?;
            Dataset::Golden(GoldenCode {
                pattern,
                points,
                factor_values: t.factor_values,
                expected: pattern.expected(),
            })
        }
    };
    if data.len() != header.rows {
        return Err(Error::Data(format!(
            "{}: header promises {} rows, body has {}",
            csv_path.display(),
            header.rows,
            data.len()
        )));
    }
    Ok(data)
}

/// Codes as `id,z0..`.
pub fn write_codes(path: &Path, codes: &[Vec<f64>]) -> Result<()> {
    let fv = vec![Vec::new(); codes.len()];
    write_table(path, &[], "z", &fv, codes)
}

pub fn read_codes(path: &Path) -> Result<Vec<Vec<f64>>> {
    let t = read_table(path, &[], "z")?;
    if let Some(w) = t.values.first().map(Vec::len) {
        if w == 0 || t.values.iter().any(|r| r.len() != w) {
            return Err(Error::Shape(format!("{}: ragged or empty code rows", path.display())));
        }
    }
    Ok(t.values)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One `(dimension, factor, mi)` row per matrix entry.
pub fn write_mutual_info(path: &Path, mi: &MutualInfoMatrix, factor_names: &[String]) -> Result<()> {
    if factor_names.len() != mi.factors() {
        return Err(Error::Shape("one name per factor needed".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dimension", "factor", "mi"])?;
    for (j, row) in mi.m.iter().enumerate() {
        for (name, v) in factor_names.iter().zip(row) {
            w.write_record([j.to_string(), name.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `epoch,train_loss,val_metric`, one row per completed epoch.
pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_metric"])?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_metric.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
