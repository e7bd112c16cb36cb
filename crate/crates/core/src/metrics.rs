//! Evaluation of embeddings.
//!
//! - recall@k with Euclidean nearest neighbours;
//! - per-dimension mutual information against discrete factors, using a
//!   20-bin equal-width histogram of each code dimension;
//! - modularity: how close each dimension's MI profile is to a one-hot
//!   template;
//! - explicitness: ROC AUC of one-vs-rest logistic regression on the full
//!   code, per factor value.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

pub const DEFAULT_BINS: usize = 20;

/// MI at or below this is treated as zero when locating the template peak.
pub const MI_ZERO: f64 = 1e-12;

/// Equal-width histogram bin of each value over `[min, max]`. The top edge
/// is inclusive; an all-equal input maps to bin 0.
pub fn discretize_code(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("code contains a non-finite value".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() || hi <= lo {
        return Ok(vec![0; values.len()]);
    }
    let width = (hi - lo) / bins as f64;
    Ok(values
        .iter()
        .map(|&v| (((v - lo) / width).floor() as usize).min(bins - 1))
        .collect())
}

/// Plug-in mutual information, in nats, between two discrete sequences.
pub fn mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("sequences have lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Data("mutual information of an empty sample".into()));
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let n = a.len() as f64;
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            (c / n) * ((c * n) / (ma[&x] as f64 * mb[&y] as f64)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// `m[i][f]`: mutual information between code dimension `i` and factor `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoMatrix {
    pub m: Vec<Vec<f64>>,
}

impl MutualInfoMatrix {
    pub fn new(m: Vec<Vec<f64>>) -> Result<Self> {
        let factors = m.first().map_or(0, Vec::len);
        if m.iter().any(|r| r.len() != factors) {
            return Err(Error::Shape("ragged mutual information matrix".into()));
        }
        if m.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Data("mutual information must be finite and non-negative".into()));
        }
        Ok(Self { m })
    }

    pub fn dims(&self) -> usize {
        self.m.len()
    }

    pub fn factors(&self) -> usize {
        self.m.first().map_or(0, Vec::len)
    }

    /// Discretizes every code dimension and measures its MI with each factor.
    pub fn estimate(codes: &[Vec<f64>], factors: &[Vec<usize>], bins: usize) -> Result<Self> {
        let dims = check_codes(codes)?;
        for f in factors {
            if f.len() != codes.len() {
                return Err(Error::Shape(format!(
                    "factor column has {} entries for {} codes",
                    f.len(),
                    codes.len()
                )));
            }
        }
        let mut m = Vec::with_capacity(dims);
        for i in 0..dims {
            let column: Vec<f64> = codes.iter().map(|c| c[i]).collect();
            let binned = discretize_code(&column, bins)?;
            m.push(factors.iter().map(|f| mutual_information(&binned, f)).collect::<Result<_>>()?);
        }
        Ok(Self { m })
    }
}

fn check_codes(codes: &[Vec<f64>]) -> Result<usize> {
    let dims = codes.first().map_or(0, Vec::len);
    if codes.is_empty() || dims == 0 {
        return Err(Error::Data("no code vectors".into()));
    }
    if codes.iter().any(|c| c.len() != dims) {
        return Err(Error::Shape("code vectors differ in length".into()));
    }
    Ok(dims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityScores {
    /// `1 − δ_i` per dimension; zero for dimensions carrying no information.
    pub per_dim: Vec<f64>,
    /// Mean over the dimensions that carry information about some factor
    /// (zero when none does).
    pub mean: f64,
}

fn mean_over_informative(per_dim: &[f64], peaks: &[f64]) -> f64 {
    let informative: Vec<f64> = per_dim
        .iter()
        .zip(peaks)
        .filter(|(_, &t)| t > MI_ZERO)
        .map(|(&s, _)| s)
        .collect();
    if informative.is_empty() {
        0.0
    } else {
        informative.iter().sum::<f64>() / informative.len() as f64
    }
}

/// Deviation of each dimension's MI profile from its best-matching one-hot
/// template:
///
/// ```text
/// θ_i = max_f m_if,   δ_i = Σ_f (m_if − t_if)² / (θ_i² (N − 1)),   score_i = 1 − δ_i
/// ```
pub fn modularity_score(m: &MutualInfoMatrix) -> Result<ModularityScores> {
    let n = m.factors();
    if n < 2 {
        return Err(Error::Config(format!("modularity needs at least two factors, got {n}")));
    }
    let mut per_dim = Vec::with_capacity(m.dims());
    let mut peaks = Vec::with_capacity(m.dims());
    for row in &m.m {
        let (arg, theta) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (f, &v)| if v > best.1 { (f, v) } else { best });
        peaks.push(theta);
        if theta <= MI_ZERO {
            per_dim.push(0.0);
            continue;
        }
        let dev: f64 = row
            .iter()
            .enumerate()
            .map(|(f, &v)| if f == arg { 0.0 } else { v * v })
            .sum();
        let delta = dev / (theta * theta * (n - 1) as f64);
        per_dim.push((1.0 - delta).clamp(0.0, 1.0));
    }
    let mean = mean_over_informative(&per_dim, &peaks);
    Ok(ModularityScores { per_dim, mean })
}

/// ROC AUC via the Mann–Whitney rank sum, with average ranks for ties.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC needs both positive and negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplicitnessConfig {
    pub l2_penalty: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// When set, fit on a stratified half of the instances and score the
    /// other half, shuffled with this seed. Otherwise in-sample.
    pub holdout_seed: Option<u64>,
}

impl Default for ExplicitnessConfig {
    fn default() -> Self {
        Self { l2_penalty: 1e-4, max_iterations: 5000, tolerance: 1e-8, holdout_seed: None }
    }
}

/// Binary logistic regression on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    center: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// ln(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LogisticRegression {
    /// Full-batch gradient descent on mean log-loss plus `λ/2 ‖w‖²`, with
    /// step `1/L` from a trace bound on the Hessian.
    pub fn fit(x: &[Vec<f64>], y: &[bool], cfg: &ExplicitnessConfig) -> Result<Self> {
        let p = check_codes(x)?;
        if y.len() != x.len() {
            return Err(Error::Shape("inputs and targets differ in length".into()));
        }
        let n = x.len() as f64;
        let mut center = vec![0.0; p];
        for row in x {
            for (c, v) in center.iter_mut().zip(row) {
                *c += v / n;
            }
        }
        let mut scale = vec![0.0; p];
        for row in x {
            for ((s, v), c) in scale.iter_mut().zip(row).zip(&center) {
                *s += (v - c) * (v - c) / n;
            }
        }
        // Constant features are zeroed out rather than scaled.
        let scale: Vec<f64> = scale.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|row| row.iter().zip(&center).zip(&scale).map(|((v, c), s)| (v - c) * s).collect())
            .collect();
        let active = scale.iter().filter(|&&s| s > 0.0).count() as f64;
        let lipschitz = 0.25 * (1.0 + active) + cfg.l2_penalty;
        let step = 1.0 / lipschitz;

        let mut w = vec![0.0; p];
        let mut b = 0.0;
        let mut prev = f64::INFINITY;
        let mut gw = vec![0.0; p];
        for _ in 0..cfg.max_iterations {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            let mut loss = 0.0;
            for (row, &target) in z.iter().zip(y) {
                let t = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let yv = if target { 1.0 } else { 0.0 };
                loss += softplus(t) - yv * t;
                let r = sigmoid(t) - yv;
                gb += r;
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += r * a;
                }
            }
            loss = loss / n + 0.5 * cfg.l2_penalty * w.iter().map(|v| v * v).sum::<f64>();
            if (prev - loss).abs() < cfg.tolerance {
                break;
            }
            prev = loss;
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= step * (g / n + cfg.l2_penalty * *wi);
            }
            b -= step * gb / n;
        }
        Ok(Self { center, scale, weights: w, bias: b })
    }

    /// Linear score (log-odds) for one input.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.center)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, c), s), w)| (v - c) * s * w)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueAuc {
    pub value: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorExplicitness {
    pub per_value: Vec<ValueAuc>,
    pub mean: f64,
    /// Values with fewer than two instances, left out of the mean.
    pub skipped: Vec<usize>,
}

// Stratified half split: (fit indices, score indices).
fn stratified_halves(groups: &BTreeMap<usize, Vec<usize>>, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fit, mut score) = (Vec::new(), Vec::new());
    for members in groups.values() {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        let half = m.len() / 2;
        score.extend_from_slice(&m[..half]);
        fit.extend_from_slice(&m[half..]);
    }
    fit.sort_unstable();
    score.sort_unstable();
    (fit, score)
}

/// One-vs-rest logistic regression per factor value on the full code, scored
/// by ROC AUC.
pub fn explicitness_auc(
    codes: &[Vec<f64>],
    factor_values: &[usize],
    cfg: &ExplicitnessConfig,
) -> Result<FactorExplicitness> {
    check_codes(codes)?;
    if codes.len() != factor_values.len() {
        return Err(Error::Shape("codes and factor values differ in length".into()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &v) in factor_values.iter().enumerate() {
        groups.entry(v).or_default().push(i);
    }
    let (kept, skipped): (BTreeMap<usize, Vec<usize>>, BTreeMap<usize, Vec<usize>>) =
        groups.into_iter().partition(|(_, m)| m.len() >= 2);
    if kept.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "explicitness needs two values with two or more instances, found {}",
            kept.len()
        )));
    }
    let (fit_idx, score_idx) = match cfg.holdout_seed {
        Some(seed) => stratified_halves(&kept, seed),
        None => {
            let all: Vec<usize> = (0..codes.len()).collect();
            (all.clone(), all)
        }
    };
    let fit_x: Vec<Vec<f64>> = fit_idx.iter().map(|&i| codes[i].clone()).collect();
    let mut per_value = Vec::with_capacity(kept.len());
    for &value in kept.keys() {
        let fit_y: Vec<bool> = fit_idx.iter().map(|&i| factor_values[i] == value).collect();
        let model = LogisticRegression::fit(&fit_x, &fit_y, cfg)?;
        let scores: Vec<f64> = score_idx.iter().map(|&i| model.decision(&codes[i])).collect();
        let truth: Vec<bool> = score_idx.iter().map(|&i| factor_values[i] == value).collect();
        per_value.push(ValueAuc { value, auc: roc_auc(&scores, &truth)? });
    }
    let mean = per_value.iter().map(|v| v.auc).sum::<f64>() / per_value.len() as f64;
    Ok(FactorExplicitness { per_value, mean, skipped: skipped.into_keys().collect() })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn recall_impl(
    references: &[Vec<f64>],
    ref_labels: &[Label],
    queries: &[Vec<f64>],
    query_labels: &[Label],
    k: usize,
    leave_one_out: bool,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if references.is_empty() {
        return Err(Error::Data("recall@k needs at least one reference".into()));
    }
    if references.len() != ref_labels.len() || queries.len() != query_labels.len() {
        return Err(Error::Shape("embeddings and labels differ in length".into()));
    }
    if queries.is_empty() {
        return Err(Error::Data("recall@k needs at least one query".into()));
    }
    let mut hits = 0usize;
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(references.len());
    for (qi, (q, ql)) in queries.iter().zip(query_labels).enumerate() {
        dists.clear();
        dists.extend(
            references
                .iter()
                .enumerate()
                .filter(|(ri, _)| !(leave_one_out && *ri == qi))
                .map(|(ri, r)| (squared_distance(q, r), ri)),
        );
        if dists.is_empty() {
            continue;
        }
        let take = k.min(dists.len());
        dists.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if dists[..take].iter().any(|&(_, ri)| ref_labels[ri] == *ql) {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Fraction of queries whose `k` nearest references include one with the
/// query's label.
pub fn recall_at_k(
    references: &[Vec<f64>],
    ref_labels: &[Label],
    queries: &[Vec<f64>],
    query_labels: &[Label],
    k: usize,
) -> Result<f64> {
    recall_impl(references, ref_labels, queries, query_labels, k, false)
}

/// recall@k where every point queries all the others.
pub fn recall_at_k_leave_one_out(points: &[Vec<f64>], labels: &[Label], k: usize) -> Result<f64> {
    recall_impl(points, labels, points, labels, k, true)
}

/// A named discrete factor column aligned with a set of codes.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorColumn {
    pub name: String,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub bins: usize,
    pub explicitness: ExplicitnessConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, explicitness: ExplicitnessConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityReport {
    pub per_dim: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorValueAuc {
    pub factor: String,
    pub value: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitnessReport {
    pub per_factor_value: Vec<FactorValueAuc>,
    pub mean: f64,
}

impl ExplicitnessReport {
    /// Mean AUC over the values of one factor.
    pub fn factor_mean(&self, factor: &str) -> Option<f64> {
        let v: Vec<f64> = self.per_factor_value.iter().filter(|e| e.factor == factor).map(|e| e.auc).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub modularity: ModularityReport,
    pub explicitness: ExplicitnessReport,
    pub recall_at_1: Option<f64>,
    pub metadata: ReportMetadata,
    /// MI matrix behind the modularity numbers; omitted from JSON output.
    #[serde(skip)]
    pub mutual_info: Option<MutualInfoMatrix>,
}

/// Computes MI, modularity and explicitness for a code against its factors.
///
/// With a single factor every informative dimension is trivially modular
/// and scores 1.
pub fn evaluate_disentanglement(
    codes: &[Vec<f64>],
    factors: &[FactorColumn],
    cfg: &EvalConfig,
) -> Result<DisentanglementReport> {
    check_codes(codes)?;
    if factors.is_empty() {
        return Err(Error::Config("no factors to evaluate against".into()));
    }
    let columns: Vec<Vec<usize>> = factors.iter().map(|f| f.values.clone()).collect();
    let mi = MutualInfoMatrix::estimate(codes, &columns, cfg.bins)?;
    let modularity = if factors.len() >= 2 {
        let s = modularity_score(&mi)?;
        ModularityReport { per_dim: s.per_dim, mean: s.mean }
    } else {
        let peaks: Vec<f64> = mi.m.iter().map(|r| r[0]).collect();
        let per_dim: Vec<f64> = peaks.iter().map(|&t| if t > MI_ZERO { 1.0 } else { 0.0 }).collect();
        let mean = mean_over_informative(&per_dim, &peaks);
        ModularityReport { per_dim, mean }
    };

    let mut per_factor_value = Vec::new();
    let mut warnings = Vec::new();
    for f in factors {
        let e = explicitness_auc(codes, &f.values, &cfg.explicitness)?;
        for v in &e.skipped {
            warnings.push(format!("factor {:?} value {v} has fewer than two instances; skipped", f.name));
        }
        per_factor_value.extend(e.per_value.into_iter().map(|v| FactorValueAuc {
            factor: f.name.clone(),
            value: v.value,
            auc: v.auc,
        }));
    }
    let mean = per_factor_value.iter().map(|v| v.auc).sum::<f64>() / per_factor_value.len() as f64;
    Ok(DisentanglementReport {
        modularity,
        explicitness: ExplicitnessReport { per_factor_value, mean },
        recall_at_1: None,
        metadata: ReportMetadata { warnings, ..Default::default() },
        mutual_info: Some(mi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize_code(&[0.0, 0.5, 1.0], 2).unwrap(), vec![0, 1, 1]);
        assert_eq!(discretize_code(&[3.0, 3.0, 3.0], 20).unwrap(), vec![0, 0, 0]);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        assert_eq!(discretize_code(&grid, 20).unwrap(), (0..20).collect::<Vec<_>>());
        assert!(discretize_code(&[0.0, f64::NAN], 20).is_err());
        assert!(discretize_code(&[0.0, 1.0], 0).is_err());
    }

    #[test]
    fn mi_examples() {
        // Same marginal within each factor group.
        let code = [0, 1, 0, 1];
        let factor = [0, 0, 1, 1];
        assert!(mutual_information(&code, &factor).unwrap().abs() < 1e-15);

        let bit = [0, 1, 0, 1, 1, 0];
        assert!((mutual_information(&bit, &bit).unwrap() - 2f64.ln()).abs() < 1e-15);

        // Joint counts [[2,1],[1,2]].
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 0, 1, 1];
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        let mi = mutual_information(&a, &b).unwrap();
        assert!((mi - expected).abs() < 1e-15);
        assert!((mi - 0.0566).abs() < 1e-4);

        assert!(mutual_information(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn modularity_examples() {
        let s = modularity_score(&MutualInfoMatrix::new(vec![vec![1.0, 0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(s.per_dim, vec![1.0]);
        let s = modularity_score(&MutualInfoMatrix::new(vec![vec![0.3, 0.3, 0.3]]).unwrap()).unwrap();
        assert!(s.per_dim[0].abs() < 1e-15);
        let s = modularity_score(&MutualInfoMatrix::new(vec![vec![0.8, 0.4, 0.0]]).unwrap()).unwrap();
        assert!((s.per_dim[0] - 0.875).abs() < 1e-15);
        assert!(modularity_score(&MutualInfoMatrix::new(vec![vec![0.8]]).unwrap()).is_err());
    }

    #[test]
    fn uninformative_dimensions_score_zero() {
        let m = MutualInfoMatrix::new(vec![vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let s = modularity_score(&m).unwrap();
        assert_eq!(s.per_dim, vec![0.0, 1.0]);
        assert_eq!(s.mean, 1.0);
        let m = MutualInfoMatrix::new(vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(modularity_score(&m).unwrap().mean, 0.0);
    }

    #[test]
    fn auc_examples() {
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        assert_eq!(roc_auc(&[1.0, 1.0], &[true, false]).unwrap(), 0.5);
        assert!(roc_auc(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn explicitness_perfect_ranking() {
        let codes: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let values: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let e = explicitness_auc(&codes, &values, &ExplicitnessConfig::default()).unwrap();
        assert_eq!(e.per_value.len(), 2);
        assert!(e.per_value.iter().all(|v| v.auc == 1.0));
    }

    #[test]
    fn explicitness_skips_singletons() {
        let codes: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64]).collect();
        let values = vec![0, 0, 0, 1, 1, 1, 2];
        let e = explicitness_auc(&codes, &values, &ExplicitnessConfig::default()).unwrap();
        assert_eq!(e.skipped, vec![2]);
        assert_eq!(e.per_value.len(), 2);
    }

    #[test]
    fn explicitness_holdout_split() {
        let codes: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let values: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let cfg = ExplicitnessConfig { holdout_seed: Some(5), ..Default::default() };
        let e = explicitness_auc(&codes, &values, &cfg).unwrap();
        assert!(e.mean > 0.95, "{e:?}");
    }

    #[test]
    fn recall_examples() {
        let refs = vec![vec![0.0], vec![10.0]];
        let rl = vec![Label(0), Label(1)];
        assert_eq!(recall_at_k(&refs, &rl, &[vec![1.0]], &[Label(0)], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&refs, &rl, &[vec![9.0]], &[Label(0)], 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&refs, &rl, &[vec![0.0]], &[Label(0)], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&refs, &rl, &[vec![9.0]], &[Label(0)], 2).unwrap(), 1.0);
        assert!(recall_at_k(&refs, &rl, &[vec![9.0]], &[Label(0)], 0).is_err());
        assert!(recall_at_k(&[], &[], &[vec![9.0]], &[Label(0)], 1).is_err());
    }

    #[test]
    fn recall_leave_one_out_excludes_self() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
        let labels = vec![Label(0), Label(1), Label(0), Label(1)];
        assert_eq!(recall_at_k_leave_one_out(&pts, &labels, 1).unwrap(), 0.0);
        let same = vec![Label(3); 4];
        assert_eq!(recall_at_k_leave_one_out(&pts, &same, 1).unwrap(), 1.0);
    }

    #[test]
    fn constant_code_report() {
        let codes = vec![vec![1.0, 1.0]; 20];
        let factors = vec![
            FactorColumn { name: "a".into(), values: (0..20).map(|i| i % 2).collect() },
            FactorColumn { name: "b".into(), values: (0..20).map(|i| (i / 2) % 2).collect() },
        ];
        let r = evaluate_disentanglement(&codes, &factors, &EvalConfig::default()).unwrap();
        assert_eq!(r.modularity.per_dim, vec![0.0, 0.0]);
        assert_eq!(r.modularity.mean, 0.0);
        assert!((r.explicitness.mean - 0.5).abs() < 1e-12);
    }
}
