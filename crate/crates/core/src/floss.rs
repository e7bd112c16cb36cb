//! The F-statistic loss.
//!
//! For every unordered label pair `(α, β)` in a batch and every embedding
//! dimension `k`, the one-way ANOVA statistic
//!
//! ```text
//! s = ñ · Σ_i n_i (z̄_i − z̿)² / Σ_ij (z_ij − z̄_i)²,   ñ = n_α + n_β − 2
//! ```
//!
//! is mapped through the `F(1, ñ)` CDF to a separation probability `Φ`. Each
//! pair keeps the `d` dimensions with the largest `Φ`, and the loss is
//! `−Σ_pairs Σ_selected ln Φ`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::specfun;
use crate::Label;

/// Floor applied to `Φ` before taking the log.
pub const DEFAULT_PHI_FLOOR: f64 = 1e-12;

/// Lower clamp on the pooled within-class sum of squares.
pub const WITHIN_VARIANCE_FLOOR: f64 = 1e-12;

/// Embeddings with one label each, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingBatch {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<Label>,
}

impl LabeledEmbeddingBatch {
    pub fn new(rows: &[Vec<f64>], labels: Vec<Label>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Shape(format!(
                "embedding {bad} has {} coordinates, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::from_flat(dim, rows.concat(), labels)
    }

    pub fn from_flat(dim: usize, data: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dimension must be positive".into()));
        }
        if data.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} values cannot hold {} embeddings of dimension {dim}",
                data.len(),
                labels.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("embedding contains a non-finite value".into()));
        }
        Ok(Self { dim, data, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Member indices per label, in ascending label order.
    pub fn groups(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        groups
    }
}

// Per-label count, per-dimension mean and sum of squared deviations.
struct GroupStats {
    members: Vec<usize>,
    mean: Vec<f64>,
    ss: Vec<f64>,
}

impl GroupStats {
    fn compute(batch: &LabeledEmbeddingBatch, label: Label, members: Vec<usize>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::DegenerateClass(label));
        }
        let n = members.len() as f64;
        let mut mean = vec![0.0; batch.dim];
        for &i in &members {
            for (m, v) in mean.iter_mut().zip(batch.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut ss = vec![0.0; batch.dim];
        for &i in &members {
            for ((acc, v), m) in ss.iter_mut().zip(batch.row(i)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        Ok(Self { members, mean, ss })
    }

    fn n(&self) -> f64 {
        self.members.len() as f64
    }
}

fn group_stats(batch: &LabeledEmbeddingBatch) -> Result<Vec<(Label, GroupStats)>> {
    batch
        .groups()
        .into_iter()
        .map(|(label, members)| Ok((label, GroupStats::compute(batch, label, members)?)))
        .collect()
}

// Between-class and (unclamped) within-class sums of squares for one
// dimension. The grand mean is the mean over all pair members, which makes
// `s` the classical one-way ANOVA statistic for any class sizes.
fn pair_sums(ga: &GroupStats, gb: &GroupStats, k: usize) -> (f64, f64) {
    let (na, nb) = (ga.n(), gb.n());
    let diff = ga.mean[k] - gb.mean[k];
    let between = na * nb / (na + nb) * diff * diff;
    (between, ga.ss[k] + gb.ss[k])
}

fn pair_statistic(ga: &GroupStats, gb: &GroupStats, k: usize) -> f64 {
    let n_tilde = ga.n() + gb.n() - 2.0;
    let (between, within) = pair_sums(ga, gb, k);
    n_tilde * between / within.max(WITHIN_VARIANCE_FLOOR)
}

/// F statistic of labels `alpha` and `beta` on embedding dimension `k`.
pub fn f_statistic_per_dim(
    batch: &LabeledEmbeddingBatch,
    alpha: Label,
    beta: Label,
    k: usize,
) -> Result<f64> {
    if alpha == beta {
        return Err(Error::Config(format!("labels of a pair must differ, both are {alpha}")));
    }
    if k >= batch.dim {
        return Err(Error::Shape(format!("dimension {k} out of range for D = {}", batch.dim)));
    }
    let mut groups = batch.groups();
    let mut take = |l: Label| {
        let members = groups.remove(&l).unwrap_or_default();
        GroupStats::compute(batch, l, members)
    };
    let ga = take(alpha)?;
    let gb = take(beta)?;
    Ok(pair_statistic(&ga, &gb, k))
}

/// `Φ = F_{1,ñ}(s)`: probability that two same-mean classes would produce an
/// F statistic below `s`.
pub fn separation_probability(s: f64, n_tilde: f64) -> Result<f64> {
    if n_tilde.is_nan() || n_tilde < 1.0 {
        return Err(Error::Config(format!("degrees of freedom must be >= 1, got {n_tilde}")));
    }
    Ok(specfun::f_cdf(s, 1, n_tilde)?)
}

/// Per-pair, per-dimension F statistics and separation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationTable {
    pub pairs: Vec<(Label, Label)>,
    pub s: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// `1 − Φ`, kept separately so `ln Φ` stays accurate near one.
    pub phi_complement: Vec<Vec<f64>>,
    pub n_tilde: Vec<f64>,
}

impl SeparationTable {
    pub fn dim(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// Selected dimensions for pair `p`.
    pub fn selected(&self, p: usize, d: usize) -> Result<Vec<usize>> {
        // Ranking on the complement orders values that all round to Φ = 1.
        let score: Vec<f64> = self.phi_complement[p].iter().map(|q| -q).collect();
        select_dimensions(&score, d)
    }

    /// `L_F` for this table under `cfg`, summed in pair order.
    pub fn loss(&self, cfg: &FLossConfig) -> Result<f64> {
        cfg.validate(self.dim())?;
        let mut total = 0.0;
        for p in 0..self.pairs.len() {
            for k in self.selected(p, cfg.d)? {
                total += neg_log_phi(self.phi[p][k], self.phi_complement[p][k], cfg.phi_floor);
            }
        }
        Ok(total)
    }

    /// Smallest `Φ` among the selected dimensions of all pairs.
    pub fn min_selected_phi(&self, d: usize) -> Result<f64> {
        let mut min = f64::INFINITY;
        for p in 0..self.pairs.len() {
            for k in self.selected(p, d)? {
                min = min.min(self.phi[p][k]);
            }
        }
        Ok(min)
    }
}

fn neg_log_phi(phi: f64, complement: f64, floor: f64) -> f64 {
    if phi >= 0.5 {
        -(-complement).ln_1p()
    } else {
        -phi.max(floor).ln()
    }
}

/// Builds the separation table for every unordered label pair, enumerated
/// in ascending label order.
pub fn build_separation_table(batch: &LabeledEmbeddingBatch) -> Result<SeparationTable> {
    let stats = group_stats(batch)?;
    build_from_stats(&stats, batch.dim)
}

fn build_from_stats(stats: &[(Label, GroupStats)], dim: usize) -> Result<SeparationTable> {
    if stats.len() < 2 {
        return Err(Error::InsufficientClasses(stats.len()));
    }
    let npairs = stats.len() * (stats.len() - 1) / 2;
    let mut table = SeparationTable {
        pairs: Vec::with_capacity(npairs),
        s: Vec::with_capacity(npairs),
        phi: Vec::with_capacity(npairs),
        phi_complement: Vec::with_capacity(npairs),
        n_tilde: Vec::with_capacity(npairs),
    };
    for (i, (la, ga)) in stats.iter().enumerate() {
        for (lb, gb) in &stats[i + 1..] {
            let n_tilde = ga.n() + gb.n() - 2.0;
            let mut s_row = Vec::with_capacity(dim);
            let mut phi_row = Vec::with_capacity(dim);
            let mut q_row = Vec::with_capacity(dim);
            for k in 0..dim {
                let s = pair_statistic(ga, gb, k);
                let cdf = specfun::f_cdf_with_complement(s, 1, n_tilde)?;
                s_row.push(s);
                phi_row.push(cdf.value);
                q_row.push(cdf.complement);
            }
            table.pairs.push((*la, *lb));
            table.s.push(s_row);
            table.phi.push(phi_row);
            table.phi_complement.push(q_row);
            table.n_tilde.push(n_tilde);
        }
    }
    Ok(table)
}

/// Indices of the `d` largest scores, returned in ascending index order.
/// Equal scores prefer the lower index.
pub fn select_dimensions(scores: &[f64], d: usize) -> Result<Vec<usize>> {
    if d == 0 || d > scores.len() {
        return Err(Error::Config(format!(
            "cannot select {d} of {} dimensions",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut chosen = order[..d].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Loss hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FLossConfig {
    /// Dimensions trained per label pair.
    pub d: usize,
    pub phi_floor: f64,
}

impl FLossConfig {
    pub fn new(d: usize) -> Self {
        Self { d, phi_floor: DEFAULT_PHI_FLOOR }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.d == 0 || self.d > dim {
            return Err(Error::Config(format!("need 1 <= d <= {dim}, got d = {}", self.d)));
        }
        if !(self.phi_floor > 0.0 && self.phi_floor < 1.0) {
            return Err(Error::Config(format!("phi_floor must lie in (0, 1), got {}", self.phi_floor)));
        }
        Ok(())
    }
}

/// `L_F = −Σ_pairs Σ_{k ∈ D_αβ} ln max(Φ, floor)`.
pub fn f_loss(batch: &LabeledEmbeddingBatch, cfg: &FLossConfig) -> Result<f64> {
    cfg.validate(batch.dim)?;
    build_separation_table(batch)?.loss(cfg)
}

/// Loss value, its gradient with respect to every embedding coordinate
/// (row-major, same layout as the batch) and the smallest selected `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FLossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub min_selected_phi: f64,
}

/// Gradient of `L_F` with respect to each embedding, one row per instance.
pub fn f_loss_grad(batch: &LabeledEmbeddingBatch, cfg: &FLossConfig) -> Result<Vec<Vec<f64>>> {
    let eval = f_loss_with_grad(batch, cfg)?;
    Ok(eval.grad.chunks(batch.dim).map(<[f64]>::to_vec).collect())
}

/// Loss and gradient in a single pass.
///
/// The dimension selection is held fixed while differentiating. A selected
/// entry whose `Φ` sits at or below the floor contributes no gradient.
pub fn f_loss_with_grad(batch: &LabeledEmbeddingBatch, cfg: &FLossConfig) -> Result<FLossEval> {
    cfg.validate(batch.dim)?;
    let stats = group_stats(batch)?;
    let table = build_from_stats(&stats, batch.dim)?;
    let dim = batch.dim;
    let mut grad = vec![0.0; batch.data.len()];
    let mut loss = 0.0;
    let mut min_phi = f64::INFINITY;

    let index_of: BTreeMap<Label, usize> =
        stats.iter().enumerate().map(|(i, (l, _))| (*l, i)).collect();

    for (p, &(la, lb)) in table.pairs.iter().enumerate() {
        let ga = &stats[index_of[&la]].1;
        let gb = &stats[index_of[&lb]].1;
        let n_tilde = table.n_tilde[p];
        let (na, nb) = (ga.n(), gb.n());
        for k in table.selected(p, cfg.d)? {
            let phi = table.phi[p][k];
            loss += neg_log_phi(phi, table.phi_complement[p][k], cfg.phi_floor);
            min_phi = min_phi.min(phi);
            if phi <= cfg.phi_floor {
                continue;
            }
            let s = table.s[p][k];
            // dL/ds = -(1/Φ) · f_{1,ñ}(s)
            let dl_ds = -specfun::f_pdf(s, 1, n_tilde)? / phi;
            if dl_ds == 0.0 {
                continue;
            }
            let (between, within_raw) = pair_sums(ga, gb, k);
            let clamped = within_raw <= WITHIN_VARIANCE_FLOOR;
            let within = within_raw.max(WITHIN_VARIANCE_FLOOR);
            let diff = ga.mean[k] - gb.mean[k];
            let members = [(ga, 2.0 * nb * diff / (na + nb)), (gb, -2.0 * na * diff / (na + nb))];
            for (g, d_between) in members {
                for &i in &g.members {
                    let d_within = if clamped {
                        0.0
                    } else {
                        2.0 * (batch.data[i * dim + k] - g.mean[k])
                    };
                    let ds = n_tilde * (d_between * within - between * d_within) / (within * within);
                    grad[i * dim + k] += dl_ds * ds;
                }
            }
        }
    }
    Ok(FLossEval { loss, grad, min_selected_phi: min_phi })
}
