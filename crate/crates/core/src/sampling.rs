//! Episodic minibatches for the three supervision regimes.
//!
//! An episode is a set of instance indices plus one opaque label per
//! instance. Class and conjunction episodes label instances by identity;
//! factor episodes label them by the value of one hidden factor, chosen
//! round-robin. The factor index is kept in [`Provenance`] for logging and
//! tests only.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::FactorialDataset;
use crate::Label;

pub const DEFAULT_MAX_LABELS: usize = 12;
pub const DEFAULT_MAX_PER_LABEL: usize = 10;
pub const DEFAULT_MAX_VALUES: usize = 12;
/// Instances per factor value for the F-statistic loss.
pub const DEFAULT_MAX_PER_VALUE_FSTAT: usize = 5;
/// Instances per factor value for the triplet loss.
pub const DEFAULT_MAX_PER_VALUE_TRIPLET: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Same-class / different-class supervision on given class labels.
    Class,
    /// Class-aware oracle whose classes are conjunctions of all
    /// class-relevant factors.
    Conjunction,
    /// Groups instances by one unnamed factor at a time.
    Factor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub oracle: OracleKind,
    pub factor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub indices: Vec<usize>,
    pub labels: Vec<Label>,
    pub provenance: Provenance,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn label_count(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }
}

/// Per-instance identity formed from the values of every class-relevant
/// factor (noise factors ignored). Labels are mixed-radix encodings of the
/// value tuple, so distinct tuples get distinct labels.
pub fn conjunction_labels(dataset: &FactorialDataset) -> Vec<Label> {
    let class_factors = dataset.spec.class_factor_indices();
    dataset
        .factor_values
        .iter()
        .map(|values| {
            let code = class_factors.iter().fold(0u64, |acc, &f| {
                acc * dataset.spec.factors[f].value_count as u64 + values[f] as u64
            });
            Label(u32::try_from(code).expect("conjunction label exceeds u32"))
        })
        .collect()
}

/// Instance indices grouped by class label.
#[derive(Debug, Clone)]
pub struct ClassPool {
    oracle: OracleKind,
    groups: BTreeMap<Label, Vec<usize>>,
}

impl ClassPool {
    /// `labels` is indexed by dataset instance; only `pool` members are used.
    pub fn new(oracle: OracleKind, labels: &[Label], pool: &[usize]) -> Result<Self> {
        let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for &i in pool {
            let label = *labels
                .get(i)
                .ok_or_else(|| Error::Shape(format!("pool index {i} has no label")))?;
            groups.entry(label).or_default().push(i);
        }
        Ok(Self { oracle, groups })
    }

    pub fn size(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    fn eligible(&self) -> Vec<(Label, &Vec<usize>)> {
        self.groups.iter().filter(|(_, m)| m.len() >= 2).map(|(l, m)| (*l, m)).collect()
    }

    /// Episodes needed to visit about every pooled instance once.
    pub fn episodes_per_epoch(&self, max_labels: usize, max_per_label: usize) -> usize {
        let per_episode = self.eligible().len().min(max_labels).max(1) * max_per_label.max(1);
        self.size().div_ceil(per_episode).max(1)
    }
}

fn check_limits(max_labels: usize, max_per_label: usize) -> Result<()> {
    if max_labels < 2 {
        return Err(Error::Config(format!("an episode needs at least 2 labels, max is {max_labels}")));
    }
    if max_per_label < 2 {
        return Err(Error::Config(format!(
            "an episode needs at least 2 instances per label, max is {max_per_label}"
        )));
    }
    Ok(())
}

/// Samples up to `max_labels` classes uniformly without replacement, then up
/// to `max_per_label` instances of each.
pub fn sample_class_episode<R: Rng + ?Sized>(
    pool: &ClassPool,
    max_labels: usize,
    max_per_label: usize,
    rng: &mut R,
) -> Result<Episode> {
    check_limits(max_labels, max_per_label)?;
    let eligible = pool.eligible();
    if eligible.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} classes have two or more instances, need 2",
            eligible.len()
        )));
    }
    let chosen = index::sample(rng, eligible.len(), eligible.len().min(max_labels));
    let mut indices = Vec::new();
    let mut labels = Vec::new();
    for c in chosen {
        let (label, members) = eligible[c];
        let take = members.len().min(max_per_label);
        for m in index::sample(rng, members.len(), take) {
            indices.push(members[m]);
            labels.push(label);
        }
    }
    Ok(Episode {
        indices,
        labels,
        provenance: Provenance { oracle: pool.oracle, factor: None },
    })
}

// Draws one episode for a factor from per-value candidate lists. Returns
// `None` when fewer than two values have two or more candidates. Drawn
// instances are removed from the candidate lists.
fn draw_factor_episode<R: Rng + ?Sized>(
    by_value: &mut [Vec<usize>],
    factor: usize,
    max_values: usize,
    max_per_value: usize,
    rng: &mut R,
) -> Option<Episode> {
    let eligible: Vec<usize> = (0..by_value.len()).filter(|&v| by_value[v].len() >= 2).collect();
    if eligible.len() < 2 {
        return None;
    }
    let mut chosen: Vec<usize> = index::sample(rng, eligible.len(), eligible.len().min(max_values))
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();
    let mut indices = Vec::new();
    let mut labels = Vec::new();
    for v in chosen {
        let queue = &mut by_value[v];
        let take = queue.len().min(max_per_value);
        for i in queue.drain(queue.len() - take..) {
            indices.push(i);
            labels.push(Label(v as u32));
        }
    }
    Some(Episode {
        indices,
        labels,
        provenance: Provenance { oracle: OracleKind::Factor, factor: Some(factor) },
    })
}

fn group_by_value(dataset: &FactorialDataset, pool: &[usize], factor: usize) -> Vec<Vec<usize>> {
    let mut by_value = vec![Vec::new(); dataset.spec.factors[factor].value_count];
    for &i in pool {
        by_value[dataset.factor_values[i][factor]].push(i);
    }
    by_value
}

fn check_factor_args(dataset: &FactorialDataset, pool: &[usize], factors: &[usize]) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::Config("factor oracle needs at least one factor".into()));
    }
    if let Some(&f) = factors.iter().find(|&&f| f >= dataset.factor_count()) {
        return Err(Error::Config(format!("factor index {f} out of range")));
    }
    if let Some(&i) = pool.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::Shape(format!("pool index {i} out of range")));
    }
    Ok(())
}

/// One factor episode drawn independently of any other call. The factor is
/// `factors[cycle_position % factors.len()]`, moving on to the next factor
/// in the cycle while the current one has fewer than two usable values.
pub fn sample_factor_episode<R: Rng + ?Sized>(
    dataset: &FactorialDataset,
    pool: &[usize],
    factors: &[usize],
    cycle_position: usize,
    max_values: usize,
    max_per_value: usize,
    rng: &mut R,
) -> Result<Episode> {
    check_limits(max_values, max_per_value)?;
    check_factor_args(dataset, pool, factors)?;
    for step in 0..factors.len() {
        let f = factors[(cycle_position + step) % factors.len()];
        let mut by_value = group_by_value(dataset, pool, f);
        for queue in &mut by_value {
            queue.shuffle(rng);
        }
        if let Some(ep) = draw_factor_episode(&mut by_value, f, max_values, max_per_value, rng) {
            return Ok(ep);
        }
    }
    Err(Error::InsufficientData("every factor has fewer than two usable values".into()))
}

/// Stateful unnamed-factor oracle. Cycles round-robin over `factors`; for
/// each factor it works through a shuffled partition of the pool and
/// reshuffles once the partition is used up, so across an epoch every
/// instance is visited with respect to every factor.
#[derive(Debug, Clone)]
pub struct FactorEpisodeSampler {
    factors: Vec<usize>,
    full: Vec<Vec<Vec<usize>>>,
    queues: Vec<Vec<Vec<usize>>>,
    cursor: usize,
    max_values: usize,
    max_per_value: usize,
}

impl FactorEpisodeSampler {
    pub fn new(
        dataset: &FactorialDataset,
        pool: &[usize],
        factors: &[usize],
        max_values: usize,
        max_per_value: usize,
    ) -> Result<Self> {
        check_limits(max_values, max_per_value)?;
        check_factor_args(dataset, pool, factors)?;
        let full: Vec<_> = factors.iter().map(|&f| group_by_value(dataset, pool, f)).collect();
        Ok(Self {
            factors: factors.to_vec(),
            queues: vec![Vec::new(); full.len()],
            full,
            cursor: 0,
            max_values,
            max_per_value,
        })
    }

    /// Calls per epoch: enough rounds for the slowest factor to cover the
    /// pool, times the number of factors.
    pub fn episodes_per_epoch(&self) -> usize {
        let rounds = self
            .full
            .iter()
            .map(|by_value| {
                let used = by_value.iter().filter(|q| q.len() >= 2).count();
                let per = used.min(self.max_values).max(1) * self.max_per_value;
                by_value.iter().map(Vec::len).sum::<usize>().div_ceil(per)
            })
            .max()
            .unwrap_or(1)
            .max(1);
        rounds * self.factors.len()
    }

    /// Position of the next factor in the cycle.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Episode> {
        for _ in 0..self.factors.len() {
            let slot = self.cursor;
            self.cursor = (self.cursor + 1) % self.factors.len();
            let factor = self.factors[slot];
            let (mp, mv) = (self.max_per_value, self.max_values);
            if let Some(ep) = draw_factor_episode(&mut self.queues[slot], factor, mv, mp, rng) {
                return Ok(ep);
            }
            let mut fresh = self.full[slot].clone();
            for queue in &mut fresh {
                queue.shuffle(rng);
            }
            self.queues[slot] = fresh;
            if let Some(ep) = draw_factor_episode(&mut self.queues[slot], factor, mv, mp, rng) {
                return Ok(ep);
            }
        }
        Err(Error::InsufficientData("every factor has fewer than two usable values".into()))
    }
}
