//! Ground-truth generators.
//!
//! [`generate_factorial`] builds observation datasets with known discrete
//! factors pushed through a fixed random nonlinear mixing.
//! [`generate_golden_code`] emits the sixteen two-dimensional reference
//! codes used to check the disentanglement metrics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on generated instances.
pub const MAX_INSTANCES: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorRole {
    ClassRelevant,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDef {
    pub name: String,
    pub value_count: usize,
    pub role: FactorRole,
}

impl FactorDef {
    pub fn new(name: &str, value_count: usize, role: FactorRole) -> Self {
        Self { name: name.to_string(), value_count, role }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub factors: Vec<FactorDef>,
    pub instances_per_combination: usize,
    pub observation_dim: usize,
    pub observation_noise_sd: f64,
    pub mixing_seed: u64,
}

impl FactorSpec {
    /// Three binary class factors and one binary noise factor observed in
    /// 32 dimensions.
    pub fn desk_scale() -> Self {
        Self {
            factors: vec![
                FactorDef::new("shape", 2, FactorRole::ClassRelevant),
                FactorDef::new("color", 2, FactorRole::ClassRelevant),
                FactorDef::new("size", 2, FactorRole::ClassRelevant),
                FactorDef::new("lighting", 2, FactorRole::Noise),
            ],
            instances_per_combination: 10,
            observation_dim: 32,
            observation_noise_sd: 0.05,
            mixing_seed: 17,
        }
    }

    /// Seven class factors whose conjunctions give 672 identities.
    pub fn sprites_like() -> Self {
        let f = |n: &str, v| FactorDef::new(n, v, FactorRole::ClassRelevant);
        Self {
            factors: vec![
                f("body", 7),
                f("arms", 3),
                f("hair", 2),
                f("gender", 2),
                f("armor", 2),
                f("greaves", 2),
                f("weapon", 2),
            ],
            instances_per_combination: 1,
            observation_dim: 32,
            observation_noise_sd: 0.05,
            mixing_seed: 7,
        }
    }

    pub fn one_hot_width(&self) -> usize {
        self.factors.iter().map(|f| f.value_count).sum()
    }

    pub fn combination_count(&self) -> Result<usize> {
        self.factors.iter().try_fold(1usize, |acc, f| {
            acc.checked_mul(f.value_count)
                .ok_or_else(|| Error::Size("factor combination count overflows".into()))
        })
    }

    pub fn class_factor_indices(&self) -> Vec<usize> {
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.role == FactorRole::ClassRelevant)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Config("factor spec has no factors".into()));
        }
        if let Some(f) = self.factors.iter().find(|f| f.value_count < 2) {
            return Err(Error::Config(format!("factor {:?} needs at least two values", f.name)));
        }
        if self.instances_per_combination == 0 {
            return Err(Error::Config("instances_per_combination must be positive".into()));
        }
        if self.observation_dim < self.one_hot_width() {
            return Err(Error::Config(format!(
                "observation_dim {} is smaller than the one-hot width {}",
                self.observation_dim,
                self.one_hot_width()
            )));
        }
        if !(self.observation_noise_sd.is_finite() && self.observation_noise_sd >= 0.0) {
            return Err(Error::Config("observation_noise_sd must be non-negative".into()));
        }
        Ok(())
    }
}

/// Instances with observations and the factor values that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialDataset {
    pub spec: FactorSpec,
    pub observations: Vec<Vec<f64>>,
    /// `factor_values[i][f]`: value of factor `f` for instance `i`.
    pub factor_values: Vec<Vec<usize>>,
}

impl FactorialDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn factor_count(&self) -> usize {
        self.spec.factors.len()
    }

    pub fn observation_dim(&self) -> usize {
        self.spec.observation_dim
    }

    /// Values of one factor for every instance.
    pub fn factor_column(&self, f: usize) -> Vec<usize> {
        self.factor_values.iter().map(|v| v[f]).collect()
    }
}

// one-hot → A → tanh → B, both maps drawn from the mixing seed.
struct Mixing {
    hidden: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Mixing {
    fn new(spec: &FactorSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.mixing_seed);
        let width = spec.one_hot_width();
        let hidden = spec.observation_dim;
        let a = (0..hidden * width).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scale = (1.0 / hidden as f64).sqrt();
        let b = (0..spec.observation_dim * hidden)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { hidden, a, b }
    }

    fn apply(&self, spec: &FactorSpec, values: &[usize]) -> Vec<f64> {
        let width = spec.one_hot_width();
        let mut active = Vec::with_capacity(values.len());
        let mut offset = 0;
        for (f, &v) in spec.factors.iter().zip(values) {
            active.push(offset + v);
            offset += f.value_count;
        }
        let h: Vec<f64> = (0..self.hidden)
            .map(|r| active.iter().map(|&c| self.a[r * width + c]).sum::<f64>().tanh())
            .collect();
        (0..spec.observation_dim)
            .map(|o| {
                let row = &self.b[o * self.hidden..(o + 1) * self.hidden];
                row.iter().zip(&h).map(|(w, x)| w * x).sum()
            })
            .collect()
    }
}

/// Enumerates every factor-value combination `instances_per_combination`
/// times (last factor varying fastest) and draws one observation per
/// instance.
pub fn generate_factorial<R: Rng + ?Sized>(spec: &FactorSpec, rng: &mut R) -> Result<FactorialDataset> {
    spec.validate()?;
    let combos = spec.combination_count()?;
    let total = combos
        .checked_mul(spec.instances_per_combination)
        .filter(|&n| n <= MAX_INSTANCES)
        .ok_or_else(|| Error::Size(format!("more than {MAX_INSTANCES} instances requested")))?;

    let mixing = Mixing::new(spec);
    let noise = Normal::new(0.0, spec.observation_noise_sd)
        .map_err(|e| Error::Config(format!("observation noise: {e}")))?;
    let mut observations = Vec::with_capacity(total);
    let mut factor_values = Vec::with_capacity(total);
    for c in 0..combos {
        let mut rest = c;
        let mut values = vec![0; spec.factors.len()];
        for (slot, f) in values.iter_mut().zip(&spec.factors).rev() {
            *slot = rest % f.value_count;
            rest /= f.value_count;
        }
        let clean = mixing.apply(spec, &values);
        for _ in 0..spec.instances_per_combination {
            let obs = if spec.observation_noise_sd > 0.0 {
                clean.iter().map(|v| v + noise.sample(rng)).collect()
            } else {
                clean.clone()
            };
            observations.push(obs);
            factor_values.push(values.clone());
        }
    }
    Ok(FactorialDataset { spec: spec.clone(), observations, factor_values })
}

/// Scatter of the clusters in the lower-row (noisy) golden codes, relative to
/// unit cluster spacing. Neighbouring clusters overlap, so some instances'
/// factor values cannot be recovered, while the finer structure of the XOR
/// layouts still shows up in the mutual information.
pub const NOISY_PATTERN_SCATTER: f64 = 0.35;

/// Default extra jitter for "noisy" variants requested by callers.
pub const DEFAULT_JITTER_SD: f64 = 0.05;

/// The sixteen reference codes `a`..`p`. `a`..`h` are clean; `i`..`p` are
/// scattered versions of `a`..`h` in the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoldenPattern(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// Two binary factors on a 2×2 grid.
    Grid,
    /// Two binary factors on four collinear points; the second factor is the
    /// XOR of the position bits.
    Line,
    /// One four-valued factor on a 2×2 grid.
    SingleGrid,
    /// One four-valued factor on four collinear points.
    SingleLine,
}

impl GoldenPattern {
    pub fn all() -> impl Iterator<Item = GoldenPattern> {
        (0..16).map(GoldenPattern)
    }

    pub fn from_letter(s: &str) -> Result<Self> {
        match s.as_bytes() {
            [c @ b'a'..=b'p'] => Ok(GoldenPattern(c - b'a')),
            _ => Err(Error::UnknownPattern(s.to_string())),
        }
    }

    pub fn letter(self) -> char {
        (b'a' + self.0) as char
    }

    pub fn is_noisy(self) -> bool {
        self.0 >= 8
    }

    fn base(self) -> u8 {
        self.0 % 8
    }

    fn layout(self) -> Layout {
        match self.base() {
            0 | 1 => Layout::Grid,
            2 | 3 => Layout::SingleGrid,
            4 | 5 => Layout::Line,
            _ => Layout::SingleLine,
        }
    }

    fn diagonal(self) -> bool {
        self.base() % 2 == 1
    }

    pub fn factor_count(self) -> usize {
        match self.layout() {
            Layout::Grid | Layout::Line => 2,
            Layout::SingleGrid | Layout::SingleLine => 1,
        }
    }

    /// Reference flags for this code.
    pub fn expected(self) -> ExpectedFlags {
        let (modular, compact) = match self.base() {
            0 => (true, true),
            1 => (false, false),
            2 | 3 => (true, false),
            4 => (false, true),
            5 => (false, false),
            6 => (true, true),
            _ => (true, false),
        };
        let explicit = if self.is_noisy() {
            vec![false; self.factor_count()]
        } else {
            match self.layout() {
                Layout::Grid => vec![true, true],
                Layout::SingleGrid => vec![true],
                Layout::Line => vec![true, false],
                Layout::SingleLine => vec![false],
            }
        };
        ExpectedFlags { modular, compact, explicit }
    }

    // Cluster centres with their factor values.
    fn clusters(self) -> Vec<([f64; 2], Vec<usize>)> {
        let place = |x: f64, y: f64| {
            if self.diagonal() {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                [r * (x - y), r * (x + y)]
            } else {
                [x, y]
            }
        };
        (0..4usize)
            .map(|t| {
                let (lo, hi) = ((t & 1) as f64, (t >> 1) as f64);
                match self.layout() {
                    Layout::Grid => (place(lo, hi), vec![t & 1, t >> 1]),
                    Layout::SingleGrid => (place(lo, hi), vec![t]),
                    Layout::Line => (place(t as f64, 0.0), vec![t >> 1, (t & 1) ^ (t >> 1)]),
                    Layout::SingleLine => (place(t as f64, 0.0), vec![t]),
                }
            })
            .collect()
    }
}

/// Which criteria a reference code satisfies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedFlags {
    pub modular: bool,
    /// Carried for completeness; no metric here measures compactness.
    pub compact: bool,
    /// Per factor: whether a linear read-out recovers its values.
    pub explicit: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCode {
    pub pattern: GoldenPattern,
    pub points: Vec<[f64; 2]>,
    /// `factor_values[i][f]`.
    pub factor_values: Vec<Vec<usize>>,
    pub expected: ExpectedFlags,
}

impl GoldenCode {
    pub fn factor_column(&self, f: usize) -> Vec<usize> {
        self.factor_values.iter().map(|v| v[f]).collect()
    }

    pub fn codes(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.to_vec()).collect()
    }
}

/// Draws `points_per_cluster` points around each cluster centre of
/// `pattern`. Lower-row patterns add their intrinsic scatter; `jitter_sd`
/// adds further isotropic noise to every point.
pub fn generate_golden_code<R: Rng + ?Sized>(
    pattern: GoldenPattern,
    points_per_cluster: usize,
    jitter_sd: f64,
    rng: &mut R,
) -> Result<GoldenCode> {
    if points_per_cluster == 0 {
        return Err(Error::Config("points_per_cluster must be positive".into()));
    }
    if !(jitter_sd.is_finite() && jitter_sd >= 0.0) {
        return Err(Error::Config(format!("jitter_sd must be non-negative, got {jitter_sd}")));
    }
    let scatter = if pattern.is_noisy() { NOISY_PATTERN_SCATTER } else { 0.0 };
    let sd = (scatter * scatter + jitter_sd * jitter_sd).sqrt();
    let mut points = Vec::new();
    let mut factor_values = Vec::new();
    for (centre, values) in pattern.clusters() {
        for _ in 0..points_per_cluster {
            let mut p = centre;
            if sd > 0.0 {
                for c in &mut p {
                    *c += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            points.push(p);
            factor_values.push(values.clone());
        }
    }
    Ok(GoldenCode { pattern, points, factor_values, expected: pattern.expected() })
}
