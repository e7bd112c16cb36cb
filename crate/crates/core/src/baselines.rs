//! Triplet-loss baseline over all valid triplets of a batch.

use crate::error::{Error, Result};
use crate::floss::LabeledEmbeddingBatch;

/// Margin that the triplet baseline uses by default.
pub const DEFAULT_TRIPLET_MARGIN: f64 = 0.1;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_margin(margin: f64) -> Result<()> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::Config(format!("triplet margin must be non-negative, got {margin}")));
    }
    Ok(())
}

// Calls `f(anchor, positive, negative)` for every valid triplet in a fixed
// order and returns how many there were.
fn for_each_triplet(batch: &LabeledEmbeddingBatch, mut f: impl FnMut(usize, usize, usize)) -> usize {
    let labels = batch.labels();
    let mut count = 0;
    for a in 0..labels.len() {
        for p in 0..labels.len() {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..labels.len() {
                if labels[n] != labels[a] {
                    f(a, p, n);
                    count += 1;
                }
            }
        }
    }
    count
}

/// Mean of `max(0, ‖a−p‖ − ‖a−n‖ + margin)` over all triplets, with plain
/// Euclidean distances.
pub fn triplet_loss(batch: &LabeledEmbeddingBatch, margin: f64) -> Result<f64> {
    Ok(triplet_loss_with_grad(batch, margin)?.0)
}

/// Subgradient of [`triplet_loss`], one row per embedding.
pub fn triplet_loss_grad(batch: &LabeledEmbeddingBatch, margin: f64) -> Result<Vec<Vec<f64>>> {
    let (_, grad) = triplet_loss_with_grad(batch, margin)?;
    Ok(grad.chunks(batch.dim()).map(<[f64]>::to_vec).collect())
}

/// Loss and flat row-major gradient. At coincident points the distance
/// gradient is taken to be zero.
pub fn triplet_loss_with_grad(batch: &LabeledEmbeddingBatch, margin: f64) -> Result<(f64, Vec<f64>)> {
    check_margin(margin)?;
    let dim = batch.dim();
    let mut total = 0.0;
    let mut grad = vec![0.0; batch.len() * dim];
    let add_unit = |grad: &mut [f64], from: usize, to: usize, dist: f64, sign: f64| {
        if dist == 0.0 {
            return;
        }
        let (zf, zt) = (batch.row(from), batch.row(to));
        for k in 0..dim {
            let u = sign * (zf[k] - zt[k]) / dist;
            grad[from * dim + k] += u;
            grad[to * dim + k] -= u;
        }
    };
    let count = for_each_triplet(batch, |a, p, n| {
        let dp = distance(batch.row(a), batch.row(p));
        let dn = distance(batch.row(a), batch.row(n));
        let hinge = dp - dn + margin;
        if hinge > 0.0 {
            total += hinge;
            add_unit(&mut grad, a, p, dp, 1.0);
            add_unit(&mut grad, a, n, dn, -1.0);
        }
    });
    if count == 0 {
        return Err(Error::EmptyTriplets);
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}
