//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code)]

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `I(x; a, b)` at every point of an ascending grid, by quadrature.
///
/// Substituting `u = t^a` removes the `t^(a-1)` singularity at 0:
/// `∫₀ˣ t^(a-1) (1-t)^(b-1) dt = (1/a) ∫₀^(x^a) (1 - u^(1/a))^(b-1) du`.
/// The integral is accumulated piece by piece along the grid and normalized
/// by the same quadrature over `[0, 1]`, so no beta function is involved.
pub fn inc_beta_oracle(grid: &[f64], a: f64, b: f64) -> Vec<f64> {
    let g = |u: f64| (1.0 - u.powf(1.0 / a)).max(0.0).powf(b - 1.0) / a;
    let tol = 1e-16;
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &x in grid {
        let u = x.powf(a);
        acc += simpson(&g, prev, u, tol);
        prev = u;
        out.push(acc);
    }
    let total = acc + simpson(&g, prev, 1.0, tol);
    out.iter().map(|v| v / total).collect()
}

/// ln Γ(x) from the Stirling series after shifting the argument above 30.
pub fn log_gamma_oracle(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    let mut prod = 1.0;
    while z < 30.0 {
        prod *= z;
        z += 1.0;
        if prod > 1e250 {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    shift += prod.ln();
    // Bernoulli terms B_{2k} / (2k (2k-1) z^(2k-1)).
    let coeffs = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360360.0,
        1.0 / 156.0,
        -3617.0 / 122400.0,
    ];
    let z2 = z * z;
    let mut series = 0.0;
    let mut pow = z;
    for c in coeffs {
        series += c / pow;
        pow *= z2;
    }
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// Central difference with two Richardson extrapolation steps (error O(h⁶)).
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (d1, d2, d4) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Step for differencing `I(x; a, b)`: a small fraction of the scale on which
/// the log density changes, kept inside (0, 1).
pub fn inc_beta_step(x: f64, a: f64, b: f64) -> f64 {
    let curvature = (a - 1.0).abs() / x + (b - 1.0).abs() / (1.0 - x) + 1.0;
    (0.05 / curvature).min(0.5 * x.min(1.0 - x))
}

/// Numerical gradient of `f` at `x` by central differences per coordinate.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate error of `analytic` against `numeric`, relative to the
/// larger of each coordinate and a floor at 1e-3 of the numeric gradient's
/// largest entry (so near-zero coordinates are compared on the overall scale).
pub fn gradient_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Squared pooled-variance two-sample t statistic.
pub fn pooled_t_squared(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (ss(a, ma) + ss(b, mb)) / (na + nb - 2.0);
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    t * t
}

use fsembed::baselines::{triplet_loss, triplet_loss_grad};
use fsembed::encoder::EncoderModel;
use fsembed::floss::{build_separation_table, f_loss, f_loss_grad, FLossConfig, LabeledEmbeddingBatch};
use fsembed::specfun::{reg_inc_beta, reg_inc_beta_dx, BetaParams};
use fsembed::Label;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

/// Random labelled batch: `classes` classes of 2..=`max_per` members each,
/// class means offset by a random shift.
pub fn random_batch(rng: &mut ChaCha8Rng, classes: usize, max_per: usize, dim: usize) -> LabeledEmbeddingBatch {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let shift: Vec<f64> = (0..dim).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..rng.random_range(2..=max_per) {
            rows.push(shift.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect());
            labels.push(Label(c as u32 * 7 + 3));
        }
    }
    LabeledEmbeddingBatch::new(&rows, labels).unwrap()
}

fn selections(batch: &LabeledEmbeddingBatch, d: usize) -> Vec<Vec<usize>> {
    let t = build_separation_table(batch).unwrap();
    (0..t.pairs.len()).map(|p| t.selected(p, d).unwrap()).collect()
}

fn rebatch(dim: usize, flat: &[f64], labels: &[Label]) -> LabeledEmbeddingBatch {
    LabeledEmbeddingBatch::from_flat(dim, flat.to_vec(), labels.to_vec()).unwrap()
}

const FD_STEP: f64 = 1e-6;

/// Worst relative error of `reg_inc_beta_dx` against finite differences over
/// `configs` random `(x, a, b)`.
pub fn inc_beta_dx_worst(configs: usize, seed: u64) -> f64 {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let a = rng.random_range(0.2..20.0);
        let b = rng.random_range(0.2..60.0);
        let x: f64 = rng.random_range(0.02..0.98);
        let p = BetaParams::new(a, b).unwrap();
        let q = BetaParams::new(b, a).unwrap();
        let h = inc_beta_step(x, a, b);
        let fd = if reg_inc_beta(x, p).unwrap() <= 0.5 {
            derivative(|t| reg_inc_beta(t, p).unwrap(), x, h)
        } else {
            derivative(|t| -reg_inc_beta(1.0 - t, q).unwrap(), x, h)
        };
        let got = reg_inc_beta_dx(x, p).unwrap();
        if got < 1e-250 {
            continue;
        }
        worst = worst.max((got - fd).abs() / fd.abs());
    }
    worst
}

/// Worst relative error of `f_loss_grad` over `configs` random batches.
/// Batches where a finite-difference step would change which dimensions are
/// selected are redrawn.
pub fn floss_grad_worst(configs: usize, seed: u64) -> f64 {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < configs {
        let dim = rng.random_range(2..=6);
        let d = rng.random_range(1..=dim);
        let batch = {
            let classes = rng.random_range(2..=4);
            random_batch(&mut rng, classes, 6, dim)
        };
        let cfg = FLossConfig::new(d);
        let labels = batch.labels().to_vec();
        let base = selections(&batch, d);
        let flat = batch.as_flat().to_vec();
        let stable = (0..flat.len()).all(|i| {
            [FD_STEP, -FD_STEP].iter().all(|h| {
                let mut w = flat.clone();
                w[i] += h;
                selections(&rebatch(dim, &w, &labels), d) == base
            })
        });
        if !stable {
            continue;
        }
        let analytic: Vec<f64> = f_loss_grad(&batch, &cfg).unwrap().concat();
        let numeric = numeric_gradient(|z| f_loss(&rebatch(dim, z, &labels), &cfg).unwrap(), &flat, FD_STEP);
        worst = worst.max(gradient_rel_error(&analytic, &numeric));
        done += 1;
    }
    worst
}

fn near_hinge(batch: &LabeledEmbeddingBatch, margin: f64, eps: f64) -> bool {
    let dist = |i: usize, j: usize| {
        batch.row(i).iter().zip(batch.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let l = batch.labels();
    (0..batch.len()).any(|a| {
        (0..batch.len()).filter(|&p| p != a && l[p] == l[a]).any(|p| {
            (0..batch.len()).filter(|&n| l[n] != l[a]).any(|n| (dist(a, p) - dist(a, n) + margin).abs() < eps)
        })
    })
}

/// Worst relative error of `triplet_loss_grad` over `configs` random batches,
/// redrawing batches with a triplet too close to the hinge.
pub fn triplet_grad_worst(configs: usize, seed: u64) -> f64 {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < configs {
        let dim = rng.random_range(1..=5);
        let margin = rng.random_range(0.05..2.0);
        let batch = {
            let classes = rng.random_range(2..=4);
            random_batch(&mut rng, classes, 5, dim)
        };
        if near_hinge(&batch, margin, 1e-4) {
            continue;
        }
        let labels = batch.labels().to_vec();
        let flat = batch.as_flat().to_vec();
        let analytic: Vec<f64> = triplet_loss_grad(&batch, margin).unwrap().concat();
        let numeric = numeric_gradient(|z| triplet_loss(&rebatch(dim, z, &labels), margin).unwrap(), &flat, FD_STEP);
        worst = worst.max(gradient_rel_error(&analytic, &numeric));
        done += 1;
    }
    worst
}

#[derive(Clone, Copy, Debug)]
pub enum EndToEnd {
    Fstat,
    Triplet,
}

/// Worst relative error of encoder parameter gradients (loss backpropagated
/// through the network) over `configs` random nets and batches.
pub fn encoder_grad_worst(kind: EndToEnd, configs: usize, seed: u64) -> f64 {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < configs {
        let input = rng.random_range(2..=5);
        let hidden = rng.random_range(3..=8);
        let out = rng.random_range(2..=4);
        let model = EncoderModel::initialize(&[input, hidden, out], rng.random()).unwrap();
        let proto = {
            let classes = rng.random_range(2..=3);
            random_batch(&mut rng, classes, 5, input)
        };
        let labels = proto.labels().to_vec();
        let obs: Vec<Vec<f64>> = (0..proto.len()).map(|i| proto.row(i).to_vec()).collect();
        let d = rng.random_range(1..=out);
        let margin = 0.5;
        let loss_at = |params: &[f64]| {
            let mut m = model.clone();
            m.set_parameters(params).unwrap();
            let z = m.forward(&obs).unwrap();
            let b = LabeledEmbeddingBatch::new(&z, labels.clone()).unwrap();
            match kind {
                EndToEnd::Fstat => f_loss(&b, &FLossConfig::new(d)).unwrap(),
                EndToEnd::Triplet => triplet_loss(&b, margin).unwrap(),
            }
        };
        let z = model.forward(&obs).unwrap();
        let batch = LabeledEmbeddingBatch::new(&z, labels.clone()).unwrap();
        let unstable = match kind {
            EndToEnd::Fstat => {
                // Redraw when a parameter step would change the selected dimensions.
                let base = selections(&batch, d);
                let params = model.parameters();
                !(0..params.len()).all(|i| {
                    [FD_STEP, -FD_STEP].iter().all(|h| {
                        let mut p = params.clone();
                        p[i] += h;
                        let mut m = model.clone();
                        m.set_parameters(&p).unwrap();
                        let b = LabeledEmbeddingBatch::new(&m.forward(&obs).unwrap(), labels.clone()).unwrap();
                        selections(&b, d) == base
                    })
                })
            }
            EndToEnd::Triplet => near_hinge(&batch, margin, 1e-4),
        };
        if unstable {
            continue;
        }
        let upstream = match kind {
            EndToEnd::Fstat => f_loss_grad(&batch, &FLossConfig::new(d)).unwrap(),
            EndToEnd::Triplet => triplet_loss_grad(&batch, margin).unwrap(),
        };
        let analytic = model.backward(&obs, &upstream).unwrap().to_vec();
        let numeric = numeric_gradient(loss_at, &model.parameters(), FD_STEP);
        worst = worst.max(gradient_rel_error(&analytic, &numeric));
        done += 1;
    }
    worst
}

/// Worst relative gap between `f_statistic_per_dim` and the squared pooled t
/// statistic over `batches` random two-class one-dimensional batches.
pub fn t_squared_worst(batches: usize, seed: u64) -> f64 {
    use fsembed::floss::f_statistic_per_dim;
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..batches {
        let na = rng.random_range(2..=30);
        let nb = rng.random_range(2..=30);
        let shift = rng.random_range(-3.0..3.0);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let a: Vec<f64> = (0..na).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..nb).map(|_| scale * (shift + rng.sample::<f64, _>(StandardNormal))).collect();
        let rows: Vec<Vec<f64>> = a.iter().chain(&b).map(|&v| vec![v]).collect();
        let labels: Vec<Label> = (0..na + nb).map(|i| Label(u32::from(i >= na))).collect();
        let batch = LabeledEmbeddingBatch::new(&rows, labels).unwrap();
        let f = f_statistic_per_dim(&batch, Label(0), Label(1), 0).unwrap();
        let t2 = pooled_t_squared(&a, &b);
        worst = worst.max((f - t2).abs() / t2.abs().max(1e-300));
    }
    worst
}

pub fn rotate(rows: &[Vec<f64>], theta: f64) -> Vec<Vec<f64>> {
    let (s, c) = theta.sin_cos();
    rows.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect()
}

/// Two classes separated along the first axis with a little spread on both.
pub fn axis_separated_batch() -> (Vec<Vec<f64>>, Vec<Label>) {
    let rows = vec![
        vec![0.0, 0.3],
        vec![0.2, -0.4],
        vec![-0.1, 0.1],
        vec![0.9, 0.2],
        vec![1.0, -0.3],
        vec![0.7, 0.0],
    ];
    let labels = vec![Label(0), Label(0), Label(0), Label(1), Label(1), Label(1)];
    (rows, labels)
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
