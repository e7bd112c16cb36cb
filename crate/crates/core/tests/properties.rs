mod support;

use std::collections::BTreeMap;

use fsembed::baselines::triplet_loss;
use fsembed::floss::{f_loss, FLossConfig, LabeledEmbeddingBatch};
use fsembed::metrics::{mutual_information, recall_at_k, roc_auc};
use fsembed::sampling::{
    conjunction_labels, sample_class_episode, ClassPool, FactorEpisodeSampler, OracleKind,
};
use fsembed::synthdata::{generate_factorial, FactorSpec};
use fsembed::Label;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{axis_separated_batch, random_batch, rel_gap, rotate};

fn batch_strategy() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 2usize..=4, 2usize..=6, 1usize..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_loss_translation_invariant((seed, classes, per, dim) in batch_strategy(), shift in prop::collection::vec(-50.0f64..50.0, 5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, classes, per, dim);
        let d = 1 + (seed as usize) % dim;
        let cfg = FLossConfig::new(d);
        let moved: Vec<Vec<f64>> = (0..batch.len())
            .map(|i| batch.row(i).iter().zip(&shift).map(|(v, s)| v + s).collect())
            .collect();
        let moved = LabeledEmbeddingBatch::new(&moved, batch.labels().to_vec()).unwrap();
        let (a, b) = (f_loss(&batch, &cfg).unwrap(), f_loss(&moved, &cfg).unwrap());
        prop_assert!(rel_gap(a, b) < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn f_loss_permutation_invariant((seed, classes, per, dim) in batch_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, classes, per, dim);
        let cfg = FLossConfig::new(1);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| batch.row(i).to_vec()).collect();
        let labels: Vec<Label> = order.iter().map(|&i| batch.labels()[i]).collect();
        let shuffled = LabeledEmbeddingBatch::new(&rows, labels).unwrap();
        let (a, b) = (f_loss(&batch, &cfg).unwrap(), f_loss(&shuffled, &cfg).unwrap());
        prop_assert!(rel_gap(a, b) < 1e-9);
    }

    #[test]
    fn triplet_loss_rotation_invariant(seed in any::<u64>(), theta in 0.0f64..6.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, 3, 4, 2);
        let rows: Vec<Vec<f64>> = (0..batch.len()).map(|i| batch.row(i).to_vec()).collect();
        let turned = LabeledEmbeddingBatch::new(&rotate(&rows, theta), batch.labels().to_vec()).unwrap();
        let (a, b) = (triplet_loss(&batch, 0.1).unwrap(), triplet_loss(&turned, 0.1).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn f_loss_non_negative((seed, classes, per, dim) in batch_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, classes, per, dim);
        prop_assert!(f_loss(&batch, &FLossConfig::new(dim)).unwrap() >= 0.0);
    }

    #[test]
    fn mutual_information_symmetric_and_bounded(a in prop::collection::vec(0usize..5, 1..80), salt in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        let b: Vec<usize> = a.iter().map(|&x| if rand::Rng::random_bool(&mut rng, 0.3) { rand::Rng::random_range(&mut rng, 0..4) } else { x % 3 }).collect();
        let ab = mutual_information(&a, &b).unwrap();
        let ba = mutual_information(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= mutual_information(&a, &a).unwrap() + 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_maps(scores in prop::collection::vec(-5.0f64..5.0, 4..60), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<bool> = scores.iter().map(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let mapped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&mapped, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn recall_monotone_in_k(seed in any::<u64>(), n in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refs = support::gaussian_rows(&mut rng, n, 3);
        let queries = support::gaussian_rows(&mut rng, 10, 3);
        let rl: Vec<Label> = (0..n).map(|i| Label((i % 3) as u32)).collect();
        let ql: Vec<Label> = (0..10).map(|i| Label((i % 4) as u32)).collect();
        let mut last = 0.0;
        for k in 1..=n {
            let r = recall_at_k(&refs, &rl, &queries, &ql, k).unwrap();
            prop_assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn class_episodes_respect_limits(seed in any::<u64>(), max_labels in 2usize..10, max_per in 2usize..8) {
        let mut spec = FactorSpec::desk_scale();
        spec.instances_per_combination = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = generate_factorial(&spec, &mut rng).unwrap();
        let labels = conjunction_labels(&ds);
        let pool: Vec<usize> = (0..ds.len()).filter(|i| i % 5 != 0).collect();
        let cp = ClassPool::new(OracleKind::Conjunction, &labels, &pool).unwrap();
        let ep = sample_class_episode(&cp, max_labels, max_per, &mut rng).unwrap();
        let mut per: BTreeMap<Label, usize> = BTreeMap::new();
        for (&i, &l) in ep.indices.iter().zip(&ep.labels) {
            prop_assert!(pool.contains(&i));
            prop_assert_eq!(labels[i], l);
            *per.entry(l).or_default() += 1;
        }
        prop_assert!(per.len() >= 2 && per.len() <= max_labels);
        prop_assert!(per.values().all(|&c| (2..=max_per).contains(&c)));
        let mut uniq = ep.indices.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), ep.indices.len());
    }

    #[test]
    fn factor_episodes_group_by_one_factor(seed in any::<u64>(), max_per in 2usize..6) {
        let mut spec = FactorSpec::desk_scale();
        spec.instances_per_combination = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = generate_factorial(&spec, &mut rng).unwrap();
        let pool: Vec<usize> = (0..ds.len()).collect();
        let factors = spec.class_factor_indices();
        let mut s = FactorEpisodeSampler::new(&ds, &pool, &factors, 12, max_per).unwrap();
        for step in 0..9 {
            let ep = s.sample(&mut rng).unwrap();
            let f = ep.provenance.factor.unwrap();
            prop_assert_eq!(f, factors[step % factors.len()]);
            for (&i, l) in ep.indices.iter().zip(&ep.labels) {
                prop_assert_eq!(ds.factor_values[i][f] as u32, l.0);
            }
            prop_assert!(ep.label_count() >= 2);
        }
    }
}

#[test]
fn t_squared_equals_f_statistic() {
    let worst = support::t_squared_worst(300, 21);
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn rotation_changes_f_loss_but_not_triplet() {
    let (rows, labels) = axis_separated_batch();
    let turned = rotate(&rows, std::f64::consts::FRAC_PI_4);
    let a = LabeledEmbeddingBatch::new(&rows, labels.clone()).unwrap();
    let b = LabeledEmbeddingBatch::new(&turned, labels).unwrap();
    let cfg = FLossConfig::new(1);
    assert!((f_loss(&a, &cfg).unwrap() - f_loss(&b, &cfg).unwrap()).abs() > 1e-3);
    assert!((triplet_loss(&a, 0.1).unwrap() - triplet_loss(&b, 0.1).unwrap()).abs() < 1e-9);
}
