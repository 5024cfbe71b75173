use std::collections::BTreeSet;

use bmf::data::sample_negatives;
use bmf::loss::{batch_loss, bce_negative, bce_positive, bcl_negative, bcl_positive};
use bmf::metrics::{average_precision, hit_ratio, EvalSet};
use bmf::model::{drug_latent, init_params, neighbor_set};
use bmf::synthetic::BlockSpec;
use bmf::train::{objective, Optimizer, OptimizerKind};
use bmf::{
    forward, make_folds, prune_empty, score_all, training_view, Activation, Architecture, AssociationMatrix,
    DenseMatrix, Hyperparams, InputMode, Label, LossConfig, LossKind, Model, SamplePair,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(m: usize, n: usize, density: f64, seed: u64) -> AssociationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..m).map(|i| (i, rng.random_range(0..n))).collect();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(density) {
                pairs.push((i, j));
            }
        }
    }
    AssociationMatrix::from_parts(
        (0..m).map(|i| format!("d{i}")).collect(),
        (0..n).map(|j| format!("s{j}")).collect(),
        pairs,
    )
    .unwrap()
}

fn randomize(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.weights.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_partition_positives(m in 3usize..15, n in 3usize..15, k in 2usize..6, seed in any::<u64>()) {
        let mat = random_matrix(m, n, 0.3, seed);
        prop_assume!(mat.num_positives() >= k);
        let plan = make_folds(&mat, k, seed).unwrap();
        let all: BTreeSet<_> = mat.positives().collect();
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..k {
            let held: BTreeSet<_> = plan.fold_positives(f).into_iter().collect();
            let view: BTreeSet<_> = match training_view(&mat, &plan, f) {
                Ok(v) => v.positives().collect(),
                Err(_) => BTreeSet::new(),
            };
            prop_assert!(view.is_disjoint(&held));
            prop_assert_eq!(view.union(&held).copied().collect::<BTreeSet<_>>(), all.clone());
        }
    }

    #[test]
    fn negatives_are_distinct_non_positives(seed in any::<u64>(), count in 1usize..20) {
        let mat = random_matrix(8, 12, 0.3, seed);
        for i in 0..8 {
            let Ok(neg) = sample_negatives(&mat, i, count, seed ^ i as u64) else { continue };
            let set: BTreeSet<_> = neg.iter().copied().collect();
            prop_assert_eq!(set.len(), neg.len());
            prop_assert!(neg.iter().all(|&j| !mat.contains(i, j)));
            prop_assert_eq!(neg.len(), count.min(12 - mat.drug_row(i).len()));
        }
    }

    #[test]
    fn prune_is_idempotent(seed in any::<u64>()) {
        let spec = BlockSpec { drugs: 30, diseases: 20, blocks: 3, density: 0.05, cover: false, seed, ..Default::default() };
        let mat = spec.generate().unwrap();
        let once = prune_empty(&mat).unwrap();
        prop_assert_eq!(prune_empty(&once).unwrap(), once);
    }

    #[test]
    fn batch_scores_match_forward(seed in any::<u64>(), one_hot in any::<bool>(), mask in any::<bool>()) {
        let mat = random_matrix(10, 8, 0.25, seed);
        let hp = Hyperparams {
            latent_dim: 6,
            neighbor_cap: 3,
            input_mode: if one_hot { InputMode::OneHot } else { InputMode::Behavior },
            mask_target: mask,
            ..Default::default()
        };
        let mut p = init_params(&hp, 10, 8, seed).unwrap();
        p.b1.iter_mut().for_each(|b| *b = 0.1);
        let all = score_all(&p, &hp, &mat).unwrap();
        for i in 0..10 {
            for j in 0..8 {
                let f = forward(&p, &hp, &mat, i, j).unwrap().score;
                prop_assert!((all.get(i, j) - f).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn neighbors_exclude_the_drug(seed in any::<u64>(), cap in 0usize..6) {
        let mat = random_matrix(10, 8, 0.4, seed);
        for i in 0..10 {
            for j in 0..8 {
                let nb = neighbor_set(&mat, i, j, cap);
                prop_assert!(!nb.contains(&i));
                prop_assert!(nb.len() <= cap);
                prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(nb.iter().all(|&t| mat.contains(t, j)));
            }
        }
    }

    #[test]
    fn full_fusion_weight_ignores_neighbors(seed in any::<u64>()) {
        let mat = random_matrix(10, 8, 0.3, seed);
        let (i, j) = (0, mat.drug_row(1).first().copied().unwrap_or(0));
        // Give every other drug extra diseases; neither row i nor column j changes.
        let mut pairs: Vec<(usize, usize)> = mat.positives().collect();
        for t in 1..10 {
            pairs.extend((0..8).filter(|&u| u != j).map(|u| (t, u)));
        }
        let busier = AssociationMatrix::from_parts(mat.drug_ids().to_vec(), mat.disease_ids().to_vec(), pairs).unwrap();
        prop_assume!(busier.drug_row(i) == mat.drug_row(i) && busier.disease_col(j) == mat.disease_col(j));
        let hp = Hyperparams { latent_dim: 5, fusion_weight: 1.0, ..Default::default() };
        let mut p = init_params(&hp, 10, 8, seed).unwrap();
        p.b1.iter_mut().for_each(|b| *b = 0.2);
        let a = forward(&p, &hp, &mat, i, j).unwrap().score;
        let b = forward(&p, &hp, &busier, i, j).unwrap().score;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn one_hot_is_embedding_lookup(seed in any::<u64>(), sigmoid in any::<bool>()) {
        let mat = random_matrix(7, 5, 0.3, seed);
        let act = if sigmoid { Activation::Sigmoid } else { Activation::Relu };
        let hp = Hyperparams { latent_dim: 4, input_mode: InputMode::OneHot, activation: act, ..Default::default() };
        let mut p = init_params(&hp, 7, 5, seed).unwrap();
        p.b1 = vec![0.05, -0.1, 0.2, 0.0];
        for i in 0..7 {
            let d = drug_latent(&p, &hp, &mat, i).unwrap();
            let expect: Vec<f64> = p.w1.row(i).iter().zip(&p.b1).map(|(w, b)| act.apply(w + b)).collect();
            prop_assert_eq!(d, expect);
        }
    }

    #[test]
    fn bcl_reduces_to_half_bce(pos in prop::collection::vec(1e-6f64..1.0 - 1e-6, 1..5), neg in prop::collection::vec(1e-6f64..1.0 - 1e-6, 0..10)) {
        let cfg = LossConfig { alpha: 0.5, gamma: 0.0, margin: 0.0, kind: LossKind::Bcl };
        for &p in &pos {
            prop_assert!((bcl_positive(p, &cfg).unwrap().0 - 0.5 * bce_positive(p).unwrap().0).abs() <= 1e-12);
        }
        for &p in &neg {
            prop_assert!((bcl_negative(p, &cfg).unwrap().0 - 0.5 * bce_negative(p).unwrap().0).abs() <= 1e-12);
        }
    }

    #[test]
    fn filtered_negatives_are_inert(alpha in 0.01f64..0.99, gamma in 0.0f64..4.0, margin in 1e-6f64..0.9, frac in 0.0f64..=1.0) {
        let cfg = LossConfig { alpha, gamma, margin, kind: LossKind::Bcl };
        let p = margin * frac;
        prop_assert_eq!(bcl_negative(p, &cfg).unwrap(), (0.0, 0.0));
        let bl = batch_loss(&[0.5], &[p, 0.9], &cfg).unwrap();
        prop_assert_eq!(bl.negative_grads[0], 0.0);
    }

    #[test]
    fn hit_ratio_at_full_cutoff_is_one(seed in any::<u64>()) {
        let mat = random_matrix(6, 7, 0.3, seed);
        let plan = make_folds(&mat, 2, seed).unwrap();
        let Ok(view) = training_view(&mat, &plan, 0) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = DenseMatrix::from_vec(6, 7, (0..42).map(|_| rng.random_range(0..4) as f64).collect());
        let set = EvalSet::new(&scores, &view, &plan.fold_positives(0)).unwrap();
        prop_assert_eq!(hit_ratio(&set, 7), 1.0);
    }
}

const FD_STEP: f64 = 1e-6;
const FD_FLOOR: f64 = 1e-4;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Twenty random pairs, positives with sampled negatives and standalone
    /// negatives, checked against central differences.
    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), g in 0.0f64..=1.0, mask in any::<bool>()) {
        let mat = random_matrix(20, 15, 0.12, seed);
        let hp = Hyperparams { latent_dim: 8, neighbor_cap: 3, fusion_weight: g, mask_target: mask, ..Default::default() };
        let mut model = Model::init(Architecture::Bmf, &hp, 20, 15, seed).unwrap();
        randomize(&mut model, seed ^ 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let positives: Vec<(usize, usize)> = mat.positives().collect();
        let mut samples = Vec::new();
        while samples.len() < 20 {
            if rng.random_bool(0.5) {
                let (i, j) = positives[rng.random_range(0..positives.len())];
                samples.push(SamplePair::positive(&mat, i, j, 2, &mut rng).unwrap());
            } else {
                let (i, j) = (rng.random_range(0..20), rng.random_range(0..15));
                if !mat.contains(i, j) {
                    samples.push(SamplePair { drug: i, disease: j, label: Label::Negative, negatives: vec![] });
                }
            }
        }
        let loss = LossConfig::default();
        let (_, grads) = objective(&model, &mat, &samples, &loss).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (t, grad) in analytic.iter().enumerate() {
            for (k, &a) in grad.iter().enumerate() {
                let orig = model.weights.tensors()[t][k];
                model.weights.tensors_mut()[t][k] = orig + FD_STEP;
                let plus = objective(&model, &mat, &samples, &loss).unwrap().0;
                model.weights.tensors_mut()[t][k] = orig - FD_STEP;
                let minus = objective(&model, &mat, &samples, &loss).unwrap().0;
                model.weights.tensors_mut()[t][k] = orig;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
                prop_assert!(rel < 1e-5, "tensor {} entry {}: analytic {} numeric {}", t, k, a, numeric);
            }
        }
    }

    #[test]
    fn sgd_step_descends(seed in any::<u64>(), mf in any::<bool>()) {
        let mat = random_matrix(12, 9, 0.2, seed);
        let hp = Hyperparams { latent_dim: 6, neighbor_cap: 3, ..Default::default() };
        let arch = if mf { Architecture::Mf } else { Architecture::Bmf };
        let mut model = Model::init(arch, &hp, 12, 9, seed).unwrap();
        randomize(&mut model, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<SamplePair> = mat
            .positives()
            .map(|(i, j)| SamplePair::positive(&mat, i, j, 3, &mut rng).unwrap())
            .collect();
        let loss = LossConfig { margin: 0.0, ..Default::default() };
        let (before, grads) = objective(&model, &mat, &samples, &loss).unwrap();
        let norm: f64 = grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum();
        prop_assume!(norm > 1e-6);
        let sizes: Vec<usize> = grads.tensors().iter().map(|t| t.len()).collect();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-6, 0.0, &sizes);
        opt.step(model.weights.tensors_mut(), grads.tensors()).unwrap();
        let after = objective(&model, &mat, &samples, &loss).unwrap().0;
        prop_assert!(after < before, "{} -> {}", before, after);
    }
}

fn ranked_list_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let total = labels.iter().filter(|&&l| l).count();
    let (mut hits, mut sum) = (0, 0.0);
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / total as f64
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (k, &x) in items.iter().enumerate() {
        let rest: Vec<usize> = items.iter().enumerate().filter(|&(r, _)| r != k).map(|(_, &v)| v).collect();
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

#[test]
fn ap_mean_over_all_720_orderings() {
    let labels = [true, true, false, false, false, false];
    let perms = permutations(&[0, 1, 2, 3, 4, 5]);
    assert_eq!(perms.len(), 720);
    let (mut ours, mut oracle) = (0.0, 0.0);
    for p in &perms {
        let scores: Vec<f64> = p.iter().map(|&r| 1.0 - r as f64 / 10.0).collect();
        ours += average_precision(&scores, &labels);
        oracle += ranked_list_ap(&scores, &labels);
    }
    assert!((ours / 720.0 - oracle / 720.0).abs() <= 1e-12);
    // Exhaustive value: positives at ranks a < b, AP = (1/a + 2/b) / 2 averaged over the 15 rank pairs.
    let mut closed = 0.0;
    for a in 1..=6 {
        for b in a + 1..=6 {
            closed += (1.0 / a as f64 + 2.0 / b as f64) / 2.0;
        }
    }
    assert!((ours / 720.0 - closed / 15.0).abs() <= 1e-12);
}

#[test]
fn gottlieb_sized_folds() {
    let mat = BlockSpec { drugs: 593, diseases: 313, blocks: 7, density: 1933.0 / (593.0 * 313.0), seed: 5, ..Default::default() }
        .generate()
        .unwrap();
    assert_eq!(mat.num_positives(), 1933);
    let mut sizes = make_folds(&mat, 5, 0).unwrap().fold_sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(sizes, vec![387, 387, 387, 386, 386]);
}
