mod common;

use common::checks::{self, random_matrix};
use fairloop_core::gbdt::{
    normalize_weights, train, train_with_trace, FeatureWeightMode,
    FeatureWeights, GbdtParams, InstanceWeights, Model,
};
use fairloop_core::Outcome;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn gradients_match_finite_differences(m in -8.0f64..8.0, y in 0u8..2, w in 0.1f64..5.0) {
        if let Err(e) = checks::grad_hess_point(m, y as f64, w) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn boosting_loss_never_increases(seed in any::<u64>(), lr in 0.05f64..=1.0, depth in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 40, 3, 6);
        let params = GbdtParams { n_trees: 15, max_depth: depth, learning_rate: lr, colsample_bytree: 1.0, min_child_weight: 0.0, ..GbdtParams::default() };
        let iw = InstanceWeights::new((0..40).map(|_| rng.gen_range(0.2..3.0)).collect()).unwrap();
        let (_, trace) = train_with_trace(&m, &params, &iw, &FeatureWeights::uniform(m.group_names())).unwrap();
        let mut prev = trace.initial_loss;
        for l in trace.loss_per_round {
            prop_assert!(l <= prev + 1e-12, "{l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn zero_weight_group_is_never_split(seed in any::<u64>(), colsample in 0.2f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 30, 4, 5);
        let raw = [("f0", 1.0), ("f1", 0.0), ("f2", 2.0), ("f3", 0.5)]
            .into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let fw = normalize_weights(&raw).unwrap();
        for mode in [FeatureWeightMode::Sampling] {
            let params = GbdtParams { n_trees: 10, max_depth: 3, colsample_bytree: colsample, min_child_weight: 0.0, feature_weight_mode: mode, seed, ..GbdtParams::default() };
            let model = train(&m, &params, &InstanceWeights::uniform(30), &fw).unwrap();
            prop_assert!(!model.split_columns().contains(&1));
        }
    }

    #[test]
    fn model_json_round_trips_bit_exactly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 25, 3, 7);
        let params = GbdtParams { n_trees: 4, max_depth: 3, learning_rate: 0.37, seed, ..GbdtParams::default() };
        let model = train(&m, &params, &InstanceWeights::uniform(25), &FeatureWeights::uniform(m.group_names())).unwrap();
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        for r in 0..25 {
            let row = m.row(r);
            prop_assert_eq!(back.margin(&row).unwrap().to_bits(), model.margin(&row).unwrap().to_bits());
        }
    }

    #[test]
    fn predictions_respect_label_and_confidence_rules(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, 20, 2, 4);
        let model = train(&m, &GbdtParams { n_trees: 3, ..GbdtParams::default() }, &InstanceWeights::uniform(20), &FeatureWeights::uniform(m.group_names())).unwrap();
        for p in model.predict_matrix(&m).unwrap() {
            prop_assert!((0.0..=1.0).contains(&p.probability));
            prop_assert_eq!(p.label == Outcome::Reject, p.probability >= 0.5);
            prop_assert!((0.5..=1.0).contains(&p.confidence));
        }
    }
}

#[test]
fn gradient_grid_matches_finite_differences() {
    assert!(checks::grad_hess_grid().unwrap() > 500);
}

#[test]
fn depth_one_split_matches_exhaustive_oracle() {
    assert!(checks::depth_one_split(50).unwrap() > 25);
}

#[test]
fn xor_reaches_full_training_accuracy() {
    assert_eq!(checks::xor_training_accuracy().unwrap(), 1.0);
}

#[test]
fn deterministic_across_runs_and_thread_counts() {
    checks::seed_determinism().unwrap();
}

#[test]
fn alpha_zero_rows_leave_fingerprint_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = random_matrix(&mut rng, 50, 3, 6);
    let extra = random_matrix(&mut rng, 5, 3, 6);
    let all = base.append(&extra).unwrap();
    let fw = FeatureWeights::uniform(base.group_names());
    let params = GbdtParams::default();
    let b = fairloop_core::gbdt::balance_instance_weights(&base, &[], 1.0).unwrap();
    let a = fairloop_core::gbdt::balance_instance_weights(&all, &[50, 51, 52, 53, 54], 0.0).unwrap();
    assert_eq!(
        train(&base, &params, &b, &fw).unwrap().fingerprint(),
        train(&all, &params, &a, &fw).unwrap().fingerprint()
    );
}
