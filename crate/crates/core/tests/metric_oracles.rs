mod common;

use common::{checks, fixtures};
use fairloop_core::fairness::{
    accuracy, aod, cdd, consistency, counterfactual, dpr, eod, group_stats, ppd, theil, Evaluator,
    GroupReduction, ReportConfig,
};
use fairloop_core::Outcome;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn two_hundred_random_datasets_match_oracles() {
    for seed in 0..200 {
        checks::metric_oracle_seed(seed).unwrap();
    }
}

#[test]
fn report_composes_standalone_metrics_on_random_sets() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let t = fixtures::tiny(&mut rng, 16);
        let mut cfg = ReportConfig::new(
            vec!["group".into(), "age".into()],
            [("age".to_string(), t.age_rule.clone())].into(),
        );
        cfg.k = 3;
        let ev = Evaluator::new(&t.ds, &t.encoder, cfg).unwrap();
        let rep = ev.report(&t.model).unwrap();
        let preds: Vec<Outcome> = ev.predict(&t.model).unwrap().iter().map(|p| p.label).collect();
        assert_eq!(rep.theil.value(), theil(&preds, ev.truth()).ok());
        let g = ev.grouping("group").unwrap();
        let stats = group_stats(&preds, ev.truth(), g).unwrap();
        assert_eq!(rep.attributes["group"].dpr.value(), dpr(&stats).ok());
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    checks::close(a, b, 1e-9)
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::Accept), Just(Outcome::Reject)]
}

fn labeled_rows(max: usize) -> impl Strategy<Value = Vec<(Outcome, Outcome, u8)>> {
    prop::collection::vec((outcome(), outcome(), 0u8..3), 2..max)
}

fn split(rows: &[(Outcome, Outcome, u8)]) -> (Vec<Outcome>, Vec<Outcome>, fairloop_core::data::Grouping) {
    (
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        fairloop_core::data::Grouping::new(rows.iter().map(|r| format!("g{}", r.2)).collect()),
    )
}

proptest! {
    #[test]
    fn group_metrics_stay_in_bounds(rows in labeled_rows(40)) {
        let (p, t, g) = split(&rows);
        let s = group_stats(&p, &t, &g).unwrap();
        if let Ok(v) = dpr(&s) { prop_assert!((0.0..=1.0).contains(&v)); }
        for v in [eod(&s), aod(&s, GroupReduction::MinMax), aod(&s, GroupReduction::PairwiseMax), ppd(&s)].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let Ok(v) = theil(&p, &t) { prop_assert!(v >= 0.0); }
    }

    #[test]
    fn permutation_changes_no_group_metric(rows in labeled_rows(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (p, t, g) = split(&rows);
        let (p2, t2, g2) = split(&shuffled);
        let s = group_stats(&p, &t, &g).unwrap();
        let s2 = group_stats(&p2, &t2, &g2).unwrap();
        prop_assert_eq!(&s, &s2);
        let c1 = cdd(&p, &g, None).ok().map(|c| c.value);
        let c2 = cdd(&p2, &g2, None).ok().map(|c| c.value);
        prop_assert!(close(c1, c2));
        prop_assert!(close(theil(&p, &t).ok(), theil(&p2, &t2).ok()));
        prop_assert!(close(accuracy(&p, &t, None).ok(), accuracy(&p2, &t2, None).ok()));
    }

    #[test]
    fn swapping_binary_groups_is_symmetric(rows in prop::collection::vec((outcome(), outcome(), 0u8..2), 2..30)) {
        let (p, t, g) = split(&rows);
        let swapped = fairloop_core::data::Grouping::new(
            g.labels.iter().map(|l| if l == "g0" { "g1".to_string() } else { "g0".to_string() }).collect(),
        );
        let s = group_stats(&p, &t, &g).unwrap();
        let s2 = group_stats(&p, &t, &swapped).unwrap();
        for (a, b) in [
            (dpr(&s).ok(), dpr(&s2).ok()),
            (eod(&s).ok(), eod(&s2).ok()),
            (aod(&s, GroupReduction::MinMax).ok(), aod(&s2, GroupReduction::MinMax).ok()),
            (ppd(&s).ok(), ppd(&s2).ok()),
        ] {
            prop_assert!(close(a, b));
        }
    }

    #[test]
    fn dpr_is_one_iff_selection_rates_equal(rows in labeled_rows(24)) {
        let (p, t, g) = split(&rows);
        let s = group_stats(&p, &t, &g).unwrap();
        if let Ok(v) = dpr(&s) {
            let rates: Vec<f64> = s.groups.values().map(|r| r.selection_rate.unwrap()).collect();
            let equal = rates.iter().all(|r| (r - rates[0]).abs() <= 1e-12);
            prop_assert_eq!((v - 1.0).abs() <= 1e-12, equal);
        }
    }

    #[test]
    fn consistency_in_unit_interval(xs in prop::collection::vec((0.0f64..1.0, outcome()), 3..25), k in 1usize..3) {
        let m = fairloop_core::data::EncodedMatrix::from_columns(vec![xs.iter().map(|x| x.0).collect()], vec![None; xs.len()]);
        let p: Vec<Outcome> = xs.iter().map(|x| x.1).collect();
        let c = consistency(&p, &m, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn cf_is_one_without_attribute_columns(seed in 0u64..500) {
        use fairloop_core::gbdt::{train, GbdtParams, InstanceWeights};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = fixtures::tiny(&mut rng, 16);
        let (m, _) = t.encoder.transform(&t.ds).unwrap();
        let mut raw: std::collections::BTreeMap<String, f64> =
            m.group_names().iter().map(|g| (g.clone(), 1.0)).collect();
        raw.insert("group".into(), 0.0);
        let fw = fairloop_core::gbdt::normalize_weights(&raw).unwrap();
        let params = GbdtParams { n_trees: 5, max_depth: 2, colsample_bytree: 0.99, min_child_weight: 0.0, ..GbdtParams::default() };
        let model = train(&m, &params, &InstanceWeights::uniform(16), &fw).unwrap();
        prop_assert_eq!(counterfactual(&model, &t.encoder, &t.ds, "group", None).unwrap(), 1.0);
    }
}

#[test]
fn theil_spot_value() {
    let (v, _) = checks::theil_spot().unwrap();
    assert!((v - 0.0589).abs() < 1e-4);
}
