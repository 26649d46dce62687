//! Criterion checks shared by the unit-level test files and the acceptance
//! runner. Each returns a description of the first violation.

use fairloop_core::data::{grouping_for, EncodedMatrix};
use fairloop_core::fairness::{accuracy, aod, cdd, consistency, counterfactual, dpr, eod, group_stats, ppd, theil, GroupReduction};
use fairloop_core::gbdt::{logistic_grad_hess, train, weighted_logloss, FeatureWeights, GbdtParams, InstanceWeights, Node};
use fairloop_core::integration::{
    cma_from_scratch, retrain_global, retrain_personalized, Cma, FeedbackChain, FeedbackLabel, FlipReference,
    IntegrationPolicy, PolicyKind, RetrainContext,
};
use fairloop_core::Outcome;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::{self, feedback, loan_context, small_params};
use super::oracle;

pub type Check<T = ()> = Result<T, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

/// Every metric on one random dataset of 6 to 16 rows against its oracle.
pub fn metric_oracle_seed(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=16);
    let t = fixtures::tiny(&mut rng, n);
    let truth = t.ds.labels().unwrap();
    let (matrix, _) = t.encoder.transform(&t.ds).unwrap();
    let preds: Vec<Outcome> = t.model.predict_matrix(&matrix).unwrap().iter().map(|p| p.label).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|r| matrix.row(r)).collect();
    let strata = grouping_for(&t.ds, "color", None).unwrap().grouping;

    let fail = |what: &str, got: Option<f64>, want: Option<f64>| {
        ensure(close(got, want, 1e-9), || format!("seed {seed}: {what} got {got:?} want {want:?}"))
    };
    fail("accuracy", accuracy(&preds, &truth, None).ok(), Some(oracle::accuracy(&preds, &truth)))?;
    fail("theil", theil(&preds, &truth).ok(), oracle::theil(&preds, &truth))?;
    for k in [1, 3, 5] {
        fail(&format!("consistency k={k}"), consistency(&preds, &matrix, k).ok(), oracle::consistency(&preds, &rows, k))?;
    }
    for (attr, rule) in [("group", None), ("age", Some(&t.age_rule))] {
        let g = grouping_for(&t.ds, attr, rule).unwrap().grouping;
        let labels = &g.labels;
        let stats = group_stats(&preds, &truth, &g).unwrap();
        fail(&format!("dpr {attr}"), dpr(&stats).ok(), oracle::dpr(&preds, &truth, labels))?;
        fail(&format!("eod {attr}"), eod(&stats).ok(), oracle::eod(&preds, &truth, labels))?;
        fail(&format!("aod {attr}"), aod(&stats, GroupReduction::MinMax).ok(), oracle::aod(&preds, &truth, labels))?;
        fail(&format!("ppd {attr}"), ppd(&stats).ok(), oracle::ppd(&preds, &truth, labels))?;
        let single = vec!["all".to_string(); n];
        fail(&format!("dd {attr}"), cdd(&preds, &g, None).ok().map(|c| c.value), oracle::cdd(&preds, labels, &single))?;
        fail(
            &format!("cdd {attr} | color"),
            cdd(&preds, &g, Some(&strata)).ok().map(|c| c.value),
            oracle::cdd(&preds, labels, &strata.labels),
        )?;
        fail(
            &format!("cf {attr}"),
            counterfactual(&t.model, &t.encoder, &t.ds, attr, rule).ok(),
            oracle::counterfactual(&t.model, &t.encoder, &t.ds, attr, rule),
        )?;
    }
    Ok(())
}

fn loss(m: f64, y: f64, w: f64) -> f64 {
    weighted_logloss(&[m], &[y], &[w]) * w
}

/// Gradient and hessian against central differences, relative 1e-6.
pub fn grad_hess_point(m: f64, y: f64, w: f64) -> Check {
    let (g, h) = logistic_grad_hess(m, y, w);
    let e = 1e-4;
    let fd_g = (loss(m + e, y, w) - loss(m - e, y, w)) / (2.0 * e);
    let fd_h = (logistic_grad_hess(m + e, y, w).0 - logistic_grad_hess(m - e, y, w).0) / (2.0 * e);
    ensure((g - fd_g).abs() <= 1e-6 * g.abs().max(1e-3), || format!("m={m} y={y} w={w}: g {g} fd {fd_g}"))?;
    ensure((h - fd_h).abs() <= 1e-6 * h.abs().max(1e-3), || format!("m={m} y={y} w={w}: h {h} fd {fd_h}"))
}

/// `grad_hess_point` over a grid of margins, labels and weights.
pub fn grad_hess_grid() -> Check<usize> {
    let mut n = 0;
    for i in 0..=64 {
        let m = -8.0 + 16.0 * i as f64 / 64.0;
        for y in [0.0, 1.0] {
            for w in [0.1, 1.0, 2.5, 5.0] {
                grad_hess_point(m, y, w)?;
                n += 1;
            }
        }
    }
    Ok(n)
}

fn matrix(columns: Vec<Vec<f64>>, y: &[u8]) -> EncodedMatrix {
    EncodedMatrix::from_columns(columns, y.iter().map(|t| Outcome::from_target(*t)).collect())
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, levels: u32) -> EncodedMatrix {
    let columns = (0..cols)
        .map(|_| (0..rows).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect())
        .collect();
    let y: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..2)).collect();
    matrix(columns, &y)
}

fn leaves(node: &Node) -> Check<(f64, f64)> {
    match node {
        Node::Split { left, right, .. } => match (&**left, &**right) {
            (Node::Leaf { weight: l }, Node::Leaf { weight: r }) => Ok((*l, *r)),
            _ => Err("tree deeper than 1".into()),
        },
        Node::Leaf { .. } => Err("tree has no split".into()),
    }
}

/// Depth-1 single trees on `cases` random sets of at most 32 rows against
/// the exhaustive stump oracle. Returns the number of non-trivial cases.
pub fn depth_one_split(cases: usize) -> Check<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    for case in 0..cases {
        let rows = rng.gen_range(4..=32);
        let levels = rng.gen_range(2..9);
        let m = random_matrix(&mut rng, rows, 3, levels);
        let w: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.5..2.0)).collect();
        let lambda = rng.gen_range(0.0..2.0);
        let mcw = [0.0, 0.1][case % 2];
        let params = GbdtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            lambda,
            colsample_bytree: 1.0,
            min_child_weight: mcw,
            ..GbdtParams::default()
        };
        let model = train(&m, &params, &InstanceWeights::new(w.clone()).unwrap(), &FeatureWeights::uniform(m.group_names()))
            .map_err(|e| e.to_string())?;
        let cols: Vec<Vec<f64>> = (0..3).map(|c| m.column(c).to_vec()).collect();
        let y: Vec<f64> = m.targets().iter().map(|t| t.unwrap().target()).collect();
        let best = oracle::best_stump(&cols, &y, &w, model.base_score(), lambda, 0.0, mcw);
        match (&model.trees()[0], best) {
            (Node::Leaf { .. }, None) => {}
            (Node::Split { column, threshold, .. }, Some((gain, oc, ot))) => {
                ensure((*column, *threshold) == (oc, ot), || {
                    format!("case {case}: split ({column}, {threshold}) oracle ({oc}, {ot}) gain {gain}")
                })?;
                let p = 1.0 / (1.0 + (-model.base_score()).exp());
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (g, h) = (w[i] * (p - y[i]), w[i] * p * (1.0 - p));
                    if cols[oc][i] <= ot {
                        gl += g;
                        hl += h;
                    } else {
                        gr += g;
                        hr += h;
                    }
                }
                let (l, r) = leaves(&model.trees()[0])?;
                ensure((l + gl / (hl + lambda)).abs() < 1e-9, || format!("case {case}: left leaf {l}"))?;
                ensure((r + gr / (hr + lambda)).abs() < 1e-9, || format!("case {case}: right leaf {r}"))?;
                checked += 1;
            }
            (t, b) => return Err(format!("case {case}: model {t:?} oracle {b:?}")),
        }
    }
    ensure(checked * 2 > cases, || format!("too few non-trivial cases: {checked}"))?;
    Ok(checked)
}

/// Training accuracy on an XOR-labelled set.
pub fn xor_training_accuracy() -> Check<f64> {
    // corner counts (3, 2, 2, 1) so the root split has positive gain
    let xs = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let zs = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let y: Vec<u8> = xs.iter().zip(&zs).map(|(a, b)| u8::from(a != b)).collect();
    let m = matrix(vec![xs.to_vec(), zs.to_vec()], &y);
    let params = GbdtParams {
        n_trees: 20,
        max_depth: 2,
        colsample_bytree: 1.0,
        min_child_weight: 0.0,
        ..GbdtParams::default()
    };
    let model = train(&m, &params, &InstanceWeights::uniform(8), &FeatureWeights::uniform(m.group_names()))
        .map_err(|e| e.to_string())?;
    let preds = model.predict_matrix(&m).map_err(|e| e.to_string())?;
    let labels = m.labels().map_err(|e| e.to_string())?;
    let hits = preds.iter().zip(&labels).filter(|(p, y)| p.label == **y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Same fingerprint over three runs on each of 1, 2 and 4 threads.
pub fn seed_determinism() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = random_matrix(&mut rng, 300, 8, 20);
    let params = GbdtParams {
        n_trees: 20,
        seed: 5,
        colsample_bytree: 0.7,
        ..GbdtParams::default()
    };
    let fw = FeatureWeights::uniform(m.group_names());
    let iw = InstanceWeights::uniform(300);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&m, &params, &iw, &fw).unwrap())
    };
    let a = run(1);
    for threads in [1, 2, 4] {
        for _ in 0..3 {
            let b = run(threads);
            ensure(a.fingerprint() == b.fingerprint() && a == b, || {
                format!("{threads} threads: {} vs {}", b.fingerprint(), a.fingerprint())
            })?;
        }
    }
    Ok(())
}

/// Theil index of benefits [1, 1, 2] and its oracle value.
pub fn theil_spot() -> Check<(f64, f64)> {
    let v = theil(
        &[Outcome::Accept, Outcome::Accept, Outcome::Accept],
        &[Outcome::Accept, Outcome::Accept, Outcome::Reject],
    )
    .map_err(|e| e.to_string())?;
    let want = oracle::theil_benefits(&[1.0, 1.0, 2.0]).ok_or("oracle undefined")?;
    ensure((v - want).abs() <= 1e-9, || format!("TI {v} oracle {want}"))?;
    Ok((v, want))
}

pub fn semantics_ctx(kind: PolicyKind, alpha: f64, flip: FlipReference) -> std::sync::Arc<RetrainContext> {
    loan_context((150, 40, 80), 21, small_params(), IntegrationPolicy::new(kind).with_alpha(alpha), flip).ctx
}

pub fn pool_id(c: &RetrainContext, r: usize) -> String {
    c.pool().id(r).to_string()
}

pub fn rejected_rows(c: &RetrainContext) -> Vec<usize> {
    (0..c.pool().len())
        .filter(|&r| c.baseline().pool_predictions[r].label == Outcome::Reject)
        .collect()
}

pub fn mixed_log(c: &RetrainContext) -> Vec<fairloop_core::integration::FeedbackInstance> {
    use FeedbackLabel::*;
    let rej = rejected_rows(c);
    vec![
        feedback("p1", &pool_id(c, rej[0]), 1, Unfair, None),
        feedback("p1", &pool_id(c, 5), 2, Fair, None),
        feedback("p2", &pool_id(c, rej[1]), 3, Unfair, Some(&[("Gender", 0.0), ("Income", 3.0)])),
        feedback("p2", &pool_id(c, 7), 4, WeightsOnly, Some(&[("Age", 0.1)])),
    ]
}

/// With alpha = 0 every policy reproduces the baseline fingerprint, through
/// the cached and the uncached retrain path.
pub fn alpha_zero_is_baseline() -> Check {
    for kind in PolicyKind::ALL {
        let c = semantics_ctx(kind, 0.0, FlipReference::Baseline);
        let log = mixed_log(&c);
        let base = c.baseline().model.fingerprint().to_string();
        let g = retrain_global(&c, &log).map_err(|e| e.to_string())?;
        ensure(g.model.fingerprint() == base, || format!("{kind}: global {} vs {base}", g.model.fingerprint()))?;
        let mut chain = FeedbackChain::new();
        for f in &log {
            chain.push(&c, f).map_err(|e| e.to_string())?;
        }
        let state = c.retrain_uncached(chain.resolved()).map_err(|e| e.to_string())?;
        ensure(state.model.fingerprint() == base, || format!("{kind}: uncached {}", state.model.fingerprint()))?;
    }
    Ok(())
}

/// Flip then undo gives back the exact training set, and redo the flipped one.
pub fn flip_undo_restores_training_set() -> Check {
    let c = semantics_ctx(PolicyKind::LabelsUnfair, 1.0, FlipReference::ShownModel);
    let fp = |chain: &FeedbackChain| c.apply_policy(chain.resolved()).map(|a| a.dataset.fingerprint()).map_err(|e| e.to_string());
    let mut chain = FeedbackChain::new();
    let base = fp(&chain)?;
    ensure(base == c.base().fingerprint(), || "empty feedback changed the training set".into())?;
    let f = feedback("p", &pool_id(&c, 3), 1, FeedbackLabel::Unfair, None);
    chain.push(&c, &f).map_err(|e| e.to_string())?;
    let once = fp(&chain)?;
    ensure(once != base, || "flip left the training set unchanged".into())?;
    chain.pop().ok_or("undo on empty chain")?;
    ensure(fp(&chain)? == base, || "undo did not restore the training set".into())?;
    chain.push(&c, &f).map_err(|e| e.to_string())?;
    ensure(fp(&chain)? == once, || "redo differs from the first flip".into())?;
    let again = c.retrain(chain.resolved()).map_err(|e| e.to_string())?;
    ensure(chain.current(&c).model.fingerprint() == again.model.fingerprint(), || "chain model differs from retrain".into())
}

fn cma_agrees(inc: &[Option<f64>], raw: &[Option<f64>]) -> Check {
    for (i, (a, b)) in inc.iter().zip(cma_from_scratch(raw)).enumerate() {
        ensure(
            match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                (a, b) => *a == b,
            },
            || format!("step {}: incremental {a:?} scratch {b:?}", i + 1),
        )?;
    }
    Ok(())
}

/// Incremental CMA equals recomputation on random sequences and on the
/// series of a personalized run.
pub fn cma_recomputation(sequences: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..sequences {
        let n = rng.gen_range(1..60);
        let xs: Vec<Option<f64>> = (0..n).map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(-10.0..10.0))).collect();
        let mut c = Cma::default();
        let inc: Vec<Option<f64>> = xs
            .iter()
            .map(|x| {
                if let Some(v) = x {
                    c.push(*v);
                }
                c.value()
            })
            .collect();
        cma_agrees(&inc, &xs)?;
    }
    let c = semantics_ctx(PolicyKind::LabelsUnfair, 1.0, FlipReference::ShownModel);
    let log: Vec<_> = (0..6)
        .map(|i| feedback("p", &pool_id(&c, i), 10 - i as i64, FeedbackLabel::Unfair, None))
        .collect();
    let run = retrain_personalized(&c, &log).map_err(|e| e.to_string())?;
    for s in &run.series.series {
        let raw: Vec<Option<f64>> = s.points.iter().map(|p| p.raw).collect();
        let inc: Vec<Option<f64>> = s.points.iter().map(|p| p.cma).collect();
        cma_agrees(&inc, &raw).map_err(|e| format!("{:?} {:?}: {e}", s.metric, s.attribute))?;
    }
    Ok(())
}

/// A single-instance personalized run equals global retraining on it.
pub fn single_instance_personalized_is_global() -> Check {
    let c = semantics_ctx(PolicyKind::LabelsUnfairPlusWeights, 1.0, FlipReference::Baseline);
    let rej = rejected_rows(&c);
    for f in [
        feedback("p", &pool_id(&c, rej[0]), 1, FeedbackLabel::Unfair, None),
        feedback("p", &pool_id(&c, 2), 1, FeedbackLabel::WeightsOnly, Some(&[("Housing", 4.0)])),
    ] {
        let g = retrain_global(&c, std::slice::from_ref(&f)).map_err(|e| e.to_string())?;
        let p = retrain_personalized(&c, std::slice::from_ref(&f)).map_err(|e| e.to_string())?;
        ensure(p.outcomes.len() == 1, || format!("{} steps", p.outcomes.len()))?;
        ensure(p.outcomes[0].model.fingerprint() == g.model.fingerprint(), || {
            format!("{:?}: personalized {} global {}", f.label, p.outcomes[0].model.fingerprint(), g.model.fingerprint())
        })?;
        ensure(p.outcomes[0].report == g.report, || "reports differ".into())?;
        for s in &p.series.series {
            ensure(s.points[0].raw == s.points[0].cma, || "first CMA point differs from raw".into())?;
        }
    }
    Ok(())
}
