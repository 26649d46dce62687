//! Small random datasets and models for oracle comparisons.

use fairloop_core::data::{BinningRule, Dataset, Encoder, FeatureSpec, Schema, Value};
use fairloop_core::gbdt::{Model, Node};
use fairloop_core::Outcome;
use rand::seq::SliceRandom;
use rand::Rng;

pub struct Tiny {
    pub ds: Dataset,
    pub encoder: Encoder,
    /// Rule binning `age` into the groups used as an attribute.
    pub age_rule: BinningRule,
    pub model: Model,
}

fn random_node(rng: &mut impl Rng, n_cols: usize, depth: usize) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return Node::Leaf {
            weight: rng.gen_range(-2.0..2.0),
        };
    }
    Node::Split {
        column: rng.gen_range(0..n_cols),
        threshold: rng.gen_range(-0.1..1.1),
        left: Box::new(random_node(rng, n_cols, depth - 1)),
        right: Box::new(random_node(rng, n_cols, depth - 1)),
    }
}

/// `n` rows with a 2-3 valued categorical `group`, a numeric `age`, a
/// categorical `color` and a numeric `x`; every row labeled. The model is a
/// random ensemble over the encoded columns.
pub fn tiny(rng: &mut impl Rng, n: usize) -> Tiny {
    let schema = Schema::new(vec![
        FeatureSpec::categorical("group").protected(),
        FeatureSpec::numeric("age").protected(),
        FeatureSpec::categorical("color"),
        FeatureSpec::numeric("x"),
    ])
    .unwrap();
    let n_groups = rng.gen_range(2..=3);
    let groups = ["a", "b", "c"];
    let colors = ["red", "blue"];
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        // first rows cover every group so no attribute is single-valued
        let g = if i < n_groups { groups[i] } else { groups[rng.gen_range(0..n_groups)] };
        rows.push(vec![
            Some(Value::Cat(g.into())),
            Some(Value::Num(rng.gen_range(18..70) as f64)),
            Some(Value::Cat((*colors.choose(rng).unwrap()).into())),
            Some(Value::Num((rng.gen_range(0.0..10.0f64) * 4.0).round() / 4.0)),
        ]);
        target.push(Some(if rng.gen_bool(0.5) { Outcome::Accept } else { Outcome::Reject }));
    }
    let ds = Dataset::new(schema, (0..n).map(|i| format!("r{i}")).collect(), rows, target).unwrap();
    let (encoder, _) = Encoder::fit(&ds, &[]).unwrap();
    let age_rule = BinningRule::with_edges(&ds, "age", vec![30.0, 45.0]).unwrap();
    let n_cols = encoder.n_columns();
    let trees = (0..rng.gen_range(1..=4)).map(|_| random_node(rng, n_cols, 3)).collect();
    let model = Model::from_trees(n_cols, rng.gen_range(-0.5..0.5), trees);
    Tiny {
        ds,
        encoder,
        age_rule,
        model,
    }
}

pub fn random_outcomes(rng: &mut impl Rng, n: usize) -> Vec<Outcome> {
    (0..n)
        .map(|_| if rng.gen_bool(0.5) { Outcome::Accept } else { Outcome::Reject })
        .collect()
}

pub struct Loan {
    pub ctx: std::sync::Arc<fairloop_core::integration::RetrainContext>,
}

/// Synthetic loan data split into base training rows, an application pool
/// and an evaluation set, with a retrain context over them.
pub fn loan_context(
    sizes: (usize, usize, usize),
    seed: u64,
    params: fairloop_core::gbdt::GbdtParams,
    policy: fairloop_core::integration::IntegrationPolicy,
    flip: fairloop_core::integration::FlipReference,
) -> Loan {
    use fairloop_core::data::impute;
    use fairloop_core::fairness::{Evaluator, ReportConfig};
    use fairloop_core::synth::{generate, schema_config, SynthConfig};
    let (nb, np, ne) = sizes;
    let ds = impute(
        &generate(&SynthConfig {
            n: nb + np + ne,
            seed,
            ..SynthConfig::default()
        })
        .unwrap(),
    )
    .unwrap();
    let cfg = schema_config();
    let (enc, _) = Encoder::fit(&ds, &cfg.amount_features).unwrap();
    let idx = |a: usize, b: usize| (a..b).collect::<Vec<_>>();
    let base = ds.subset(&idx(0, nb));
    let pool = ds.subset(&idx(nb, nb + np));
    let eval = ds.subset(&idx(nb + np, nb + np + ne));
    let bins = [(
        "Age".to_string(),
        BinningRule::with_edges(&ds, "Age", cfg.bins["Age"].clone()).unwrap(),
    )]
    .into();
    let rc = ReportConfig::new(vec!["Gender".into(), "Age".into(), "Marital Status".into()], bins);
    let evaluator = Evaluator::new(&eval, &enc, rc).unwrap();
    Loan {
        ctx: std::sync::Arc::new(
            fairloop_core::integration::RetrainContext::new(enc, base, pool, evaluator, params, policy, flip).unwrap(),
        ),
    }
}

pub fn small_params() -> fairloop_core::gbdt::GbdtParams {
    fairloop_core::gbdt::GbdtParams {
        n_trees: 12,
        max_depth: 3,
        learning_rate: 0.3,
        ..Default::default()
    }
}

pub fn feedback(
    p: &str,
    app: &str,
    t: i64,
    label: fairloop_core::integration::FeedbackLabel,
    weights: Option<&[(&str, f64)]>,
) -> fairloop_core::integration::FeedbackInstance {
    fairloop_core::integration::FeedbackInstance {
        participant_id: p.into(),
        application_id: app.into(),
        timestamp_ms: t,
        label,
        weights: weights.map(|w| w.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
    }
}
