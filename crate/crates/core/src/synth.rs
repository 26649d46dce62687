//! Seeded synthetic loan applications with a controllable bias against one
//! gender group. Used for tests, demos and scale checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSpec, Result, SchemaConfig, Value};
use crate::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Share of rows in the disadvantaged group (`Gender = F`).
    pub minority_share: f64,
    /// Score penalty for the disadvantaged group, in noise standard deviations.
    pub bias: f64,
    /// Probability that any non-id cell is left empty.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 7,
            minority_share: 0.35,
            bias: 1.0,
            missing_rate: 0.0,
        }
    }
}

const MARITAL: [&str; 3] = ["single", "married", "divorced"];
const PURPOSE: [&str; 4] = ["car", "home", "education", "business"];
const HOUSING: [&str; 3] = ["own", "rent", "free"];

/// Schema and binning configuration of the synthetic data.
pub fn schema_config() -> SchemaConfig {
    let mut gender = FeatureSpec::categorical("Gender").protected();
    gender.value_labels = [("F", "Female"), ("M", "Male")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut marital = FeatureSpec::categorical("Marital Status").protected();
    marital.display_label = "Marital Status".into();
    SchemaConfig {
        features: vec![
            gender,
            FeatureSpec::numeric("Age").protected(),
            marital,
            FeatureSpec::numeric("Income"),
            FeatureSpec::numeric("Credit amount"),
            FeatureSpec::numeric("Duration"),
            FeatureSpec::categorical("Purpose"),
            FeatureSpec::categorical("Housing"),
        ],
        bins: BTreeMap::from([("Age".to_string(), vec![30.0, 45.0, 60.0])]),
        amount_features: vec!["Income".into(), "Credit amount".into()],
        seed: 0,
        id_column: "id".into(),
        target_column: "target".into(),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let schema = schema_config().schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::<f64>::new(0.0, 1.0).expect("valid normal");
    let income_dist = LogNormal::<f64>::new(8.0, 0.5).expect("valid lognormal");
    let amount_dist = LogNormal::<f64>::new(8.5, 0.7).expect("valid lognormal");
    let mut ids = Vec::with_capacity(cfg.n);
    let mut rows = Vec::with_capacity(cfg.n);
    let mut target = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let female = rng.gen_bool(cfg.minority_share.clamp(0.0, 1.0));
        let age: f64 = rng.gen_range(18..76) as f64;
        let marital = MARITAL[rng.gen_range(0..MARITAL.len())];
        let income: f64 = income_dist.sample(&mut rng).round();
        let amount: f64 = (amount_dist.sample(&mut rng) / 10.0).round() * 10.0;
        let duration: f64 = [6.0, 12.0, 24.0, 36.0, 48.0, 60.0][rng.gen_range(0..6)];
        let purpose = PURPOSE[rng.gen_range(0..PURPOSE.len())];
        let housing = HOUSING[rng.gen_range(0..HOUSING.len())];
        let score = 1.2 * (income.ln() - 8.0) / 0.5 - 0.8 * (amount.ln() - 8.5) / 0.7 - 0.4 * (duration - 31.0) / 18.0
            + if housing == "own" { 0.4 } else { 0.0 }
            + 0.01 * (age - 45.0)
            - if female { cfg.bias } else { 0.0 }
            + noise.sample(&mut rng);
        let label = if score >= 0.0 { Outcome::Accept } else { Outcome::Reject };
        let mut row = vec![
            Some(Value::Cat(if female { "F" } else { "M" }.into())),
            Some(Value::Num(age)),
            Some(Value::Cat(marital.into())),
            Some(Value::Num(income)),
            Some(Value::Num(amount)),
            Some(Value::Num(duration)),
            Some(Value::Cat(purpose.into())),
            Some(Value::Cat(housing.into())),
        ];
        if cfg.missing_rate > 0.0 {
            for cell in row.iter_mut() {
                if rng.gen_bool(cfg.missing_rate) {
                    *cell = None;
                }
            }
        }
        ids.push(format!("app-{i:05}"));
        rows.push(row);
        target.push(Some(label));
    }
    Dataset::new(schema, ids, rows, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_biased() {
        let cfg = SynthConfig {
            n: 4000,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a.fingerprint(), generate(&cfg).unwrap().fingerprint());
        let rate = |g: &str| {
            let (mut n, mut acc) = (0, 0);
            for i in 0..a.len() {
                if a.value(i, 0).unwrap().as_cat() == Some(g) {
                    n += 1;
                    acc += (a.target(i) == Some(Outcome::Accept)) as usize;
                }
            }
            acc as f64 / n as f64
        };
        let dpr = rate("F") / rate("M");
        assert!((0.35..0.65).contains(&dpr), "dpr {dpr}");
    }
}
