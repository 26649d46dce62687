use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    accuracy, aod, cdd, consistency_from_neighbors, dpr, eod, group_stats, nearest_neighbors, ppd, theil,
    CounterfactualProbe, GroupReduction, Metric, MetricError, MetricKey, MetricValue, Result,
};
use crate::data::{grouping_for, BinningRule, Dataset, EncodedMatrix, Encoder, Grouping};
use crate::gbdt::{Model, Prediction};
use crate::Outcome;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn default_k() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Attributes to report group metrics for, in output order.
    pub attributes: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Binning rules for numeric attributes and numeric strata features.
    #[serde(default)]
    pub bins: BTreeMap<String, BinningRule>,
    /// Optional CDD conditioning feature per attribute.
    #[serde(default)]
    pub strata: BTreeMap<String, String>,
    #[serde(default)]
    pub reduction: GroupReduction,
    #[serde(default = "default_true")]
    pub counterfactual: bool,
}

impl ReportConfig {
    pub fn new(attributes: Vec<String>, bins: BTreeMap<String, BinningRule>) -> Self {
        Self {
            attributes,
            k: default_k(),
            bins,
            strata: BTreeMap::new(),
            reduction: GroupReduction::default(),
            counterfactual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub dpr: MetricValue,
    pub cdd: MetricValue,
    pub eod: MetricValue,
    pub aod: MetricValue,
    pub ppd: MetricValue,
    pub cf: MetricValue,
}

impl AttributeMetrics {
    pub fn get(&self, metric: Metric) -> Option<&MetricValue> {
        Some(match metric {
            Metric::Dpr => &self.dpr,
            Metric::Cdd => &self.cdd,
            Metric::Eod => &self.eod,
            Metric::Aod => &self.aod,
            Metric::Ppd => &self.ppd,
            Metric::Cf => &self.cf,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub eval_fingerprint: String,
    pub n_instances: usize,
    pub k: usize,
    pub bins: BTreeMap<String, BinningRule>,
    pub strata: BTreeMap<String, String>,
    pub reduction: GroupReduction,
    /// Fraction of evaluation instances predicted `Accept`.
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema_version: u32,
    pub model_fingerprint: String,
    pub accuracy: MetricValue,
    pub consistency: MetricValue,
    pub theil: MetricValue,
    pub attributes: BTreeMap<String, AttributeMetrics>,
    pub metadata: ReportMetadata,
}

impl FairnessReport {
    pub fn get(&self, key: &MetricKey) -> Option<&MetricValue> {
        match &key.attribute {
            None => match key.metric {
                Metric::Accuracy => Some(&self.accuracy),
                Metric::Consistency => Some(&self.consistency),
                Metric::Theil => Some(&self.theil),
                _ => None,
            },
            Some(a) => self.attributes.get(a)?.get(key.metric),
        }
    }

    /// Every metric in the report, keyed.
    pub fn entries(&self) -> BTreeMap<MetricKey, MetricValue> {
        let mut out = BTreeMap::new();
        out.insert(MetricKey::overall(Metric::Accuracy), self.accuracy.clone());
        out.insert(MetricKey::overall(Metric::Consistency), self.consistency.clone());
        out.insert(MetricKey::overall(Metric::Theil), self.theil.clone());
        for (a, m) in &self.attributes {
            for metric in Metric::PER_ATTRIBUTE {
                out.insert(MetricKey::for_attribute(metric, a), m.get(metric).expect("per-attribute").clone());
            }
        }
        out
    }
}

/// A fixed evaluation set with everything model-independent precomputed:
/// encoding, groupings, neighbor lists and counterfactual substitutions.
#[derive(Debug, Clone)]
pub struct Evaluator {
    dataset: Dataset,
    config: ReportConfig,
    matrix: EncodedMatrix,
    truth: Vec<Outcome>,
    groupings: BTreeMap<String, Grouping>,
    strata: BTreeMap<String, Grouping>,
    neighbors: Vec<Vec<usize>>,
    probes: BTreeMap<String, CounterfactualProbe>,
    fingerprint: String,
}

impl Evaluator {
    pub fn new(dataset: &Dataset, encoder: &Encoder, config: ReportConfig) -> Result<Self> {
        if dataset.is_empty() {
            return Err(MetricError::Invalid("empty evaluation set".into()));
        }
        let truth = dataset.labels()?;
        let (matrix, _) = encoder.transform(dataset)?;
        let mut groupings = BTreeMap::new();
        let mut probes = BTreeMap::new();
        for a in &config.attributes {
            let rule = config.bins.get(a);
            groupings.insert(a.clone(), grouping_for(dataset, a, rule)?.grouping);
            if config.counterfactual {
                match CounterfactualProbe::new(dataset, encoder, a, rule) {
                    Ok(p) => {
                        probes.insert(a.clone(), p);
                    }
                    Err(e @ MetricError::TooFewGroups { .. }) => log::warn!("no CF for `{a}`: {e}"),
                    Err(e) => return Err(e),
                }
            }
        }
        let mut strata = BTreeMap::new();
        for (a, feature) in &config.strata {
            strata.insert(a.clone(), grouping_for(dataset, feature, config.bins.get(feature))?.grouping);
        }
        let neighbors = nearest_neighbors(&matrix, config.k)?;
        Ok(Self {
            fingerprint: dataset.fingerprint(),
            dataset: dataset.clone(),
            config,
            matrix,
            truth,
            groupings,
            strata,
            neighbors,
            probes,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn matrix(&self) -> &EncodedMatrix {
        &self.matrix
    }

    pub fn config(&self) -> &ReportConfig {
        &self.config
    }

    pub fn truth(&self) -> &[Outcome] {
        &self.truth
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Group labels per evaluation row for a configured attribute.
    pub fn grouping(&self, attribute: &str) -> Option<&Grouping> {
        self.groupings.get(attribute)
    }

    /// Group labels for any feature, binned with the configured rule if numeric.
    pub fn grouping_for(&self, feature: &str) -> Result<Grouping> {
        match self.groupings.get(feature) {
            Some(g) => Ok(g.clone()),
            None => Ok(grouping_for(&self.dataset, feature, self.config.bins.get(feature))?.grouping),
        }
    }

    pub fn predict(&self, model: &Model) -> Result<Vec<Prediction>> {
        Ok(model.predict_matrix(&self.matrix)?)
    }

    pub fn report(&self, model: &Model) -> Result<FairnessReport> {
        let preds = self.predict(model)?;
        self.report_with_predictions(model, &preds)
    }

    /// Report for `model` given its predictions on the evaluation matrix.
    pub fn report_with_predictions(&self, model: &Model, preds: &[Prediction]) -> Result<FairnessReport> {
        if preds.len() != self.truth.len() {
            return Err(MetricError::Invalid(format!(
                "{} predictions for {} evaluation rows",
                preds.len(),
                self.truth.len()
            )));
        }
        let labels: Vec<Outcome> = preds.iter().map(|p| p.label).collect();
        let mut attributes = BTreeMap::new();
        for a in &self.config.attributes {
            let g = &self.groupings[a];
            let stats = group_stats(&labels, &self.truth, g);
            let on_stats = |f: &dyn Fn(&super::GroupStats) -> Result<f64>| -> MetricValue {
                match &stats {
                    Ok(s) => f(s).into(),
                    Err(e) => MetricValue::Undefined { reason: e.to_string() },
                }
            };
            let cf = match self.probes.get(a) {
                Some(p) => p.evaluate(model, &self.matrix).into(),
                None if self.config.counterfactual => MetricValue::Undefined {
                    reason: "attribute has a single observed value".into(),
                },
                None => MetricValue::Undefined {
                    reason: "counterfactual evaluation disabled".into(),
                },
            };
            attributes.insert(
                a.clone(),
                AttributeMetrics {
                    dpr: on_stats(&dpr),
                    cdd: cdd(&labels, g, self.strata.get(a)).map(|c| c.value).into(),
                    eod: on_stats(&eod),
                    aod: on_stats(&|s| aod(s, self.config.reduction)),
                    ppd: on_stats(&ppd),
                    cf,
                },
            );
        }
        let accepted = labels.iter().filter(|l| l.is_favorable()).count();
        Ok(FairnessReport {
            schema_version: REPORT_SCHEMA_VERSION,
            model_fingerprint: model.fingerprint().to_string(),
            accuracy: accuracy(&labels, &self.truth, None).into(),
            consistency: consistency_from_neighbors(&labels, &self.neighbors).into(),
            theil: theil(&labels, &self.truth).into(),
            attributes,
            metadata: ReportMetadata {
                eval_fingerprint: self.fingerprint.clone(),
                n_instances: labels.len(),
                k: self.config.k,
                bins: self.config.bins.clone(),
                strata: self.config.strata.clone(),
                reduction: self.config.reduction,
                acceptance_rate: accepted as f64 / labels.len() as f64,
            },
        })
    }
}

pub fn report(model: &Model, eval: &Dataset, encoder: &Encoder, config: ReportConfig) -> Result<FairnessReport> {
    Evaluator::new(eval, encoder, config)?.report(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Schema, Value};
    use crate::fairness::{consistency, counterfactual};
    use crate::gbdt::{train, FeatureWeights, GbdtParams, InstanceWeights};

    fn toy(n: usize) -> Dataset {
        let schema = Schema::new(vec![
            FeatureSpec::categorical("sex").protected(),
            FeatureSpec::numeric("age").protected(),
            FeatureSpec::numeric("income"),
        ])
        .unwrap();
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for i in 0..n {
            let sex = if i % 3 == 0 { "F" } else { "M" };
            let age = 20.0 + ((i * 7) % 40) as f64;
            let income = ((i * 13) % 17) as f64;
            rows.push(vec![
                Some(Value::Cat(sex.into())),
                Some(Value::Num(age)),
                Some(Value::Num(income)),
            ]);
            target.push(Some(if income + (i % 2) as f64 * 4.0 > 9.0 { Outcome::Accept } else { Outcome::Reject }));
        }
        Dataset::new(schema, (0..n).map(|i| format!("a{i}")).collect(), rows, target).unwrap()
    }

    #[test]
    fn composed_report_matches_standalone_metrics() {
        let ds = toy(20);
        let (enc, _) = Encoder::fit(&ds, &[]).unwrap();
        let (m, _) = enc.transform(&ds).unwrap();
        let params = GbdtParams {
            n_trees: 5,
            max_depth: 2,
            colsample_bytree: 1.0,
            ..GbdtParams::default()
        };
        let fw = FeatureWeights::uniform(m.group_names());
        let model = train(&m, &params, &InstanceWeights::uniform(20), &fw).unwrap();
        let rule = BinningRule::with_edges(&ds, "age", vec![35.0, 45.0]).unwrap();
        let mut bins = BTreeMap::new();
        bins.insert("age".to_string(), rule.clone());
        let cfg = ReportConfig {
            k: 3,
            ..ReportConfig::new(vec!["sex".into(), "age".into()], bins)
        };
        let rep = report(&model, &ds, &enc, cfg).unwrap();

        let preds: Vec<Outcome> = model.predict_matrix(&m).unwrap().iter().map(|p| p.label).collect();
        let truth = ds.labels().unwrap();
        assert_eq!(rep.accuracy.value(), accuracy(&preds, &truth, None).ok());
        assert_eq!(rep.consistency.value(), consistency(&preds, &m, 3).ok());
        assert_eq!(rep.theil.value(), theil(&preds, &truth).ok());
        for (a, rule) in [("sex", None), ("age", Some(&rule))] {
            let g = grouping_for(&ds, a, rule).unwrap().grouping;
            let s = group_stats(&preds, &truth, &g).unwrap();
            let am = &rep.attributes[a];
            assert_eq!(am.dpr.value(), dpr(&s).ok());
            assert_eq!(am.eod.value(), eod(&s).ok());
            assert_eq!(am.aod.value(), aod(&s, GroupReduction::MinMax).ok());
            assert_eq!(am.ppd.value(), ppd(&s).ok());
            assert_eq!(am.cdd.value(), cdd(&preds, &g, None).ok().map(|c| c.value));
            assert_eq!(am.cf.value(), counterfactual(&model, &enc, &ds, a, rule).ok());
        }
        assert_eq!(rep.entries().len(), 3 + 2 * 6);
        let json = serde_json::to_string(&rep).unwrap();
        let back: FairnessReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn empty_eval_is_error() {
        let ds = toy(10).subset(&[]);
        let (enc, _) = Encoder::fit(&toy(10), &[]).unwrap();
        assert!(Evaluator::new(&ds, &enc, ReportConfig::new(vec![], BTreeMap::new())).is_err());
    }
}
