use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fairness::{Direction, FairnessReport, Metric, MetricKey};

/// Change of a metric relative to its baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Change {
    /// `(value - baseline) / |baseline| * 100`, or the absolute change when
    /// the baseline is 0 (`relative == false`).
    pub raw: f64,
    /// `raw` with its sign set so that positive means improvement.
    pub signed: f64,
    pub improvement: bool,
    pub relative: bool,
}

fn improves(baseline: f64, value: f64, direction: Direction) -> bool {
    match direction {
        Direction::HigherBetter => value > baseline,
        Direction::LowerBetter => value < baseline,
        Direction::Toward(ideal) => (value - ideal).abs() < (baseline - ideal).abs(),
    }
}

pub fn percent_change(baseline: f64, value: f64, direction: Direction) -> Change {
    let relative = baseline != 0.0;
    let raw = if relative {
        (value - baseline) / baseline.abs() * 100.0
    } else {
        value - baseline
    };
    let improvement = improves(baseline, value, direction);
    let signed = if improvement { raw.abs() } else { -raw.abs() };
    Change {
        raw,
        signed,
        improvement,
        relative,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: Metric,
    pub attribute: Option<String>,
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    /// Absent when either side is undefined.
    pub change: Option<Change>,
}

impl MetricDelta {
    pub fn new(key: &MetricKey, baseline: Option<f64>, value: Option<f64>) -> Self {
        let change = baseline
            .zip(value)
            .map(|(b, v)| percent_change(b, v, key.metric.direction()));
        Self {
            metric: key.metric,
            attribute: key.attribute.clone(),
            baseline,
            value,
            change,
        }
    }

    pub fn key(&self) -> MetricKey {
        MetricKey {
            metric: self.metric,
            attribute: self.attribute.clone(),
        }
    }
}

/// Deltas for every metric of `baseline`, taking values from `value_of`.
pub fn deltas_with(
    baseline: &FairnessReport,
    mut value_of: impl FnMut(&MetricKey) -> Option<f64>,
) -> Vec<MetricDelta> {
    baseline
        .entries()
        .into_iter()
        .map(|(k, b)| {
            let v = value_of(&k);
            MetricDelta::new(&k, b.value(), v)
        })
        .collect()
}

pub fn report_deltas(baseline: &FairnessReport, report: &FairnessReport) -> Vec<MetricDelta> {
    deltas_with(baseline, |k| report.get(k).and_then(|v| v.value()))
}

/// Incrementally maintained cumulative moving average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cma {
    n: usize,
    mean: f64,
}

impl Cma {
    pub fn push(&mut self, x: f64) -> f64 {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
        self.mean
    }

    pub fn value(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    pub fn count(&self) -> usize {
        self.n
    }
}

/// CMA of `raw` recomputed from scratch at every step; undefined entries are skipped.
pub fn cma_from_scratch(raw: &[Option<f64>]) -> Vec<Option<f64>> {
    (1..=raw.len())
        .map(|t| {
            let defined: Vec<f64> = raw[..t].iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// 1-based integration step.
    pub step: usize,
    pub raw: Option<f64>,
    pub cma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub metric: Metric,
    pub attribute: Option<String>,
    pub baseline: Option<f64>,
    pub points: Vec<SeriesPoint>,
    #[serde(skip)]
    acc: Cma,
}

/// Per-metric raw and CMA values over integration steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub series: Vec<Series>,
}

impl MetricSeries {
    pub fn new(baseline: &FairnessReport) -> Self {
        Self {
            series: baseline
                .entries()
                .into_iter()
                .map(|(k, v)| Series {
                    metric: k.metric,
                    attribute: k.attribute,
                    baseline: v.value(),
                    points: Vec::new(),
                    acc: Cma::default(),
                })
                .collect(),
        }
    }

    pub fn push(&mut self, report: &FairnessReport) {
        for s in &mut self.series {
            let key = MetricKey {
                metric: s.metric,
                attribute: s.attribute.clone(),
            };
            let raw = report.get(&key).and_then(|v| v.value());
            if let Some(x) = raw {
                s.acc.push(x);
            }
            s.points.push(SeriesPoint {
                step: s.points.len() + 1,
                raw,
                cma: s.acc.value(),
            });
        }
    }

    pub fn len(&self) -> usize {
        self.series.first().map_or(0, |s| s.points.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &MetricKey) -> Option<&Series> {
        self.series
            .iter()
            .find(|s| s.metric == key.metric && s.attribute == key.attribute)
    }

    /// Deltas of the last CMA value against the baseline.
    pub fn final_deltas(&self) -> Vec<MetricDelta> {
        self.series
            .iter()
            .map(|s| {
                let key = MetricKey {
                    metric: s.metric,
                    attribute: s.attribute.clone(),
                };
                MetricDelta::new(&key, s.baseline, s.points.last().and_then(|p| p.cma))
            })
            .collect()
    }

    pub fn by_key(&self) -> BTreeMap<MetricKey, &Series> {
        self.series
            .iter()
            .map(|s| {
                (
                    MetricKey {
                        metric: s.metric,
                        attribute: s.attribute.clone(),
                    },
                    s,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_change_examples() {
        let c = percent_change(0.5, 0.6, Direction::HigherBetter);
        assert!((c.raw - 20.0).abs() < 1e-12 && c.improvement && c.signed > 0.0);
        let c = percent_change(0.30, 0.32, Direction::LowerBetter);
        assert!((c.raw - 6.666666666666667).abs() < 1e-9);
        assert!(!c.improvement && c.signed < 0.0);
        let c = percent_change(0.0, 0.1, Direction::LowerBetter);
        assert!(!c.relative && (c.raw - 0.1).abs() < 1e-15 && !c.improvement);
        let c = percent_change(0.8, 1.1, Direction::Toward(1.0));
        assert!(c.improvement);
        let c = percent_change(0.4, 0.4, Direction::HigherBetter);
        assert_eq!((c.raw, c.signed, c.improvement), (0.0, 0.0, false));
    }

    #[test]
    fn cma_running_mean() {
        let mut c = Cma::default();
        let out: Vec<f64> = [0.5, 0.7, 0.6].iter().map(|x| c.push(*x)).collect();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!((out[1] - 0.6).abs() < 1e-15);
        assert!((out[2] - 0.6).abs() < 1e-15);
        let scratch = cma_from_scratch(&[Some(0.5), None, Some(0.7)]);
        assert_eq!(scratch, vec![Some(0.5), Some(0.5), Some(0.6)]);
    }
}
