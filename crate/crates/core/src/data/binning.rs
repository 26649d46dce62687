use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureKind, Result, Value};

/// Cut points turning a numeric feature into labeled bins.
///
/// `edges` are interior cut points; bin `i` holds values in
/// `(edges[i-1], edges[i]]`, with open-ended first and last bins. The rule
/// also records the value range it was fitted on; values outside that range
/// are still assigned (to the boundary bin) but flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub feature: String,
    edges: Vec<f64>,
    labels: Vec<String>,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinWarning {
    Clamped { id: String, value: f64, bin: String },
}

/// Group label per dataset row, in dataset row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub labels: Vec<String>,
}

impl Grouping {
    pub fn new(labels: Vec<String>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct labels, sorted.
    pub fn values(&self) -> Vec<String> {
        let mut v = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub grouping: Grouping,
    pub warnings: Vec<BinWarning>,
}

impl BinningRule {
    pub fn new(feature: &str, edges: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        let invalid = |reason: &str| DataError::InvalidBins {
            feature: feature.to_string(),
            reason: reason.to_string(),
        };
        if edges.iter().any(|e| !e.is_finite()) || !lower.is_finite() || !upper.is_finite() {
            return Err(invalid("edges and range must be finite"));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("edges must be strictly increasing"));
        }
        if lower > upper {
            return Err(invalid("lower bound exceeds upper bound"));
        }
        let labels = bin_labels(&edges);
        Ok(Self {
            feature: feature.to_string(),
            edges,
            labels,
            lower,
            upper,
        })
    }

    /// Explicit edges; the covered range spans the observed values of `ds`
    /// and the edges themselves.
    pub fn with_edges(ds: &Dataset, feature: &str, edges: Vec<f64>) -> Result<Self> {
        let values = numeric_values(ds, feature)?;
        let lo = values.iter().copied().chain(edges.first().copied()).fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().chain(edges.last().copied()).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return Err(DataError::AllMissing(feature.to_string()));
        }
        Self::new(feature, edges, lo, hi)
    }

    /// Quartile edges (linear interpolation between order statistics) of the
    /// observed values; duplicate edges collapse.
    pub fn quartiles(ds: &Dataset, feature: &str) -> Result<Self> {
        let mut values = numeric_values(ds, feature)?;
        if values.is_empty() {
            return Err(DataError::AllMissing(feature.to_string()));
        }
        values.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|q| quantile(&values, *q)).collect();
        edges.dedup();
        // an edge at the maximum would leave the top bin empty
        let max = *values.last().expect("non-empty");
        edges.retain(|e| *e < max);
        Self::new(feature, edges, values[0], max)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Bin index for `x` and whether `x` lay outside the covered range.
    pub fn assign(&self, x: f64) -> (usize, bool) {
        let idx = self.edges.partition_point(|e| *e < x);
        (idx, x < self.lower || x > self.upper)
    }

    pub fn label_of(&self, x: f64) -> &str {
        &self.labels[self.assign(x).0]
    }
}

fn numeric_values(ds: &Dataset, feature: &str) -> Result<Vec<f64>> {
    let j = ds
        .schema()
        .position(feature)
        .ok_or_else(|| DataError::UnknownFeature(feature.to_string()))?;
    if ds.schema().features()[j].kind != FeatureKind::Numeric {
        return Err(DataError::NotNumeric(feature.to_string()));
    }
    Ok(ds.column(j).filter_map(|v| v.and_then(Value::as_num)).collect())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bin_labels(edges: &[f64]) -> Vec<String> {
    if edges.is_empty() {
        return vec!["all".to_string()];
    }
    let mut out = Vec::with_capacity(edges.len() + 1);
    out.push(format!("≤{}", edges[0]));
    for w in edges.windows(2) {
        out.push(format!("({}, {}]", w[0], w[1]));
    }
    out.push(format!(">{}", edges[edges.len() - 1]));
    out
}

/// Maps every instance of `ds` to exactly one bin of `rule`.
pub fn bin(ds: &Dataset, rule: &BinningRule) -> Result<Binned> {
    let j = ds
        .schema()
        .position(&rule.feature)
        .ok_or_else(|| DataError::UnknownFeature(rule.feature.clone()))?;
    if ds.schema().features()[j].kind != FeatureKind::Numeric {
        return Err(DataError::NotNumeric(rule.feature.clone()));
    }
    let mut labels = Vec::with_capacity(ds.len());
    let mut warnings = Vec::new();
    for (i, v) in ds.column(j).enumerate() {
        let x = v.and_then(Value::as_num).ok_or_else(|| DataError::MissingValue {
            id: ds.id(i).to_string(),
            feature: rule.feature.clone(),
        })?;
        let (b, clamped) = rule.assign(x);
        if clamped {
            log::warn!("{} = {x} for `{}` is outside the binned range", rule.feature, ds.id(i));
            warnings.push(BinWarning::Clamped {
                id: ds.id(i).to_string(),
                value: x,
                bin: rule.labels[b].clone(),
            });
        }
        labels.push(rule.labels[b].clone());
    }
    Ok(Binned {
        grouping: Grouping { labels },
        warnings,
    })
}

/// Group labels for a fairness attribute: raw category for categorical
/// features, bin label for numeric ones (a rule is then required).
pub fn grouping_for(ds: &Dataset, feature: &str, rule: Option<&BinningRule>) -> Result<Binned> {
    let spec = ds.schema().feature(feature)?;
    match spec.kind {
        FeatureKind::Categorical => {
            let j = ds.schema().position(feature).expect("feature exists");
            let labels = ds
                .column(j)
                .enumerate()
                .map(|(i, v)| {
                    v.map(Value::to_string).ok_or_else(|| DataError::MissingValue {
                        id: ds.id(i).to_string(),
                        feature: feature.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Binned {
                grouping: Grouping { labels },
                warnings: Vec::new(),
            })
        }
        FeatureKind::Numeric => match rule {
            Some(r) => bin(ds, r),
            None => Err(DataError::InvalidBins {
                feature: feature.to_string(),
                reason: "numeric attribute needs a binning rule".into(),
            }),
        },
    }
}
