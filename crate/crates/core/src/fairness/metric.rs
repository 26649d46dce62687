use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// A metric result that may be undefined (e.g. a rate with a zero
/// denominator). Undefined values are carried explicitly, never as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricValue {
    Defined { value: f64 },
    Undefined { reason: String },
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Defined { value } => Some(*value),
            MetricValue::Undefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, MetricValue::Defined { .. })
    }
}

impl From<Result<f64, MetricError>> for MetricValue {
    fn from(r: Result<f64, MetricError>) -> Self {
        match r {
            Ok(value) => MetricValue::Defined { value },
            Err(e) => MetricValue::Undefined {
                reason: e.to_string(),
            },
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Defined { value } => write!(f, "{value:.4}"),
            MetricValue::Undefined { .. } => f.write_str("n/a"),
        }
    }
}

/// Which way a metric improves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ideal", rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
    Toward(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Consistency,
    Theil,
    Dpr,
    Cdd,
    Eod,
    Aod,
    Ppd,
    Cf,
}

impl Metric {
    pub const OVERALL: [Metric; 3] = [Metric::Accuracy, Metric::Consistency, Metric::Theil];
    pub const PER_ATTRIBUTE: [Metric; 6] = [
        Metric::Dpr,
        Metric::Cdd,
        Metric::Eod,
        Metric::Aod,
        Metric::Ppd,
        Metric::Cf,
    ];

    pub fn is_per_attribute(self) -> bool {
        Self::PER_ATTRIBUTE.contains(&self)
    }

    pub fn direction(self) -> Direction {
        match self {
            Metric::Accuracy | Metric::Consistency | Metric::Dpr | Metric::Cf => {
                Direction::HigherBetter
            }
            Metric::Theil | Metric::Cdd | Metric::Eod | Metric::Aod | Metric::Ppd => {
                Direction::LowerBetter
            }
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Metric::Accuracy => "Acc.",
            Metric::Consistency => "Cons.",
            Metric::Theil => "TI",
            Metric::Dpr => "DPR",
            Metric::Cdd => "CDD",
            Metric::Eod => "EOD",
            Metric::Aod => "AOD",
            Metric::Ppd => "PPD",
            Metric::Cf => "CF",
        }
    }

    /// Column header with the ideal value and improvement arrow, e.g. `DPR (≈ 1) (↑)`.
    pub fn header(self) -> String {
        let ideal = match self {
            Metric::Accuracy | Metric::Consistency | Metric::Dpr | Metric::Cf => "≈ 1",
            Metric::Cdd => "≤ 0",
            Metric::Theil | Metric::Eod | Metric::Aod | Metric::Ppd => "≈ 0",
        };
        let arrow = match self.direction() {
            Direction::HigherBetter => "↑",
            _ => "↓",
        };
        format!("{} ({ideal}) ({arrow})", self.short_name())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// A metric, optionally scoped to one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricKey {
    pub metric: Metric,
    pub attribute: Option<String>,
}

impl MetricKey {
    pub fn overall(metric: Metric) -> Self {
        Self {
            metric,
            attribute: None,
        }
    }

    pub fn for_attribute(metric: Metric, attribute: &str) -> Self {
        Self {
            metric,
            attribute: Some(attribute.to_string()),
        }
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(a) => write!(f, "{}[{a}]", self.metric),
            None => write!(f, "{}", self.metric),
        }
    }
}
