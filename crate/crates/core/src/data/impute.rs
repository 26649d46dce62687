use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureKind, Result, Value};

/// Category substituted for missing categorical cells.
pub const UNKNOWN_CATEGORY: &str = "Unknown";

/// Per-feature fill values learned from a dataset: column medians for numeric
/// features, [`UNKNOWN_CATEGORY`] for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    medians: BTreeMap<String, f64>,
}

impl Imputer {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let mut medians = BTreeMap::new();
        for (j, spec) in ds.schema().features().iter().enumerate() {
            if spec.kind != FeatureKind::Numeric {
                continue;
            }
            let mut observed: Vec<f64> = ds.column(j).filter_map(|v| v?.as_num()).collect();
            let m = median(&mut observed).ok_or_else(|| DataError::AllMissing(spec.name.clone()))?;
            medians.insert(spec.name.clone(), m);
        }
        Ok(Self { medians })
    }

    pub fn median(&self, feature: &str) -> Option<f64> {
        self.medians.get(feature).copied()
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let fills: Vec<Value> = ds
            .schema()
            .features()
            .iter()
            .map(|spec| match spec.kind {
                FeatureKind::Categorical => Ok(Value::Cat(UNKNOWN_CATEGORY.to_string())),
                FeatureKind::Numeric => self
                    .medians
                    .get(&spec.name)
                    .map(|m| Value::Num(*m))
                    .ok_or_else(|| DataError::UnknownFeature(spec.name.clone())),
            })
            .collect::<Result<_>>()?;
        ds.map_rows(|_, row| {
            Ok(row
                .iter()
                .zip(&fills)
                .map(|(cell, fill)| Some(cell.clone().unwrap_or_else(|| fill.clone())))
                .collect())
        })
    }
}

/// Fills every missing value using the dataset's own column medians (numeric)
/// or [`UNKNOWN_CATEGORY`] (categorical).
pub fn impute(ds: &Dataset) -> Result<Dataset> {
    Imputer::fit(ds)?.apply(ds)
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}
