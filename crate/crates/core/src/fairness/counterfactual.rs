use rayon::prelude::*;

use super::{MetricError, Result};
use crate::data::{grouping_for, median, BinningRule, Dataset, EncodedMatrix, Encoder, Value};
use crate::gbdt::Model;

/// Precomputed substitutions for counterfactual flips of one attribute.
///
/// Categorical attributes substitute every other observed category; binned
/// numerics substitute the median of every other observed bin.
#[derive(Debug, Clone)]
pub struct CounterfactualProbe {
    attribute: String,
    offset: usize,
    width: usize,
    /// Encoded replacement columns per observed value, sorted by label.
    values: Vec<(String, Vec<f64>)>,
    /// Index into `values` of each row's own value.
    own: Vec<usize>,
}

impl CounterfactualProbe {
    pub fn new(ds: &Dataset, encoder: &Encoder, attribute: &str, rule: Option<&BinningRule>) -> Result<Self> {
        let grouping = grouping_for(ds, attribute, rule)?.grouping;
        let labels = grouping.values();
        if labels.len() < 2 {
            return Err(MetricError::TooFewGroups {
                metric: "CF",
                found: labels.len(),
            });
        }
        let j = ds.schema().position(attribute).expect("grouping checked the feature");
        let group = encoder.group(attribute)?;
        let mut values = Vec::with_capacity(labels.len());
        for label in &labels {
            let raw = match rule {
                None => Value::Cat(label.clone()),
                Some(_) => {
                    let mut xs: Vec<f64> = ds
                        .column(j)
                        .zip(&grouping.labels)
                        .filter(|(_, l)| *l == label)
                        .filter_map(|(v, _)| v.and_then(Value::as_num))
                        .collect();
                    Value::Num(median(&mut xs).expect("observed bins are non-empty"))
                }
            };
            let (enc, _) = encoder.encode_value(j, &raw)?;
            values.push((label.clone(), enc));
        }
        let own = grouping
            .labels
            .iter()
            .map(|l| labels.binary_search(l).expect("label from the same grouping"))
            .collect();
        Ok(Self {
            attribute: attribute.to_string(),
            offset: group.offset,
            width: group.width,
            values,
            own,
        })
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Observed values with their substituted encodings.
    pub fn values(&self) -> &[(String, Vec<f64>)] {
        &self.values
    }

    /// Whether each row's predicted label survives every flip.
    pub fn invariant_rows(&self, model: &Model, matrix: &EncodedMatrix) -> Result<Vec<bool>> {
        if matrix.n_rows() != self.own.len() {
            return Err(MetricError::Invalid(format!(
                "probe built for {} rows, matrix has {}",
                self.own.len(),
                matrix.n_rows()
            )));
        }
        if model.n_columns() != matrix.n_cols() {
            return Err(crate::gbdt::GbdtError::Dimension {
                expected: model.n_columns(),
                found: matrix.n_cols(),
            }
            .into());
        }
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut row = matrix.row(i);
                let label = model.predict(&row).expect("dimension checked").label;
                self.values.iter().enumerate().filter(|(v, _)| *v != self.own[i]).all(|(_, (_, enc))| {
                    row[self.offset..self.offset + self.width].copy_from_slice(enc);
                    model.predict(&row).expect("dimension checked").label == label
                })
            })
            .collect())
    }

    /// Fraction of rows whose predicted label survives every flip.
    pub fn evaluate(&self, model: &Model, matrix: &EncodedMatrix) -> Result<f64> {
        let rows = self.invariant_rows(model, matrix)?;
        Ok(rows.iter().filter(|&&b| b).count() as f64 / rows.len() as f64)
    }
}

pub fn counterfactual(
    model: &Model,
    encoder: &Encoder,
    ds: &Dataset,
    attribute: &str,
    rule: Option<&BinningRule>,
) -> Result<f64> {
    let probe = CounterfactualProbe::new(ds, encoder, attribute, rule)?;
    let (matrix, _) = encoder.transform(ds)?;
    probe.evaluate(model, &matrix)
}
