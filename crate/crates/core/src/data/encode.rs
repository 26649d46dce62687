use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureKind, Result, Schema, Value};
use crate::Outcome;

/// How one schema feature maps onto encoded columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroupEncoding {
    OneHot { categories: Vec<String> },
    /// `x -> (t(x) - min) / (max - min)` where `t` is a signed `log1p` for
    /// amount features and the identity otherwise. `min == max` encodes as 0.
    Numeric { log1p: bool, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedGroup {
    pub feature: String,
    pub offset: usize,
    pub width: usize,
    pub encoding: GroupEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSource {
    Category(String),
    Numeric,
}

/// Provenance of one encoded column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub feature: String,
    pub group: usize,
    pub source: ColumnSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodeWarning {
    ConstantColumn { feature: String },
    UnseenCategory { feature: String, value: String },
}

/// Fitted encoding: one-hot categoricals, min-max scaled numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    schema: Schema,
    groups: Vec<EncodedGroup>,
    columns: Vec<ColumnInfo>,
}

fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

impl Encoder {
    /// Learns categories and numeric ranges from an imputed dataset.
    pub fn fit(ds: &Dataset, amount_features: &[String]) -> Result<(Self, Vec<EncodeWarning>)> {
        let schema = ds.schema().clone();
        for name in amount_features {
            if schema.feature(name)?.kind != FeatureKind::Numeric {
                return Err(DataError::NotNumeric(name.clone()));
            }
        }
        let amounts: BTreeSet<&str> = amount_features.iter().map(String::as_str).collect();
        let mut groups = Vec::with_capacity(schema.len());
        let mut columns = Vec::new();
        let mut warnings = Vec::new();
        for (j, spec) in schema.features().iter().enumerate() {
            let offset = columns.len();
            let encoding = match spec.kind {
                FeatureKind::Categorical => {
                    let mut cats = BTreeSet::new();
                    for (i, v) in ds.column(j).enumerate() {
                        let v = v.ok_or_else(|| DataError::MissingValue {
                            id: ds.id(i).to_string(),
                            feature: spec.name.clone(),
                        })?;
                        cats.insert(v.to_string());
                    }
                    GroupEncoding::OneHot {
                        categories: cats.into_iter().collect(),
                    }
                }
                FeatureKind::Numeric => {
                    let log1p = amounts.contains(spec.name.as_str());
                    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                    for (i, v) in ds.column(j).enumerate() {
                        let x = v.and_then(Value::as_num).ok_or_else(|| DataError::MissingValue {
                            id: ds.id(i).to_string(),
                            feature: spec.name.clone(),
                        })?;
                        let t = if log1p { signed_log1p(x) } else { x };
                        min = min.min(t);
                        max = max.max(t);
                    }
                    if ds.is_empty() {
                        min = 0.0;
                        max = 0.0;
                    }
                    if min == max {
                        log::warn!("numeric feature `{}` is constant; encoded as zeros", spec.name);
                        warnings.push(EncodeWarning::ConstantColumn {
                            feature: spec.name.clone(),
                        });
                    }
                    GroupEncoding::Numeric { log1p, min, max }
                }
            };
            match &encoding {
                GroupEncoding::OneHot { categories } => {
                    columns.extend(categories.iter().map(|c| ColumnInfo {
                        feature: spec.name.clone(),
                        group: j,
                        source: ColumnSource::Category(c.clone()),
                    }))
                }
                GroupEncoding::Numeric { .. } => columns.push(ColumnInfo {
                    feature: spec.name.clone(),
                    group: j,
                    source: ColumnSource::Numeric,
                }),
            }
            groups.push(EncodedGroup {
                feature: spec.name.clone(),
                offset,
                width: columns.len() - offset,
                encoding,
            });
        }
        Ok((
            Self {
                schema,
                groups,
                columns,
            },
            warnings,
        ))
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn groups(&self) -> &[EncodedGroup] {
        &self.groups
    }

    pub fn group(&self, feature: &str) -> Result<&EncodedGroup> {
        let j = self
            .schema
            .position(feature)
            .ok_or_else(|| DataError::UnknownFeature(feature.to_string()))?;
        Ok(&self.groups[j])
    }

    pub fn column_map(&self) -> &[ColumnInfo] {
        &self.columns
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Encoded columns for one raw value of feature group `group`.
    ///
    /// Returns `false` alongside the values when a category was never seen at
    /// fit time (all indicator columns are then zero).
    pub fn encode_value(&self, group: usize, value: &Value) -> Result<(Vec<f64>, bool)> {
        let g = &self.groups[group];
        match &g.encoding {
            GroupEncoding::OneHot { categories } => {
                let key = value.to_string();
                let mut out = vec![0.0; g.width];
                match categories.binary_search(&key) {
                    Ok(pos) => {
                        out[pos] = 1.0;
                        Ok((out, true))
                    }
                    Err(_) => Ok((out, false)),
                }
            }
            GroupEncoding::Numeric { log1p, min, max } => {
                let x = value
                    .as_num()
                    .ok_or_else(|| DataError::KindMismatch(g.feature.clone()))?;
                let t = if *log1p { signed_log1p(x) } else { x };
                let scaled = if max > min { (t - min) / (max - min) } else { 0.0 };
                Ok((vec![scaled], true))
            }
        }
    }

    /// Encodes one complete raw row.
    pub fn transform_row(
        &self,
        row: &[Option<Value>],
        warnings: &mut Vec<EncodeWarning>,
    ) -> Result<Vec<f64>> {
        if row.len() != self.groups.len() {
            return Err(DataError::RowWidth {
                expected: self.groups.len(),
                found: row.len(),
            });
        }
        let mut out = Vec::with_capacity(self.columns.len());
        for (j, cell) in row.iter().enumerate() {
            let v = cell.as_ref().ok_or_else(|| DataError::MissingValue {
                id: String::new(),
                feature: self.groups[j].feature.clone(),
            })?;
            let (vals, seen) = self.encode_value(j, v)?;
            if !seen {
                warnings.push(EncodeWarning::UnseenCategory {
                    feature: self.groups[j].feature.clone(),
                    value: v.to_string(),
                });
            }
            out.extend(vals);
        }
        Ok(out)
    }

    /// Encodes an imputed dataset with this encoder's fitted state.
    pub fn transform(&self, ds: &Dataset) -> Result<(EncodedMatrix, Vec<EncodeWarning>)> {
        if ds.schema() != &self.schema {
            return Err(DataError::HeaderMismatch(vec![
                "dataset schema differs from encoder schema".into(),
            ]));
        }
        let mut columns = vec![Vec::with_capacity(ds.len()); self.columns.len()];
        let mut warnings = Vec::new();
        for i in 0..ds.len() {
            let row = self.transform_row(ds.row(i), &mut warnings).map_err(|e| match e {
                DataError::MissingValue { feature, .. } => DataError::MissingValue {
                    id: ds.id(i).to_string(),
                    feature,
                },
                e => e,
            })?;
            for (c, x) in row.into_iter().enumerate() {
                columns[c].push(x);
            }
        }
        Ok((
            EncodedMatrix {
                columns,
                column_map: self.columns.clone(),
                groups: self.groups.iter().map(|g| g.feature.clone()).collect(),
                ids: ds.ids().to_vec(),
                target: ds.targets().to_vec(),
            },
            warnings,
        ))
    }
}

/// Fits an encoder on `ds` and encodes it.
pub fn encode(
    ds: &Dataset,
    amount_features: &[String],
) -> Result<(EncodedMatrix, Vec<EncodeWarning>)> {
    let (enc, mut warnings) = Encoder::fit(ds, amount_features)?;
    let (m, w) = enc.transform(ds)?;
    warnings.extend(w);
    Ok((m, warnings))
}

/// Column-major numeric matrix with the column provenance and target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    columns: Vec<Vec<f64>>,
    column_map: Vec<ColumnInfo>,
    groups: Vec<String>,
    ids: Vec<String>,
    target: Vec<Option<Outcome>>,
}

impl EncodedMatrix {
    /// Builds a matrix directly from numeric columns; every column forms its
    /// own feature group named `f{index}`.
    pub fn from_columns(columns: Vec<Vec<f64>>, target: Vec<Option<Outcome>>) -> Self {
        let n = target.len();
        assert!(columns.iter().all(|c| c.len() == n), "ragged columns");
        let groups: Vec<String> = (0..columns.len()).map(|j| format!("f{j}")).collect();
        let column_map = groups
            .iter()
            .enumerate()
            .map(|(j, g)| ColumnInfo {
                feature: g.clone(),
                group: j,
                source: ColumnSource::Numeric,
            })
            .collect();
        Self {
            columns,
            column_map,
            groups,
            ids: (0..n).map(|i| i.to_string()).collect(),
            target,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn targets(&self) -> &[Option<Outcome>] {
        &self.target
    }

    pub fn labels(&self) -> Result<Vec<Outcome>> {
        self.target
            .iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| DataError::Unlabeled(self.ids[i].clone())))
            .collect()
    }

    pub fn column_map(&self) -> &[ColumnInfo] {
        &self.column_map
    }

    /// Feature-group names in schema order.
    pub fn group_names(&self) -> &[String] {
        &self.groups
    }

    /// Number of encoded columns per feature group.
    pub fn group_widths(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.column_map {
            *out.entry(c.feature.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Rows of `self` followed by rows of `other` (same column layout).
    pub fn append(&self, other: &EncodedMatrix) -> Result<EncodedMatrix> {
        if self.column_map != other.column_map {
            return Err(DataError::HeaderMismatch(vec!["column layouts differ".into()]));
        }
        let mut out = self.clone();
        for (c, col) in out.columns.iter_mut().enumerate() {
            col.extend_from_slice(&other.columns[c]);
        }
        out.ids.extend(other.ids.iter().cloned());
        out.target.extend(other.target.iter().copied());
        Ok(out)
    }

    /// Same values under new row ids and targets.
    pub fn relabeled(mut self, ids: Vec<String>, target: Vec<Option<Outcome>>) -> Result<EncodedMatrix> {
        if ids.len() != self.n_rows() || target.len() != self.n_rows() {
            return Err(DataError::RowWidth {
                expected: self.n_rows(),
                found: ids.len().max(target.len()),
            });
        }
        self.ids = ids;
        self.target = target;
        Ok(self)
    }

    pub fn subset(&self, rows: &[usize]) -> EncodedMatrix {
        EncodedMatrix {
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            column_map: self.column_map.clone(),
            groups: self.groups.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
        }
    }
}
