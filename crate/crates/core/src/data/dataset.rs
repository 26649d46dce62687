use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, FeatureKind, Result, Schema};
use crate::Outcome;

/// A single raw cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

/// Instance-id-indexed rows of raw values with an optional binary target.
///
/// Immutable once built; transformations return new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    ids: Vec<String>,
    rows: Vec<Vec<Option<Value>>>,
    target: Vec<Option<Outcome>>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        ids: Vec<String>,
        rows: Vec<Vec<Option<Value>>>,
        target: Vec<Option<Outcome>>,
    ) -> Result<Self> {
        assert_eq!(ids.len(), rows.len(), "ids and rows must align");
        assert_eq!(ids.len(), target.len(), "ids and targets must align");
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::DuplicateId(id.clone()));
            }
        }
        for row in &rows {
            if row.len() != schema.len() {
                return Err(DataError::RowWidth {
                    expected: schema.len(),
                    found: row.len(),
                });
            }
            for (spec, cell) in schema.features().iter().zip(row) {
                let ok = match (spec.kind, cell) {
                    (_, None) => true,
                    (FeatureKind::Numeric, Some(Value::Num(x))) => x.is_finite(),
                    (FeatureKind::Categorical, Some(Value::Cat(_))) => true,
                    _ => false,
                };
                if !ok {
                    return Err(DataError::KindMismatch(spec.name.clone()));
                }
            }
        }
        Ok(Self {
            schema,
            ids,
            rows,
            target,
            index,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[Option<Value>] {
        &self.rows[row]
    }

    pub fn value(&self, row: usize, feature: usize) -> Option<&Value> {
        self.rows[row][feature].as_ref()
    }

    pub fn target(&self, row: usize) -> Option<Outcome> {
        self.target[row]
    }

    pub fn targets(&self) -> &[Option<Outcome>] {
        &self.target
    }

    /// All targets, or the id of the first unlabeled row.
    pub fn labels(&self) -> Result<Vec<Outcome>> {
        self.target
            .iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| DataError::Unlabeled(self.ids[i].clone())))
            .collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Values of one feature across all rows.
    pub fn column(&self, feature: usize) -> impl Iterator<Item = Option<&Value>> + '_ {
        self.rows.iter().map(move |r| r[feature].as_ref())
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(Option::is_none)
    }

    /// New dataset containing the given rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let ids: Vec<String> = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Dataset {
            schema: self.schema.clone(),
            ids,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            index,
        }
    }

    /// First `n` rows (or all of them if shorter).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Rows of `self` followed by `extra`; ids must stay unique.
    pub fn append(
        &self,
        extra: impl IntoIterator<Item = (String, Vec<Option<Value>>, Option<Outcome>)>,
    ) -> Result<Dataset> {
        let mut ids = self.ids.clone();
        let mut rows = self.rows.clone();
        let mut target = self.target.clone();
        for (id, row, t) in extra {
            ids.push(id);
            rows.push(row);
            target.push(t);
        }
        Dataset::new(self.schema.clone(), ids, rows, target)
    }

    pub(crate) fn map_rows(
        &self,
        f: impl Fn(usize, &[Option<Value>]) -> Result<Vec<Option<Value>>>,
    ) -> Result<Dataset> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| f(i, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            schema: self.schema.clone(),
            ids: self.ids.clone(),
            rows,
            target: self.target.clone(),
            index: self.index.clone(),
        })
    }

    /// Content hash over ids, raw values and targets.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (i, id) in self.ids.iter().enumerate() {
            h.update(id.as_bytes());
            h.update([0u8]);
            for cell in &self.rows[i] {
                match cell {
                    None => h.update([0u8]),
                    Some(Value::Num(x)) => {
                        h.update([1u8]);
                        h.update(x.to_bits().to_le_bytes());
                    }
                    Some(Value::Cat(s)) => {
                        h.update([2u8]);
                        h.update(s.as_bytes());
                        h.update([0u8]);
                    }
                }
            }
            h.update([match self.target[i] {
                None => 0u8,
                Some(Outcome::Accept) => 1,
                Some(Outcome::Reject) => 2,
            }]);
        }
        hex::encode(h.finalize())
    }

    /// Writes the dataset as RFC-4180 CSV: id column, features in schema order, target.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        self.write_records(&mut w)?;
        w.flush().map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_records(&mut w)?;
        let bytes = w
            .into_inner()
            .map_err(|e| DataError::Csv(csv::Error::from(e.into_error())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_records<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let mut header = vec![self.schema.id_column().to_string()];
        header.extend(self.schema.features().iter().map(|f| f.name.clone()));
        header.push(self.schema.target_column().to_string());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(id.clone());
            rec.extend(
                self.rows[i]
                    .iter()
                    .map(|c| c.as_ref().map(Value::to_string).unwrap_or_default()),
            );
            rec.push(match self.target[i] {
                None => String::new(),
                Some(o) => format!("{}", o.target() as u8),
            });
            w.write_record(&rec)?;
        }
        Ok(())
    }
}

/// Reads a CSV file whose header contains the schema's id column and every
/// schema feature. The target column is optional; extra columns are ignored.
///
/// Empty or unparseable cells become missing values.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let position = |name: &str| header.iter().position(|h| h.trim() == name);

    let mut missing = Vec::new();
    let id_col = position(schema.id_column());
    if id_col.is_none() {
        missing.push(schema.id_column().to_string());
    }
    let feature_cols: Vec<Option<usize>> = schema
        .features()
        .iter()
        .map(|f| {
            let p = position(&f.name);
            if p.is_none() {
                missing.push(f.name.clone());
            }
            p
        })
        .collect();
    if !missing.is_empty() {
        return Err(DataError::HeaderMismatch(missing));
    }
    let id_col = id_col.expect("checked above");
    let target_col = position(schema.target_column());

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        let row = schema
            .features()
            .iter()
            .zip(&feature_cols)
            .map(|(spec, col)| {
                let raw = record.get(col.expect("checked above")).unwrap_or("").trim();
                parse_cell(spec.kind, raw)
            })
            .collect();
        let t = target_col
            .and_then(|c| record.get(c))
            .and_then(|s| s.trim().parse::<f64>().ok())
            .and_then(|x| match x {
                x if x == 0.0 => Some(Outcome::Accept),
                x if x == 1.0 => Some(Outcome::Reject),
                _ => None,
            });
        ids.push(id);
        rows.push(row);
        target.push(t);
    }
    Dataset::new(schema.clone(), ids, rows, target)
}

fn parse_cell(kind: FeatureKind, raw: &str) -> Option<Value> {
    if raw.is_empty() {
        return None;
    }
    match kind {
        FeatureKind::Categorical => Some(Value::Cat(raw.to_string())),
        FeatureKind::Numeric => raw
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::Num),
    }
}
