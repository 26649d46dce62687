use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub protected: bool,
    #[serde(default)]
    pub display_label: String,
    /// Optional relabeling of raw category codes for display (e.g. `F` -> `Female`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub value_labels: BTreeMap<String, String>,
}

impl FeatureSpec {
    pub fn categorical(name: &str) -> Self {
        Self::new(name, FeatureKind::Categorical)
    }

    pub fn numeric(name: &str) -> Self {
        Self::new(name, FeatureKind::Numeric)
    }

    fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            protected: false,
            display_label: name.to_string(),
            value_labels: BTreeMap::new(),
        }
    }

    pub fn protected(mut self) -> Self {
        self.protected = true;
        self
    }

    pub fn label(&self) -> &str {
        if self.display_label.is_empty() {
            &self.name
        } else {
            &self.display_label
        }
    }
}

/// Ordered feature list plus the names of the id and target columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr")]
pub struct Schema {
    features: Vec<FeatureSpec>,
    id_column: String,
    target_column: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.id_column == other.id_column
            && self.target_column == other.target_column
    }
}

#[derive(Deserialize)]
struct SchemaRepr {
    features: Vec<FeatureSpec>,
    #[serde(default = "default_id")]
    id_column: String,
    #[serde(default = "default_target")]
    target_column: String,
}

impl TryFrom<SchemaRepr> for Schema {
    type Error = DataError;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        Schema::with_columns(r.features, &r.id_column, &r.target_column)
    }
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        Self::with_columns(features, "id", "target")
    }

    pub fn with_columns(
        features: Vec<FeatureSpec>,
        id_column: &str,
        target_column: &str,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.name.clone(), i).is_some() {
                return Err(DataError::DuplicateFeature(f.name.clone()));
            }
        }
        if index.contains_key(id_column) || index.contains_key(target_column) {
            return Err(DataError::DuplicateFeature(
                if index.contains_key(id_column) { id_column } else { target_column }.to_string(),
            ));
        }
        Ok(Self {
            features,
            id_column: id_column.to_string(),
            target_column: target_column.to_string(),
            index,
        })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn id_column(&self) -> &str {
        &self.id_column
    }

    pub fn target_column(&self) -> &str {
        &self.target_column
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureSpec> {
        self.position(name)
            .map(|i| &self.features[i])
            .ok_or_else(|| DataError::UnknownFeature(name.to_string()))
    }

    /// Names of the protected features, in schema order.
    pub fn protected(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|f| f.protected)
            .map(|f| f.name.clone())
            .collect()
    }
}

fn default_id() -> String {
    "id".to_string()
}

fn default_target() -> String {
    "target".to_string()
}

/// The JSON schema/binning configuration file.
///
/// ```json
/// { "features": [{"name": "Gender", "kind": "categorical", "protected": true, "display_label": "Gender"}],
///   "bins": {"Age": [30, 45, 60]}, "amount_features": ["Credit amount"], "seed": 7 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub bins: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub amount_features: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_target")]
    pub target_column: String,
}

impl SchemaConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: SchemaConfig = serde_json::from_str(text)?;
        // validate eagerly so a bad config fails at load time
        let schema = config.schema()?;
        for name in config.bins.keys().chain(config.amount_features.iter()) {
            if schema.feature(name)?.kind != FeatureKind::Numeric {
                return Err(DataError::NotNumeric(name.clone()));
            }
        }
        Ok(config)
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::with_columns(self.features.clone(), &self.id_column, &self.target_column)
    }
}
