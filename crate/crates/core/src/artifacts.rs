//! On-disk artifacts shared by the command-line driver and the session
//! service.
//!
//! A prepared directory holds the imputed splits, the fitted imputer and
//! encoder, and the schema config. A baseline directory holds a copy of the
//! prepared directory under `prepared/` plus the trained model, its report and
//! the settings needed to rebuild the retrain context bit-exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, split, BinningRule, Dataset, EncodeWarning, Encoder, FeatureKind, Imputer, SchemaConfig, SplitMode,
};
use crate::fairness::{Evaluator, FairnessReport, ReportConfig};
use crate::gbdt::{GbdtParams, Model};
use crate::integration::{FlipReference, IntegrationPolicy, PolicyKind, RetrainContext};

pub const ARTIFACT_VERSION: u32 = 1;

const SCHEMA_FILE: &str = "schema.json";
const ENCODER_FILE: &str = "encoder.json";
const IMPUTER_FILE: &str = "imputer.json";
const PREPARED_MANIFEST: &str = "prepared.json";
const TRAIN_FILE: &str = "train.csv";
const TEST_FILE: &str = "test.csv";
const DISPLAY_FILE: &str = "display.csv";
const BASELINE_MANIFEST: &str = "baseline.json";
const MODEL_FILE: &str = "model.json";
const REPORT_FILE: &str = "report.json";
const PREPARED_SUBDIR: &str = "prepared";

/// Salt separating the display draw from the train/test draw under one seed.
const DISPLAY_SEED_SALT: u64 = 0x5eed_d15b_1a70_0001;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: artifact version {found}, expected {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{what} fingerprint mismatch: recorded {recorded}, found {found}")]
    Fingerprint { what: String, recorded: String, found: String },
    #[error("invalid artifact request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Gbdt(#[from] crate::gbdt::GbdtError),
    #[error(transparent)]
    Metric(#[from] crate::fairness::MetricError),
    #[error(transparent)]
    Integration(#[from] crate::integration::IntegrationError),
}

pub type Result<T, E = ArtifactError> = std::result::Result<T, E>;

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`,
/// so readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != ARTIFACT_VERSION {
        return Err(ArtifactError::Version {
            path: path.to_path_buf(),
            found,
            expected: ARTIFACT_VERSION,
        });
    }
    Ok(())
}

fn check_fingerprint(what: &str, recorded: &str, found: &str) -> Result<()> {
    if recorded != found {
        return Err(ArtifactError::Fingerprint {
            what: what.to_string(),
            recorded: recorded.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub version: u32,
    pub seed: u64,
    pub split: SplitMode,
    pub n_display: usize,
    pub source_fingerprint: String,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub display_fingerprint: String,
    pub encode_warnings: Vec<EncodeWarning>,
}

/// Imputed train/test/display splits with the encoder fitted on their union.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: SchemaConfig,
    pub imputer: Imputer,
    pub encoder: Encoder,
    pub train: Dataset,
    pub test: Dataset,
    pub display: Dataset,
    pub manifest: PrepareManifest,
}

/// Splits `raw` into train and rest with `mode`, then draws `n_display`
/// stratified rows from the rest as the application pool; the remainder is
/// the evaluation set. The imputer is fitted on train only.
pub fn prepare(raw: &Dataset, config: SchemaConfig, mode: SplitMode, n_display: usize, seed: u64) -> Result<Prepared> {
    let (train, rest) = split(raw, mode, seed)?;
    let (display, test) = if n_display == 0 {
        (rest.head(0), rest)
    } else {
        if n_display >= rest.len() {
            return Err(crate::data::DataError::InsufficientRows {
                requested: n_display + 1,
                available: rest.len(),
                detail: Some("display pool must leave at least one evaluation row".into()),
            }
            .into());
        }
        split(
            &rest,
            SplitMode::Stratified {
                n_train: n_display,
                n_test: rest.len() - n_display,
            },
            seed ^ DISPLAY_SEED_SALT,
        )?
    };
    let imputer = Imputer::fit(&train)?;
    let train = imputer.apply(&train)?;
    let test = imputer.apply(&test)?;
    let display = imputer.apply(&display)?;
    let union = train.append(
        test.ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), test.row(i).to_vec(), test.target(i)))
            .chain(
                display
                    .ids()
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), display.row(i).to_vec(), display.target(i))),
            ),
    )?;
    let (encoder, encode_warnings) = Encoder::fit(&union, &config.amount_features)?;
    let manifest = PrepareManifest {
        version: ARTIFACT_VERSION,
        seed,
        split: mode,
        n_display,
        source_fingerprint: raw.fingerprint(),
        train_fingerprint: train.fingerprint(),
        test_fingerprint: test.fingerprint(),
        display_fingerprint: display.fingerprint(),
        encode_warnings,
    };
    Ok(Prepared {
        config,
        imputer,
        encoder,
        train,
        test,
        display,
        manifest,
    })
}

impl Prepared {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(SCHEMA_FILE), &self.config)?;
        write_json(&dir.join(IMPUTER_FILE), &self.imputer)?;
        write_json(&dir.join(ENCODER_FILE), &self.encoder)?;
        for (file, ds) in [(TRAIN_FILE, &self.train), (TEST_FILE, &self.test), (DISPLAY_FILE, &self.display)] {
            write_atomic(&dir.join(file), ds.to_csv_string()?.as_bytes())?;
        }
        // manifest last: its presence marks a complete directory
        write_json(&dir.join(PREPARED_MANIFEST), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(PREPARED_MANIFEST);
        let manifest: PrepareManifest = read_json(&manifest_path)?;
        check_version(&manifest_path, manifest.version)?;
        let config = SchemaConfig::from_path(&dir.join(SCHEMA_FILE))?;
        let schema = config.schema()?;
        let imputer = read_json(&dir.join(IMPUTER_FILE))?;
        let encoder: Encoder = read_json(&dir.join(ENCODER_FILE))?;
        let train = load_csv(&dir.join(TRAIN_FILE), &schema)?;
        let test = load_csv(&dir.join(TEST_FILE), &schema)?;
        let display = load_csv(&dir.join(DISPLAY_FILE), &schema)?;
        check_fingerprint("train split", &manifest.train_fingerprint, &train.fingerprint())?;
        check_fingerprint("test split", &manifest.test_fingerprint, &test.fingerprint())?;
        check_fingerprint("display split", &manifest.display_fingerprint, &display.fingerprint())?;
        Ok(Self {
            config,
            imputer,
            encoder,
            train,
            test,
            display,
            manifest,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(PREPARED_MANIFEST).is_file()
    }
}

/// Report settings for the protected attributes of `config` (or the given
/// ones). Numeric attributes use the configured bin edges, falling back to
/// quartiles of the training split.
pub fn default_report_config(
    config: &SchemaConfig,
    train: &Dataset,
    attributes: Option<Vec<String>>,
) -> Result<ReportConfig> {
    let schema = config.schema()?;
    let attributes = attributes.unwrap_or_else(|| schema.protected());
    let mut bins = BTreeMap::new();
    for attr in &attributes {
        if schema.feature(attr)?.kind != FeatureKind::Numeric {
            continue;
        }
        let rule = match config.bins.get(attr) {
            Some(edges) => BinningRule::with_edges(train, attr, edges.clone())?,
            None => BinningRule::quartiles(train, attr)?,
        };
        bins.insert(attr.clone(), rule);
    }
    Ok(ReportConfig::new(attributes, bins))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineManifest {
    pub version: u32,
    pub seed: u64,
    pub params: GbdtParams,
    pub report_config: ReportConfig,
    pub model_fingerprint: String,
}

/// A trained baseline with everything needed to rebuild its retrain context.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub prepared: Prepared,
    pub manifest: BaselineManifest,
    pub model: Arc<Model>,
    pub report: FairnessReport,
}

impl Baseline {
    /// Trains the baseline on the prepared training split.
    pub fn train(prepared: Prepared, params: GbdtParams, report_config: ReportConfig, seed: u64) -> Result<Self> {
        let ctx = Self::build_context(
            &prepared,
            &params,
            &report_config,
            IntegrationPolicy::new(PolicyKind::Labels),
            FlipReference::Baseline,
        )?;
        let state = ctx.baseline().clone();
        Ok(Self {
            manifest: BaselineManifest {
                version: ARTIFACT_VERSION,
                seed,
                params,
                report_config,
                model_fingerprint: state.model.fingerprint().to_string(),
            },
            prepared,
            model: state.model.clone(),
            report: state.report.clone(),
        })
    }

    fn build_context(
        prepared: &Prepared,
        params: &GbdtParams,
        report_config: &ReportConfig,
        policy: IntegrationPolicy,
        flip: FlipReference,
    ) -> Result<RetrainContext> {
        let evaluator = Evaluator::new(&prepared.test, &prepared.encoder, report_config.clone())?;
        Ok(RetrainContext::new(
            prepared.encoder.clone(),
            prepared.train.clone(),
            prepared.display.clone(),
            evaluator,
            params.clone(),
            policy,
            flip,
        )?)
    }

    /// Retrain context over the display pool. The retrained baseline must
    /// reproduce the stored model fingerprint.
    pub fn context(&self, policy: IntegrationPolicy, flip: FlipReference) -> Result<RetrainContext> {
        let ctx = Self::build_context(&self.prepared, &self.manifest.params, &self.manifest.report_config, policy, flip)?;
        check_fingerprint(
            "baseline model",
            &self.manifest.model_fingerprint,
            ctx.baseline().model.fingerprint(),
        )?;
        Ok(ctx)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.prepared.write(&dir.join(PREPARED_SUBDIR))?;
        write_atomic(&dir.join(MODEL_FILE), self.model.to_json()?.as_bytes())?;
        write_json(&dir.join(REPORT_FILE), &self.report)?;
        write_json(&dir.join(BASELINE_MANIFEST), &self.manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(BASELINE_MANIFEST);
        let manifest: BaselineManifest = read_json(&manifest_path)?;
        check_version(&manifest_path, manifest.version)?;
        let prepared = Prepared::read(&dir.join(PREPARED_SUBDIR))?;
        let model_path = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&model_path).map_err(|source| ArtifactError::Io {
            path: model_path.clone(),
            source,
        })?;
        let model = Model::from_json(&text)?;
        check_fingerprint("baseline model", &manifest.model_fingerprint, model.fingerprint())?;
        let report = read_json(&dir.join(REPORT_FILE))?;
        Ok(Self {
            prepared,
            manifest,
            model: Arc::new(model),
            report,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(BASELINE_MANIFEST).is_file()
    }
}
