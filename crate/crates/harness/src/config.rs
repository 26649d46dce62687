//! Experiment configuration: one JSON file, paths relative to its directory,
//! with command-line overrides applied on top.

use std::path::{Path, PathBuf};

use fairloop_core::data::{SchemaConfig, SplitMode};
use fairloop_core::fairness::GroupReduction;
use fairloop_core::gbdt::GbdtParams;
use fairloop_core::integration::{FlipReference, PolicyKind};
use fairloop_core::synth::{schema_config, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Global,
    Personalized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Global => "global",
            Mode::Personalized => "personalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Attributes to report; the schema's protected attributes when absent.
    pub attributes: Option<Vec<String>>,
    pub k: Option<usize>,
    /// CDD conditioning feature per attribute.
    pub strata: std::collections::BTreeMap<String, String>,
    pub reduction: GroupReduction,
    pub counterfactual: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Raw application CSV.
    pub data: Option<PathBuf>,
    /// Generate the raw data instead of reading `data`.
    pub synthetic: Option<SynthConfig>,
    /// Schema/binning config; the synthetic schema when absent and
    /// `synthetic` is set.
    pub schema: Option<PathBuf>,
    pub split: SplitMode,
    /// Applications drawn from the non-training rows for feedback.
    pub n_display: usize,
    pub gbdt: GbdtParams,
    pub report: ReportSettings,
    pub policy: PolicyKind,
    pub mode: Mode,
    pub alpha: f64,
    /// Defaults to `baseline` in global mode and `shown_model` in
    /// personalized mode.
    pub flip_reference: Option<FlipReference>,
    /// Feedback log: JSON Lines, or CSV when `mapping` is set.
    pub feedback: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub out: PathBuf,
    /// Drives the data split and the boosting seed.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: None,
            schema: None,
            split: SplitMode::Stratified {
                n_train: 700,
                n_test: 300,
            },
            n_display: 100,
            gbdt: GbdtParams::default(),
            report: ReportSettings::default(),
            policy: PolicyKind::LabelsUnfair,
            mode: Mode::Global,
            alpha: 1.0,
            flip_reference: None,
            feedback: None,
            mapping: None,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data);
        resolve(base, &mut cfg.schema);
        resolve(base, &mut cfg.feedback);
        resolve(base, &mut cfg.mapping);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn flip_reference(&self) -> FlipReference {
        self.flip_reference.unwrap_or(match self.mode {
            Mode::Global => FlipReference::Baseline,
            Mode::Personalized => FlipReference::ShownModel,
        })
    }

    /// Boosting parameters with the run seed.
    pub fn gbdt_params(&self) -> GbdtParams {
        GbdtParams {
            seed: self.seed,
            ..self.gbdt.clone()
        }
    }

    pub fn schema_config(&self) -> Result<SchemaConfig> {
        match (&self.schema, &self.synthetic) {
            (Some(p), _) => {
                require(p, "schema")?;
                Ok(SchemaConfig::from_path(p)?)
            }
            (None, Some(_)) => Ok(schema_config()),
            (None, None) => Err(HarnessError::Config("`schema` is required for CSV input".into())),
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.out.join("prepared")
    }

    pub fn baseline_dir(&self) -> PathBuf {
        self.out.join("baseline")
    }

    pub fn replay_dir(&self, mode: Mode, policies: &[PolicyKind]) -> PathBuf {
        let names: Vec<&str> = policies.iter().map(|p| p.as_str()).collect();
        self.out.join("replay").join(format!("{}-{}", mode.as_str(), names.join("+")))
    }
}

/// Fails unless `path` exists.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(HarnessError::Config(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(())
}
