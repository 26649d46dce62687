//! JSON payloads of the session API. Every response body carries
//! `schema_version`.

use std::collections::BTreeMap;

use fairloop_core::data::FeatureKind;
use fairloop_core::fairness::{FairnessReport, MetricValue};
use fairloop_core::integration::{FeedbackInstance, FeedbackLabel, FlipReference, IntegrationWarning, MetricDelta, PolicyKind};
use fairloop_core::session::FairnessStatus;
use fairloop_core::Outcome;
use serde::{Deserialize, Serialize};

pub const API_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub participant_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueLabel {
    pub value: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub display_label: String,
    pub kind: FeatureKind,
    pub protected: bool,
    /// Observed categories of a categorical attribute, in sorted order.
    pub values: Vec<ValueLabel>,
    /// Bin labels used to group a numeric attribute.
    pub bins: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub schema_version: u32,
    pub session_id: String,
    pub participant_id: String,
    pub baseline_fingerprint: String,
    pub attributes: Vec<AttributeSchema>,
    pub default_attributes: Vec<String>,
    pub n_applications: usize,
    /// Normalized feature weights of the baseline model, keyed by attribute.
    pub feature_weights: BTreeMap<String, f64>,
    pub policy: PolicyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationView {
    pub application_id: String,
    /// Display values after label transformation, keyed by attribute.
    pub attributes: BTreeMap<String, String>,
    pub prediction: Outcome,
    pub confidence: f64,
    pub status: FairnessStatus,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationsResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub step: usize,
    pub total: usize,
    pub applications: Vec<ApplicationView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub group: String,
    pub value: f64,
}

/// Lowest and highest group for one rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxBars {
    pub min: Bar,
    pub max: Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueShare {
    pub value: String,
    pub label: String,
    pub count: usize,
    pub accept_pct: f64,
    pub reject_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBlock {
    pub attribute: String,
    pub display_label: String,
    pub dpr: MetricValue,
    pub selection_rate: Option<MinMaxBars>,
    pub aod: MetricValue,
    pub tpr: Option<MinMaxBars>,
    pub fpr: Option<MinMaxBars>,
    pub eod: MetricValue,
    pub ppd: MetricValue,
    pub cdd: MetricValue,
    pub cf: MetricValue,
    pub distribution: Vec<ValueShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overview {
    /// Share of evaluation applications predicted Accept.
    pub acceptance_rate: f64,
    pub accuracy: MetricValue,
    pub consistency: MetricValue,
    pub theil: MetricValue,
    pub n_unfair: usize,
    pub n_checked: usize,
    pub n_feedback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub step: usize,
    pub model_fingerprint: String,
    pub attributes: Vec<AttributeBlock>,
    pub overview: Overview,
    pub report: FairnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub application_id: String,
    pub label: FeedbackLabel,
    /// Full raw weight map from the sliders; the server normalizes it.
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    /// Client clock; the server clock is used when absent.
    #[serde(default)]
    pub timestamp_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub step: usize,
    pub instance: FeedbackInstance,
    pub model_fingerprint: String,
    pub n_feedback_rows: usize,
    pub feature_weights: BTreeMap<String, f64>,
    pub deltas_vs_previous: Vec<MetricDelta>,
    pub deltas_vs_baseline: Vec<MetricDelta>,
    pub warnings: Vec<IntegrationWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub schema_version: u32,
    pub summary: StepView,
    pub application: ApplicationView,
    pub metrics: MetricsResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndoResponse {
    pub schema_version: u32,
    pub undone: FeedbackInstance,
    pub metrics: MetricsResponse,
}

/// Settings under which the exported log replays to the session's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySettings {
    pub mode: String,
    pub policy: PolicyKind,
    pub alpha: f64,
    pub flip_reference: FlipReference,
    pub baseline_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub participant_id: String,
    /// Active feedback log as JSON Lines, oldest first.
    pub feedback_jsonl: String,
    pub model_fingerprint: String,
    /// The current model in its JSON snapshot format.
    pub model: serde_json::Value,
    pub replay: ReplaySettings,
}
