use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeedbackInstance, FeedbackLabel, IntegrationError, Result};
use crate::gbdt::{normalize_weights, FeatureWeights};
use crate::Outcome;

/// Which feedback is integrated and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Unfair rows flipped, Fair rows added with the reference label.
    Labels,
    /// Only Unfair rows, flipped.
    LabelsUnfair,
    /// As `Labels`, plus submitted feature weights.
    #[serde(rename = "labels-weights")]
    LabelsPlusWeights,
    /// As `LabelsUnfair`, plus submitted feature weights.
    #[serde(rename = "labels-unfair-weights")]
    LabelsUnfairPlusWeights,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Labels,
        PolicyKind::LabelsUnfair,
        PolicyKind::LabelsPlusWeights,
        PolicyKind::LabelsUnfairPlusWeights,
    ];

    pub fn uses_weights(self) -> bool {
        matches!(self, PolicyKind::LabelsPlusWeights | PolicyKind::LabelsUnfairPlusWeights)
    }

    pub fn keeps_fair(self) -> bool {
        matches!(self, PolicyKind::Labels | PolicyKind::LabelsPlusWeights)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Labels => "labels",
            PolicyKind::LabelsUnfair => "labels-unfair",
            PolicyKind::LabelsPlusWeights => "labels-weights",
            PolicyKind::LabelsUnfairPlusWeights => "labels-unfair-weights",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = IntegrationError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| IntegrationError::Config(format!("unknown policy `{s}`")))
    }
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPolicy {
    pub kind: PolicyKind,
    /// Total feedback-row weight as a multiple of the original rows' total.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl IntegrationPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, alpha: 1.0 }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// The label that an Unfair judgement flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipReference {
    /// The baseline model's prediction.
    #[default]
    Baseline,
    /// The prediction of the model the participant was looking at, i.e. the
    /// model after all of their earlier feedback.
    ShownModel,
    /// The application's ground-truth label.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegrationWarning {
    /// Feedback the policy does not use.
    Ignored { application_id: String, participant_id: String, reason: String },
}

/// A feedback instance with its training-row target fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFeedback {
    pub instance: FeedbackInstance,
    pub pool_row: usize,
    /// Target of the row this judgement contributes, if any.
    pub target: Option<Outcome>,
}

/// Target contributed by one judgement under `kind`, given the reference label.
pub fn judgement_target(kind: PolicyKind, label: FeedbackLabel, reference: Outcome) -> Option<Outcome> {
    match label {
        FeedbackLabel::Unfair => Some(reference.flip()),
        FeedbackLabel::Fair if kind.keeps_fair() => Some(reference),
        _ => None,
    }
}

/// Latest judgement per `(participant, application)` among `resolved`
/// (chronological order, later entries win), sorted by application then
/// participant so the result does not depend on arrival order.
pub fn effective_rows(resolved: &[ResolvedFeedback]) -> Vec<&ResolvedFeedback> {
    let mut latest: BTreeMap<(&str, &str), &ResolvedFeedback> = BTreeMap::new();
    for r in resolved.iter().filter(|r| r.instance.label.is_judgement()) {
        latest.insert((&r.instance.application_id, &r.instance.participant_id), r);
    }
    latest.into_values().filter(|r| r.target.is_some()).collect()
}

/// Feature weights after merging submitted weight maps over `baseline`.
///
/// Per participant, submissions overwrite the running map feature by
/// feature in order; each participant's map is normalized, participants are
/// averaged and renormalized. With `alpha < 1` the result is blended with the
/// baseline as `(1 - alpha) * baseline + alpha * merged`; `alpha == 0` or no
/// submissions returns `baseline` unchanged.
pub fn merge_weights(
    baseline: &FeatureWeights,
    resolved: &[ResolvedFeedback],
    alpha: f64,
) -> Result<FeatureWeights> {
    let mut per_participant: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in resolved {
        if let Some(w) = &r.instance.weights {
            let map = per_participant
                .entry(&r.instance.participant_id)
                .or_insert_with(|| baseline.as_map().clone());
            for (k, v) in w {
                if !map.contains_key(k) {
                    return Err(IntegrationError::InvalidFeedback {
                        application_id: r.instance.application_id.clone(),
                        reason: format!("unknown feature `{k}` in weights"),
                    });
                }
                map.insert(k.clone(), *v);
            }
        }
    }
    if per_participant.is_empty() || alpha == 0.0 {
        return Ok(baseline.clone());
    }
    let mut sum: BTreeMap<String, f64> = baseline.as_map().keys().map(|k| (k.clone(), 0.0)).collect();
    for raw in per_participant.values() {
        let fw = normalize_weights(raw)?;
        for (k, v) in fw.as_map() {
            *sum.get_mut(k).expect("same keys") += v;
        }
    }
    let merged = normalize_weights(&sum)?;
    if alpha >= 1.0 {
        return Ok(merged);
    }
    let blended: BTreeMap<String, f64> = merged
        .as_map()
        .iter()
        .map(|(k, v)| (k.clone(), (1.0 - alpha) * baseline.get(k).unwrap_or(0.0) + alpha * v))
        .collect();
    Ok(normalize_weights(&blended)?)
}
