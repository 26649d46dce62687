//! Interactive per-participant state: feedback with synchronous retraining,
//! application locks and a full undo stack.
//!
//! A session's model after `k` active feedback instances is exactly the
//! personalized replay of those instances, so an exported log reproduces it.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fairness::FairnessReport;
use crate::gbdt::Prediction;
use crate::integration::{
    report_deltas, FeedbackChain, FeedbackInstance, FeedbackLabel, IntegrationError, IntegrationWarning,
    MetricDelta, RetrainContext, StepState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessStatus {
    Unchecked,
    Checked,
    Unfair,
}

/// Lock on an application that received feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lock {
    pub status: FairnessStatus,
    /// Prediction displayed when the feedback was given.
    pub shown: Prediction,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("application `{0}` is locked")]
    Locked(String),
    #[error("application `{0}` is not in the application pool")]
    UnknownApplication(String),
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
    #[error("nothing to undo")]
    EmptyUndo,
    #[error(transparent)]
    Integration(IntegrationError),
}

impl From<IntegrationError> for SessionError {
    fn from(e: IntegrationError) -> Self {
        match e {
            IntegrationError::UnknownApplication(a) => SessionError::UnknownApplication(a),
            IntegrationError::InvalidFeedback { reason, .. } => SessionError::InvalidFeedback(reason),
            e => SessionError::Integration(e),
        }
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// What one feedback step changed.
#[derive(Debug, Clone)]
pub struct StepSummary {
    pub step: usize,
    pub instance: FeedbackInstance,
    pub state: Arc<StepState>,
    pub deltas_vs_previous: Vec<MetricDelta>,
    pub deltas_vs_baseline: Vec<MetricDelta>,
    pub warnings: Vec<IntegrationWarning>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    participant_id: String,
    ctx: Arc<RetrainContext>,
    chain: FeedbackChain,
    locks: BTreeMap<String, Lock>,
    last_timestamp_ms: Option<i64>,
}

impl Session {
    pub fn new(id: &str, participant_id: &str, ctx: Arc<RetrainContext>) -> Self {
        Self {
            id: id.to_string(),
            participant_id: participant_id.to_string(),
            ctx,
            chain: FeedbackChain::new(),
            locks: BTreeMap::new(),
            last_timestamp_ms: None,
        }
    }

    /// Rebuilds a session by applying `log` in order.
    pub fn replay(id: &str, participant_id: &str, ctx: Arc<RetrainContext>, log: &[FeedbackInstance]) -> Result<Self> {
        let mut s = Self::new(id, participant_id, ctx);
        for f in log {
            s.feedback(&f.application_id, f.label, f.weights.clone(), f.timestamp_ms)?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn context(&self) -> &Arc<RetrainContext> {
        &self.ctx
    }

    pub fn current(&self) -> &Arc<StepState> {
        self.chain.current(&self.ctx)
    }

    pub fn report(&self) -> &FairnessReport {
        &self.current().report
    }

    pub fn locks(&self) -> &BTreeMap<String, Lock> {
        &self.locks
    }

    pub fn undo_depth(&self) -> usize {
        self.chain.len()
    }

    /// Active feedback log, oldest first.
    pub fn log(&self) -> Vec<FeedbackInstance> {
        self.chain.instances()
    }

    pub fn status(&self, application_id: &str) -> FairnessStatus {
        self.locks
            .get(application_id)
            .map_or(FairnessStatus::Unchecked, |l| l.status)
    }

    /// Prediction to display: frozen for locked applications, current otherwise.
    pub fn displayed_prediction(&self, pool_row: usize) -> Prediction {
        let id = self.ctx.pool().id(pool_row);
        match self.locks.get(id) {
            Some(l) => l.shown,
            None => self.current().pool_predictions[pool_row],
        }
    }

    /// Records feedback, retrains synchronously and locks the application.
    ///
    /// `timestamp_ms` is raised to one past the previous feedback if needed so
    /// the log stays strictly ordered.
    pub fn feedback(
        &mut self,
        application_id: &str,
        label: FeedbackLabel,
        weights: Option<BTreeMap<String, f64>>,
        timestamp_ms: i64,
    ) -> Result<StepSummary> {
        let row = self
            .ctx
            .pool()
            .position(application_id)
            .ok_or_else(|| SessionError::UnknownApplication(application_id.to_string()))?;
        if self.locks.contains_key(application_id) {
            return Err(SessionError::Locked(application_id.to_string()));
        }
        if label == FeedbackLabel::Fair {
            return Err(SessionError::InvalidFeedback(
                "sessions accept `unfair` or `weights_only` feedback".into(),
            ));
        }
        let timestamp_ms = match self.last_timestamp_ms {
            Some(last) if timestamp_ms <= last => last + 1,
            _ => timestamp_ms,
        };
        let instance = FeedbackInstance {
            participant_id: self.participant_id.clone(),
            application_id: application_id.to_string(),
            timestamp_ms,
            label,
            weights,
        };
        let shown = self.displayed_prediction(row);
        let previous = self.current().clone();
        let state = self.chain.push(&self.ctx, &instance)?.clone();
        self.last_timestamp_ms = Some(timestamp_ms);
        self.locks.insert(
            application_id.to_string(),
            Lock {
                status: if label == FeedbackLabel::Unfair {
                    FairnessStatus::Unfair
                } else {
                    FairnessStatus::Checked
                },
                shown,
            },
        );
        Ok(StepSummary {
            step: self.chain.len(),
            instance: self.chain.resolved().last().expect("pushed").instance.clone(),
            deltas_vs_previous: report_deltas(&previous.report, &state.report),
            deltas_vs_baseline: report_deltas(&self.ctx.baseline().report, &state.report),
            warnings: self.chain.warnings(self.chain.len() - 1).to_vec(),
            state,
        })
    }

    /// Removes the last feedback and restores the previous model, report and locks.
    pub fn undo(&mut self) -> Result<FeedbackInstance> {
        let r = self.chain.pop().ok_or(SessionError::EmptyUndo)?;
        self.locks.remove(&r.instance.application_id);
        Ok(r.instance)
    }
}
