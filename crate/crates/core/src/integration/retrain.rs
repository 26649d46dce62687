use std::sync::Arc;

use super::policy::{effective_rows, judgement_target, merge_weights};
use super::series::{report_deltas, MetricDelta, MetricSeries};
use super::{
    chronological, FeedbackInstance, FeedbackLabel, FlipReference, IntegrationError, IntegrationPolicy,
    IntegrationWarning, ResolvedFeedback, Result,
};
use crate::data::{Dataset, EncodedMatrix, Encoder};
use crate::fairness::{Evaluator, FairnessReport};
use crate::gbdt::{balance_instance_weights, train, FeatureWeights, GbdtParams, InstanceWeights, Model, Prediction};
use crate::Outcome;

/// Model and derived state after one integration step.
#[derive(Debug, Clone)]
pub struct StepState {
    pub model: Arc<Model>,
    pub report: FairnessReport,
    /// Predictions on the application pool, in pool row order.
    pub pool_predictions: Vec<Prediction>,
    pub fw: FeatureWeights,
    pub n_feedback_rows: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub matrix: EncodedMatrix,
    pub iw: InstanceWeights,
    pub fw: FeatureWeights,
    pub n_feedback_rows: usize,
}

/// Augmented training data in raw form.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub dataset: Dataset,
    pub iw: InstanceWeights,
    pub fw: FeatureWeights,
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub model: Arc<Model>,
    pub report: FairnessReport,
    pub deltas: Vec<MetricDelta>,
    /// No feedback row was added and the weights are the baseline's.
    pub empty_feedback: bool,
    pub n_feedback_rows: usize,
    pub fw: FeatureWeights,
    pub warnings: Vec<IntegrationWarning>,
}

/// Fixed inputs shared by every retrain of one experiment or service.
#[derive(Debug)]
pub struct RetrainContext {
    encoder: Encoder,
    base: Dataset,
    base_matrix: EncodedMatrix,
    pool: Dataset,
    pool_matrix: EncodedMatrix,
    params: GbdtParams,
    policy: IntegrationPolicy,
    flip_reference: FlipReference,
    baseline_fw: FeatureWeights,
    evaluator: Evaluator,
    baseline: Arc<StepState>,
}

impl RetrainContext {
    /// Encodes the inputs and trains the class-balanced baseline.
    pub fn new(
        encoder: Encoder,
        base: Dataset,
        pool: Dataset,
        evaluator: Evaluator,
        params: GbdtParams,
        policy: IntegrationPolicy,
        flip_reference: FlipReference,
    ) -> Result<Self> {
        let params = params.validated()?;
        if !(policy.alpha >= 0.0 && policy.alpha.is_finite()) {
            return Err(IntegrationError::Config(format!("alpha must be >= 0, got {}", policy.alpha)));
        }
        let (base_matrix, _) = encoder.transform(&base)?;
        base_matrix.labels()?;
        let (pool_matrix, _) = encoder.transform(&pool)?;
        let baseline_fw = FeatureWeights::uniform(base_matrix.group_names());
        let iw = balance_instance_weights(&base_matrix, &[], policy.alpha)?;
        let baseline = Arc::new(train_state(
            &base_matrix,
            &iw,
            &baseline_fw,
            0,
            &params,
            &evaluator,
            &pool_matrix,
        )?);
        Ok(Self {
            encoder,
            base,
            base_matrix,
            pool,
            pool_matrix,
            params,
            policy,
            flip_reference,
            baseline_fw,
            evaluator,
            baseline,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn pool(&self) -> &Dataset {
        &self.pool
    }

    pub fn pool_matrix(&self) -> &EncodedMatrix {
        &self.pool_matrix
    }

    pub fn params(&self) -> &GbdtParams {
        &self.params
    }

    pub fn policy(&self) -> IntegrationPolicy {
        self.policy
    }

    pub fn flip_reference(&self) -> FlipReference {
        self.flip_reference
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    pub fn baseline_fw(&self) -> &FeatureWeights {
        &self.baseline_fw
    }

    pub fn baseline(&self) -> &Arc<StepState> {
        &self.baseline
    }

    /// Validates `instance` and fixes its row target against `shown`, the
    /// pool predictions of the model the participant saw.
    pub fn resolve(
        &self,
        instance: &FeedbackInstance,
        shown: &[Prediction],
    ) -> Result<(ResolvedFeedback, Vec<IntegrationWarning>)> {
        instance.validate()?;
        let pool_row = self
            .pool
            .position(&instance.application_id)
            .ok_or_else(|| IntegrationError::UnknownApplication(instance.application_id.clone()))?;
        if let Some(w) = &instance.weights {
            if let Some(k) = w.keys().find(|k| self.baseline_fw.get(k).is_none()) {
                return Err(IntegrationError::InvalidFeedback {
                    application_id: instance.application_id.clone(),
                    reason: format!("unknown feature `{k}` in weights"),
                });
            }
        }
        let kind = self.policy.kind;
        let mut warnings = Vec::new();
        let mut ignore = |reason: &str| {
            log::warn!(
                "feedback by `{}` on `{}`: {reason}",
                instance.participant_id,
                instance.application_id
            );
            warnings.push(IntegrationWarning::Ignored {
                application_id: instance.application_id.clone(),
                participant_id: instance.participant_id.clone(),
                reason: reason.to_string(),
            });
        };
        let mut instance = instance.clone();
        if instance.weights.is_some() && !kind.uses_weights() {
            ignore(&format!("weights are not integrated under policy {kind}"));
            instance.weights = None;
        }
        let target = match instance.label {
            FeedbackLabel::WeightsOnly => None,
            label => {
                let reference = match self.flip_reference {
                    FlipReference::Baseline => self.baseline.pool_predictions[pool_row].label,
                    FlipReference::ShownModel => shown
                        .get(pool_row)
                        .ok_or_else(|| IntegrationError::Config("shown predictions do not cover the pool".into()))?
                        .label,
                    FlipReference::GroundTruth => self
                        .pool
                        .target(pool_row)
                        .ok_or_else(|| IntegrationError::Unlabeled(instance.application_id.clone()))?,
                };
                let t = judgement_target(kind, label, reference);
                if t.is_none() {
                    ignore(&format!("fair judgements are not integrated under policy {kind}"));
                }
                t
            }
        };
        Ok((
            ResolvedFeedback {
                instance,
                pool_row,
                target,
            },
            warnings,
        ))
    }

    fn rows(&self, resolved: &[ResolvedFeedback]) -> (Vec<usize>, Vec<String>, Vec<Option<Outcome>>) {
        let rows = effective_rows(resolved);
        (
            rows.iter().map(|r| r.pool_row).collect(),
            rows.iter()
                .map(|r| format!("{}@{}", r.instance.application_id, r.instance.participant_id))
                .collect(),
            rows.iter().map(|r| r.target).collect(),
        )
    }

    fn feature_weights(&self, resolved: &[ResolvedFeedback]) -> Result<FeatureWeights> {
        if self.policy.kind.uses_weights() {
            merge_weights(&self.baseline_fw, resolved, self.policy.alpha)
        } else {
            Ok(self.baseline_fw.clone())
        }
    }

    /// Encoded training matrix with feedback rows appended, plus weights.
    pub fn training_set(&self, resolved: &[ResolvedFeedback]) -> Result<TrainingSet> {
        let (pool_rows, ids, targets) = self.rows(resolved);
        let n_feedback_rows = pool_rows.len();
        let extra = self.pool_matrix.subset(&pool_rows).relabeled(ids, targets)?;
        let matrix = self.base_matrix.append(&extra)?;
        let block: Vec<usize> = (self.base_matrix.n_rows()..matrix.n_rows()).collect();
        let iw = balance_instance_weights(&matrix, &block, self.policy.alpha)?;
        Ok(TrainingSet {
            matrix,
            iw,
            fw: self.feature_weights(resolved)?,
            n_feedback_rows,
        })
    }

    /// The augmented training set in raw form, rows in training order.
    pub fn apply_policy(&self, resolved: &[ResolvedFeedback]) -> Result<Augmented> {
        let (pool_rows, ids, targets) = self.rows(resolved);
        let dataset = self.base.append(
            pool_rows
                .iter()
                .zip(ids)
                .zip(targets)
                .map(|((&r, id), t)| (id, self.pool.row(r).to_vec(), t)),
        )?;
        let set = self.training_set(resolved)?;
        Ok(Augmented {
            dataset,
            iw: set.iw,
            fw: set.fw,
        })
    }

    fn state_for(&self, set: TrainingSet) -> Result<StepState> {
        train_state(
            &set.matrix,
            &set.iw,
            &set.fw,
            set.n_feedback_rows,
            &self.params,
            &self.evaluator,
            &self.pool_matrix,
        )
    }

    /// Trains on `resolved` without reusing the baseline for identical inputs.
    pub fn retrain_uncached(&self, resolved: &[ResolvedFeedback]) -> Result<StepState> {
        self.state_for(self.training_set(resolved)?)
    }

    /// Retrains from scratch on the base rows plus `resolved` feedback.
    pub fn retrain(&self, resolved: &[ResolvedFeedback]) -> Result<Arc<StepState>> {
        let set = self.training_set(resolved)?;
        if set.n_feedback_rows == 0 && set.fw == self.baseline_fw {
            // identical training inputs
            return Ok(self.baseline.clone());
        }
        Ok(Arc::new(self.state_for(set)?))
    }

    pub fn outcome(&self, state: &StepState, warnings: Vec<IntegrationWarning>) -> RetrainOutcome {
        RetrainOutcome {
            model: state.model.clone(),
            report: state.report.clone(),
            deltas: report_deltas(&self.baseline.report, &state.report),
            empty_feedback: state.n_feedback_rows == 0 && state.fw == self.baseline_fw,
            n_feedback_rows: state.n_feedback_rows,
            fw: state.fw.clone(),
            warnings,
        }
    }
}

fn train_state(
    matrix: &EncodedMatrix,
    iw: &InstanceWeights,
    fw: &FeatureWeights,
    n_feedback_rows: usize,
    params: &GbdtParams,
    evaluator: &Evaluator,
    pool: &EncodedMatrix,
) -> Result<StepState> {
    let model = train(matrix, params, iw, fw)?;
    let report = evaluator.report(&model)?;
    let pool_predictions = model.predict_matrix(pool)?;
    Ok(StepState {
        model: Arc::new(model),
        report,
        pool_predictions,
        fw: fw.clone(),
        n_feedback_rows,
    })
}

/// Feedback integrated one instance at a time, each step retrained from
/// scratch on all instances so far. Popping restores the previous step.
#[derive(Debug, Clone, Default)]
pub struct FeedbackChain {
    resolved: Vec<ResolvedFeedback>,
    states: Vec<Arc<StepState>>,
    warnings: Vec<Vec<IntegrationWarning>>,
}

impl FeedbackChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }

    pub fn current<'a>(&'a self, ctx: &'a RetrainContext) -> &'a Arc<StepState> {
        self.states.last().unwrap_or(ctx.baseline())
    }

    pub fn resolved(&self) -> &[ResolvedFeedback] {
        &self.resolved
    }

    pub fn instances(&self) -> Vec<FeedbackInstance> {
        self.resolved.iter().map(|r| r.instance.clone()).collect()
    }

    pub fn states(&self) -> &[Arc<StepState>] {
        &self.states
    }

    pub fn warnings(&self, step: usize) -> &[IntegrationWarning] {
        &self.warnings[step]
    }

    /// Integrates one more instance; on error the chain is unchanged.
    pub fn push(&mut self, ctx: &RetrainContext, instance: &FeedbackInstance) -> Result<&Arc<StepState>> {
        let (r, warnings) = ctx.resolve(instance, &self.current(ctx).pool_predictions)?;
        self.resolved.push(r);
        match ctx.retrain(&self.resolved) {
            Ok(state) => {
                self.states.push(state);
                self.warnings.push(warnings);
                Ok(self.states.last().expect("just pushed"))
            }
            Err(e) => {
                self.resolved.pop();
                Err(e)
            }
        }
    }

    pub fn pop(&mut self) -> Option<ResolvedFeedback> {
        self.states.pop()?;
        self.warnings.pop();
        self.resolved.pop()
    }
}

/// One retrain over all feedback; the latest judgement per
/// `(participant, application)` counts.
pub fn retrain_global(ctx: &RetrainContext, feedback: &[FeedbackInstance]) -> Result<RetrainOutcome> {
    if ctx.flip_reference == FlipReference::ShownModel {
        return Err(IntegrationError::Config(
            "global mode has no per-participant shown model; use baseline or ground_truth".into(),
        ));
    }
    let mut resolved = Vec::with_capacity(feedback.len());
    let mut warnings = Vec::new();
    let shown = &ctx.baseline.pool_predictions;
    for f in chronological(feedback) {
        let (r, w) = ctx.resolve(&f, shown)?;
        resolved.push(r);
        warnings.extend(w);
    }
    let state = ctx.retrain(&resolved)?;
    let outcome = ctx.outcome(&state, warnings);
    if outcome.empty_feedback {
        log::warn!("no effective feedback under policy {}; model equals the baseline", ctx.policy.kind);
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct PersonalizedRun {
    pub participant_id: String,
    pub outcomes: Vec<RetrainOutcome>,
    pub series: MetricSeries,
    /// Last CMA value of each metric against the baseline.
    pub final_deltas: Vec<MetricDelta>,
}

/// One retrain per feedback instance of a single participant, in timestamp order.
pub fn retrain_personalized(ctx: &RetrainContext, feedback: &[FeedbackInstance]) -> Result<PersonalizedRun> {
    let first = feedback.first().ok_or(IntegrationError::EmptyFeedback)?;
    if let Some(other) = feedback.iter().find(|f| f.participant_id != first.participant_id) {
        return Err(IntegrationError::MixedParticipants(
            first.participant_id.clone(),
            other.participant_id.clone(),
        ));
    }
    let mut chain = FeedbackChain::new();
    let mut series = MetricSeries::new(&ctx.baseline.report);
    let mut outcomes = Vec::with_capacity(feedback.len());
    for f in chronological(feedback) {
        let state = chain.push(ctx, &f)?.clone();
        series.push(&state.report);
        outcomes.push(ctx.outcome(&state, chain.warnings(chain.len() - 1).to_vec()));
    }
    Ok(PersonalizedRun {
        participant_id: first.participant_id.clone(),
        final_deltas: series.final_deltas(),
        outcomes,
        series,
    })
}
