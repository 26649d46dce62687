//! Application table and live metric payloads computed from a session.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use fairloop_core::artifacts::{ArtifactError, Baseline};
use fairloop_core::data::{grouping_for, BinningRule, FeatureKind, FeatureSpec, Grouping, Schema, Value};
use fairloop_core::fairness::{
    aod, cdd, dpr, eod, extremes, group_stats, ppd, CounterfactualProbe, GroupRates, GroupStats, MetricValue,
};
use fairloop_core::integration::{FlipReference, IntegrationPolicy, PolicyKind, RetrainContext};
use fairloop_core::session::{FairnessStatus, Session};
use fairloop_core::Outcome;

use crate::api::{
    ApplicationView, AttributeBlock, AttributeSchema, Bar, MetricsResponse, MinMaxBars, Overview, ValueLabel,
    ValueShare, API_SCHEMA_VERSION,
};
use crate::error::ApiError;

/// Policy every interactive session integrates feedback with.
pub const SESSION_POLICY: PolicyKind = PolicyKind::LabelsUnfairPlusWeights;

/// Flip reference for session feedback: the prediction the participant saw.
pub const SESSION_FLIP: FlipReference = FlipReference::ShownModel;

/// Baseline state shared read-only by every session.
#[derive(Debug)]
pub struct Loaded {
    pub ctx: Arc<RetrainContext>,
    pub schema: Schema,
    pub attributes: Vec<AttributeSchema>,
    pub default_attributes: Vec<String>,
    /// Binning rule for every numeric feature that can be grouped.
    rules: BTreeMap<String, BinningRule>,
}

impl Loaded {
    pub fn from_baseline(b: &Baseline) -> Result<Self, ArtifactError> {
        let ctx = Arc::new(b.context(IntegrationPolicy::new(SESSION_POLICY), SESSION_FLIP)?);
        let schema = b.prepared.config.schema()?;
        let mut rules = b.manifest.report_config.bins.clone();
        for f in schema.features() {
            if f.kind == FeatureKind::Numeric && !rules.contains_key(&f.name) {
                // constant columns have no quartiles and cannot be grouped
                if let Ok(rule) = BinningRule::quartiles(&b.prepared.train, &f.name) {
                    rules.insert(f.name.clone(), rule);
                }
            }
        }
        let attributes = schema
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let values = if f.kind == FeatureKind::Categorical {
                    let observed: BTreeSet<String> = [ctx.pool(), ctx.evaluator().dataset()]
                        .iter()
                        .flat_map(|ds| ds.column(j).flatten().map(Value::to_string))
                        .collect();
                    observed
                        .into_iter()
                        .map(|v| ValueLabel {
                            label: value_label(f, &v),
                            value: v,
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                AttributeSchema {
                    name: f.name.clone(),
                    display_label: f.label().to_string(),
                    kind: f.kind,
                    protected: f.protected,
                    values,
                    bins: rules.get(&f.name).map(|r| r.labels().to_vec()).unwrap_or_default(),
                }
            })
            .collect();
        Ok(Self {
            default_attributes: b.manifest.report_config.attributes.clone(),
            ctx,
            schema,
            attributes,
            rules,
        })
    }

    pub fn baseline_fingerprint(&self) -> &str {
        self.ctx.baseline().model.fingerprint()
    }

    /// Parses a comma-separated attribute list; empty or absent means the
    /// default attributes.
    pub fn parse_attributes(&self, raw: Option<&str>) -> Result<Vec<String>, ApiError> {
        let names: Vec<String> = raw
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if names.is_empty() {
            return Ok(self.default_attributes.clone());
        }
        for n in &names {
            if self.schema.feature(n).is_err() {
                return Err(ApiError::bad_request("unknown_attribute", format!("unknown attribute `{n}`"))
                    .with_detail(serde_json::json!({ "attribute": n })));
            }
        }
        Ok(names)
    }
}

fn value_label(spec: &FeatureSpec, value: &str) -> String {
    spec.value_labels.get(value).cloned().unwrap_or_else(|| value.to_string())
}

fn display_value(spec: &FeatureSpec, value: Option<&Value>) -> String {
    match value {
        None => String::new(),
        Some(Value::Cat(s)) => value_label(spec, s),
        Some(v) => v.to_string(),
    }
}

pub fn application_view(loaded: &Loaded, session: &Session, row: usize) -> ApplicationView {
    let pool = loaded.ctx.pool();
    let id = pool.id(row);
    let attributes = loaded
        .schema
        .features()
        .iter()
        .enumerate()
        .map(|(j, f)| (f.name.clone(), display_value(f, pool.value(row, j))))
        .collect();
    let pred = session.displayed_prediction(row);
    ApplicationView {
        application_id: id.to_string(),
        attributes,
        prediction: pred.label,
        confidence: pred.confidence,
        status: session.status(id),
        locked: session.locks().contains_key(id),
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Deserialize)]
pub struct ApplicationsQuery {
    pub sort: Option<String>,
    pub order: Option<String>,
    /// `key=value[|value...]` clauses joined by `,`; clauses AND, values OR.
    pub filter: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

enum SortKey {
    Id,
    Prediction,
    Confidence,
    Status,
    Feature(usize, FeatureKind),
}

enum FilterKey {
    Prediction,
    Status,
    Locked,
    Feature(usize),
}

fn status_rank(s: FairnessStatus) -> u8 {
    match s {
        FairnessStatus::Unchecked => 0,
        FairnessStatus::Checked => 1,
        FairnessStatus::Unfair => 2,
    }
}

fn status_name(s: FairnessStatus) -> &'static str {
    match s {
        FairnessStatus::Unchecked => "unchecked",
        FairnessStatus::Checked => "checked",
        FairnessStatus::Unfair => "unfair",
    }
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Accept => "accept",
        Outcome::Reject => "reject",
    }
}

/// Filtered and sorted application views. Ties keep pool order.
pub fn applications(loaded: &Loaded, session: &Session, q: &ApplicationsQuery) -> Result<(usize, Vec<ApplicationView>), ApiError> {
    let schema = &loaded.schema;
    let sort = match q.sort.as_deref().map(str::trim) {
        None | Some("") | Some("application_id") => SortKey::Id,
        Some("prediction") => SortKey::Prediction,
        Some("confidence") => SortKey::Confidence,
        Some("status") => SortKey::Status,
        Some(name) => match schema.position(name) {
            Some(j) => SortKey::Feature(j, schema.features()[j].kind),
            None => {
                return Err(ApiError::bad_request("unknown_sort_key", format!("cannot sort by `{name}`"))
                    .with_detail(serde_json::json!({ "sort": name })))
            }
        },
    };
    let descending = match q.order.as_deref().map(str::trim) {
        None | Some("") | Some("asc") => false,
        Some("desc") => true,
        Some(other) => {
            return Err(ApiError::bad_request("invalid_order", format!("order must be `asc` or `desc`, got `{other}`")))
        }
    };
    let mut clauses = Vec::new();
    for clause in q.filter.as_deref().unwrap_or("").split(',').filter(|c| !c.trim().is_empty()) {
        let Some((key, values)) = clause.split_once('=') else {
            return Err(ApiError::bad_request("invalid_filter", format!("filter clause `{clause}` is not key=value")));
        };
        let key = key.trim();
        let fk = match key {
            "prediction" => FilterKey::Prediction,
            "status" => FilterKey::Status,
            "locked" => FilterKey::Locked,
            name => match schema.position(name) {
                Some(j) => FilterKey::Feature(j),
                None => {
                    return Err(ApiError::bad_request("unknown_filter_key", format!("cannot filter by `{name}`"))
                        .with_detail(serde_json::json!({ "filter": name })))
                }
            },
        };
        let values: BTreeSet<String> = values.split('|').map(|v| v.trim().to_string()).collect();
        clauses.push((fk, values));
    }

    let pool = loaded.ctx.pool();
    let matches = |row: usize, view: &ApplicationView| {
        clauses.iter().all(|(k, values)| match k {
            FilterKey::Prediction => values.contains(outcome_name(view.prediction)),
            FilterKey::Status => values.contains(status_name(view.status)),
            FilterKey::Locked => values.contains(if view.locked { "true" } else { "false" }),
            FilterKey::Feature(j) => {
                let spec = &schema.features()[*j];
                let Some(v) = pool.value(row, *j) else {
                    return false;
                };
                let raw = v.to_string();
                if values.contains(&raw) || values.contains(&display_value(spec, Some(v))) {
                    return true;
                }
                match (v.as_num(), loaded.rules.get(&spec.name)) {
                    (Some(x), Some(rule)) => values.contains(rule.label_of(x)),
                    _ => false,
                }
            }
        })
    };
    let mut rows: Vec<(usize, ApplicationView)> = (0..pool.len())
        .map(|r| (r, application_view(loaded, session, r)))
        .filter(|(r, v)| matches(*r, v))
        .collect();
    let cmp = |a: &(usize, ApplicationView), b: &(usize, ApplicationView)| -> Ordering {
        match sort {
            SortKey::Id => a.1.application_id.cmp(&b.1.application_id),
            SortKey::Prediction => a.1.prediction.cmp(&b.1.prediction),
            SortKey::Confidence => a.1.confidence.total_cmp(&b.1.confidence),
            SortKey::Status => status_rank(a.1.status).cmp(&status_rank(b.1.status)),
            SortKey::Feature(j, FeatureKind::Numeric) => {
                let x = |r: usize| pool.value(r, j).and_then(Value::as_num).unwrap_or(f64::NEG_INFINITY);
                x(a.0).total_cmp(&x(b.0))
            }
            SortKey::Feature(j, FeatureKind::Categorical) => {
                let name = &schema.features()[j].name;
                a.1.attributes[name].cmp(&b.1.attributes[name])
            }
        }
    };
    rows.sort_by(|a, b| if descending { cmp(b, a) } else { cmp(a, b) });
    let total = rows.len();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(usize::MAX);
    Ok((total, rows.into_iter().skip(offset).take(limit).map(|(_, v)| v).collect()))
}

fn bars(stats: &GroupStats, rate: impl Fn(&GroupRates) -> Option<f64>) -> Option<MinMaxBars> {
    let defined: Vec<(String, f64)> = stats
        .groups
        .iter()
        .filter_map(|(g, r)| rate(r).map(|v| (g.clone(), v)))
        .collect();
    if defined.is_empty() {
        return None;
    }
    let ((lo_g, lo), (hi_g, hi)) = extremes(&defined);
    Some(MinMaxBars {
        min: Bar { group: lo_g, value: lo },
        max: Bar { group: hi_g, value: hi },
    })
}

fn attribute_block(
    loaded: &Loaded,
    session: &Session,
    labels: &[Outcome],
    attribute: &str,
) -> Result<AttributeBlock, ApiError> {
    let evaluator = loaded.ctx.evaluator();
    let spec = loaded.schema.feature(attribute).map_err(|e| ApiError::internal(e.to_string()))?;
    let rule = loaded.rules.get(attribute);
    let grouping: Grouping = match evaluator.grouping(attribute) {
        Some(g) => g.clone(),
        None => grouping_for(evaluator.dataset(), attribute, rule)
            .map_err(|e| {
                ApiError::bad_request("ungroupable_attribute", e.to_string())
                    .with_detail(serde_json::json!({ "attribute": attribute }))
            })?
            .grouping,
    };
    let stats = group_stats(labels, evaluator.truth(), &grouping);
    let on_stats = |f: &dyn Fn(&GroupStats) -> fairloop_core::fairness::Result<f64>| -> MetricValue {
        match &stats {
            Ok(s) => f(s).into(),
            Err(e) => MetricValue::Undefined { reason: e.to_string() },
        }
    };
    let reduction = evaluator.config().reduction;
    let (dpr_v, eod_v, aod_v, ppd_v, cdd_v, cf_v) = match session.report().attributes.get(attribute) {
        Some(m) => (m.dpr.clone(), m.eod.clone(), m.aod.clone(), m.ppd.clone(), m.cdd.clone(), m.cf.clone()),
        None => {
            let cf = match CounterfactualProbe::new(evaluator.dataset(), loaded.ctx.encoder(), attribute, rule) {
                Ok(p) => p.evaluate(&session.current().model, evaluator.matrix()).into(),
                Err(e) => MetricValue::Undefined { reason: e.to_string() },
            };
            (
                on_stats(&dpr),
                on_stats(&eod),
                on_stats(&|s| aod(s, reduction)),
                on_stats(&ppd),
                cdd(labels, &grouping, None).map(|c| c.value).into(),
                cf,
            )
        }
    };
    let distribution = match &stats {
        Ok(s) => s
            .groups
            .iter()
            .map(|(g, r)| {
                let accepted = r.true_accept + r.false_accept;
                let accept_pct = 100.0 * accepted as f64 / r.count as f64;
                ValueShare {
                    value: g.clone(),
                    label: value_label(spec, g),
                    count: r.count,
                    accept_pct,
                    reject_pct: 100.0 - accept_pct,
                }
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    let (sel, tpr, fpr) = match &stats {
        Ok(s) => (bars(s, |r| r.selection_rate), bars(s, |r| r.tpr), bars(s, |r| r.fpr)),
        Err(_) => (None, None, None),
    };
    Ok(AttributeBlock {
        attribute: attribute.to_string(),
        display_label: spec.label().to_string(),
        dpr: dpr_v,
        selection_rate: sel,
        aod: aod_v,
        tpr,
        fpr,
        eod: eod_v,
        ppd: ppd_v,
        cdd: cdd_v,
        cf: cf_v,
        distribution,
    })
}

pub fn metrics(loaded: &Loaded, session: &Session, attributes: &[String]) -> Result<MetricsResponse, ApiError> {
    let state = session.current();
    let preds = loaded
        .ctx
        .evaluator()
        .predict(&state.model)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let labels: Vec<Outcome> = preds.iter().map(|p| p.label).collect();
    let blocks = attributes
        .iter()
        .map(|a| attribute_block(loaded, session, &labels, a))
        .collect::<Result<Vec<_>, _>>()?;
    let report = session.report();
    let count = |s: FairnessStatus| session.locks().values().filter(|l| l.status == s).count();
    Ok(MetricsResponse {
        schema_version: API_SCHEMA_VERSION,
        session_id: session.id().to_string(),
        step: session.undo_depth(),
        model_fingerprint: state.model.fingerprint().to_string(),
        attributes: blocks,
        overview: Overview {
            acceptance_rate: report.metadata.acceptance_rate,
            accuracy: report.accuracy.clone(),
            consistency: report.consistency.clone(),
            theil: report.theil.clone(),
            n_unfair: count(FairnessStatus::Unfair),
            n_checked: count(FairnessStatus::Checked),
            n_feedback: session.undo_depth(),
        },
        report: report.clone(),
    })
}
