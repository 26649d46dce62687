//! Report tables. Every table is a pure function of emitted rows, so the
//! `report` command can rebuild each cell from the series files alone.

use std::collections::BTreeMap;
use std::path::Path;

use fairloop_core::artifacts::write_atomic;
use fairloop_core::fairness::{FairnessReport, Metric, MetricKey};
use fairloop_core::integration::{MetricDelta, PersonalizedRun, PolicyKind};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// Changes above this magnitude (percent) fall in the dark band.
pub const HIGHLIGHT_THRESHOLD_PCT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// No change, or the change is undefined.
    None,
    /// Magnitude at most the threshold.
    Light,
    /// Magnitude above the threshold.
    Dark,
}

pub fn band(change: Option<f64>) -> Band {
    match change {
        None => Band::None,
        Some(c) if c == 0.0 => Band::None,
        Some(c) if c.abs() <= HIGHLIGHT_THRESHOLD_PCT => Band::Light,
        Some(_) => Band::Dark,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// Percent of the baseline.
    Percent,
    /// Absolute difference, used when the baseline is 0.
    Absolute,
}

/// One metric cell against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCells {
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    pub change: Option<f64>,
    pub change_kind: Option<ChangeKind>,
    pub improvement: Option<bool>,
    pub highlight_band: Band,
}

impl DeltaCells {
    pub fn from_values(key: &MetricKey, baseline: Option<f64>, value: Option<f64>) -> Self {
        Self::from_delta(&MetricDelta::new(key, baseline, value))
    }

    pub fn from_delta(d: &MetricDelta) -> Self {
        Self {
            baseline: d.baseline,
            value: d.value,
            change: d.change.map(|c| c.raw),
            change_kind: d.change.map(|c| if c.relative { ChangeKind::Percent } else { ChangeKind::Absolute }),
            improvement: d.change.map(|c| c.improvement),
            highlight_band: band(d.change.map(|c| c.raw)),
        }
    }
}

fn attr_cell(a: &Option<String>) -> String {
    a.clone().unwrap_or_default()
}

fn parse_attr(a: &str) -> Option<String> {
    (!a.is_empty()).then(|| a.to_string())
}

/// Baseline metrics, one row per metric key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub metric: Metric,
    pub attribute: String,
    pub header: String,
    pub value: Option<f64>,
}

pub fn baseline_rows(report: &FairnessReport, seed: u64) -> Vec<BaselineRow> {
    report
        .entries()
        .into_iter()
        .map(|(k, v)| BaselineRow {
            seed,
            metric: k.metric,
            header: k.metric.header(),
            attribute: attr_cell(&k.attribute),
            value: v.value(),
        })
        .collect()
}

/// Wide baseline table: overall metrics, then one line per attribute.
pub fn render_baseline(rows: &[BaselineRow]) -> String {
    let seed = rows.first().map_or(0, |r| r.seed);
    let mut out = format!("# seed: {seed}\n");
    let overall: Vec<&BaselineRow> = rows.iter().filter(|r| r.attribute.is_empty()).collect();
    out.push_str(&render(
        overall.iter().map(|r| r.header.clone()).collect(),
        vec![overall.iter().map(|r| fmt_value(r.value)).collect()],
    ));
    out.push('\n');
    let mut by_attr: BTreeMap<&str, Vec<&BaselineRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.attribute.is_empty()) {
        by_attr.entry(&r.attribute).or_default().push(r);
    }
    let mut headers = vec!["Attribute".to_string()];
    headers.extend(Metric::PER_ATTRIBUTE.iter().map(|m| m.header()));
    let body = by_attr
        .iter()
        .map(|(a, rs)| {
            let mut line = vec![a.to_string()];
            line.extend(Metric::PER_ATTRIBUTE.iter().map(|m| {
                rs.iter().find(|r| r.metric == *m).map_or("n/a".into(), |r| fmt_value(r.value))
            }));
            line
        })
        .collect();
    out.push_str(&render(headers, body));
    out
}

/// One cell of the global table: a metric under one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRow {
    pub seed: u64,
    pub policy: PolicyKind,
    pub metric: Metric,
    pub attribute: String,
    pub header: String,
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    pub change: Option<f64>,
    pub change_kind: Option<ChangeKind>,
    pub improvement: Option<bool>,
    pub highlight_band: Band,
}

macro_rules! with_cells {
    ($row:ident { $($f:ident: $v:expr),* $(,)? }) => {
        impl $row {
            /// A row with the given cells and placeholder identity fields.
            fn cells(c: DeltaCells) -> Self {
                Self {
                    $($f: $v,)*
                    baseline: c.baseline,
                    value: c.value,
                    change: c.change,
                    change_kind: c.change_kind,
                    improvement: c.improvement,
                    highlight_band: c.highlight_band,
                }
            }
        }
    };
}

with_cells!(GlobalRow {
    seed: 0,
    policy: PolicyKind::Labels,
    metric: Metric::Accuracy,
    attribute: String::new(),
    header: String::new(),
});

/// Global-mode rows from the baseline report and one report per policy.
pub fn global_rows(baseline: &FairnessReport, reports: &[(PolicyKind, FairnessReport)], seed: u64) -> Vec<GlobalRow> {
    let base = baseline.entries();
    let mut rows = Vec::new();
    for (policy, report) in reports {
        let values = report.entries();
        for (k, b) in &base {
            rows.push(GlobalRow {
                seed,
                policy: *policy,
                metric: k.metric,
                attribute: attr_cell(&k.attribute),
                header: k.metric.header(),
                ..GlobalRow::cells(DeltaCells::from_values(k, b.value(), values.get(k).and_then(|v| v.value())))
            });
        }
    }
    rows
}

/// Wide global table: metric keys down, policies across.
pub fn render_global(rows: &[GlobalRow]) -> String {
    let seed = rows.first().map_or(0, |r| r.seed);
    let mut policies: Vec<PolicyKind> = Vec::new();
    let mut keys: Vec<(Metric, String)> = Vec::new();
    let mut cells: BTreeMap<(Metric, String, PolicyKind), &GlobalRow> = BTreeMap::new();
    for r in rows {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
        let k = (r.metric, r.attribute.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
        cells.insert((r.metric, r.attribute.clone(), r.policy), r);
    }
    let mut headers = vec!["Metric".to_string(), "Attribute".into(), "Baseline".into()];
    headers.extend(policies.iter().map(|p| p.to_string()));
    let body = keys
        .iter()
        .map(|(m, a)| {
            let first = policies.first().and_then(|p| cells.get(&(*m, a.clone(), *p)));
            let mut line = vec![m.header(), a.clone(), fmt_value(first.and_then(|r| r.baseline))];
            line.extend(policies.iter().map(|p| match cells.get(&(*m, a.clone(), *p)) {
                Some(r) => fmt_cell(r.value, r.change, r.change_kind, r.highlight_band),
                None => String::new(),
            }));
            line
        })
        .collect();
    format!("# seed: {seed}\n{}{}", render(headers, body), LEGEND)
}

/// One point of a participant's series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub seed: u64,
    pub policy: PolicyKind,
    pub participant: String,
    pub metric: Metric,
    pub attribute: String,
    pub step: usize,
    pub baseline: Option<f64>,
    pub raw: Option<f64>,
    pub cma: Option<f64>,
}

pub fn series_rows(policy: PolicyKind, runs: &[PersonalizedRun], seed: u64) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for run in runs {
        for s in &run.series.series {
            for p in &s.points {
                rows.push(SeriesRow {
                    seed,
                    policy,
                    participant: run.participant_id.clone(),
                    metric: s.metric,
                    attribute: attr_cell(&s.attribute),
                    step: p.step,
                    baseline: s.baseline,
                    raw: p.raw,
                    cma: p.cma,
                });
            }
        }
    }
    rows
}

/// Final CMA of one participant against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantDeltaRow {
    pub seed: u64,
    pub policy: PolicyKind,
    pub participant: String,
    pub steps: usize,
    pub metric: Metric,
    pub attribute: String,
    pub header: String,
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    pub change: Option<f64>,
    pub change_kind: Option<ChangeKind>,
    pub improvement: Option<bool>,
    pub highlight_band: Band,
}

with_cells!(ParticipantDeltaRow {
    seed: 0,
    policy: PolicyKind::Labels,
    participant: String::new(),
    steps: 0,
    metric: Metric::Accuracy,
    attribute: String::new(),
    header: String::new(),
});

/// Per-participant deltas of the last CMA point of every series.
pub fn participant_deltas(series: &[SeriesRow]) -> Vec<ParticipantDeltaRow> {
    let mut last: BTreeMap<(PolicyKind, String, Metric, String), &SeriesRow> = BTreeMap::new();
    for r in series {
        let k = (r.policy, r.participant.clone(), r.metric, r.attribute.clone());
        match last.get(&k) {
            Some(prev) if prev.step >= r.step => {}
            _ => {
                last.insert(k, r);
            }
        }
    }
    last.into_values()
        .map(|r| {
            let key = MetricKey {
                metric: r.metric,
                attribute: parse_attr(&r.attribute),
            };
            ParticipantDeltaRow {
                seed: r.seed,
                policy: r.policy,
                participant: r.participant.clone(),
                steps: r.step,
                metric: r.metric,
                attribute: r.attribute.clone(),
                header: r.metric.header(),
                ..ParticipantDeltaRow::cells(DeltaCells::from_values(&key, r.baseline, r.cma))
            }
        })
        .collect()
}

/// Mean over participants of the final values and changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub seed: u64,
    pub policy: PolicyKind,
    pub metric: Metric,
    pub attribute: String,
    pub header: String,
    pub n_participants: usize,
    pub baseline: Option<f64>,
    pub mean_value: Option<f64>,
    pub mean_change: Option<f64>,
    pub n_improved: usize,
    pub highlight_band: Band,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

pub fn averages(deltas: &[ParticipantDeltaRow]) -> Vec<AverageRow> {
    let mut groups: BTreeMap<(PolicyKind, Metric, String), Vec<&ParticipantDeltaRow>> = BTreeMap::new();
    for d in deltas {
        groups.entry((d.policy, d.metric, d.attribute.clone())).or_default().push(d);
    }
    groups
        .into_iter()
        .map(|((policy, metric, attribute), ds)| {
            let mean_change = mean(ds.iter().filter_map(|d| d.change));
            AverageRow {
                seed: ds[0].seed,
                policy,
                metric,
                header: metric.header(),
                n_participants: ds.len(),
                baseline: ds[0].baseline,
                mean_value: mean(ds.iter().filter_map(|d| d.value)),
                mean_change,
                n_improved: ds.iter().filter(|d| d.improvement == Some(true)).count(),
                highlight_band: band(mean_change),
                attribute,
            }
        })
        .collect()
}

pub fn render_averages(rows: &[AverageRow]) -> String {
    let seed = rows.first().map_or(0, |r| r.seed);
    let headers = ["Policy", "Metric", "Attribute", "Baseline", "Mean value", "Mean change", "Improved", "n"]
        .map(String::from)
        .to_vec();
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.policy.to_string(),
                r.header.clone(),
                r.attribute.clone(),
                fmt_value(r.baseline),
                fmt_value(r.mean_value),
                fmt_change(r.mean_change, r.highlight_band),
                r.n_improved.to_string(),
                r.n_participants.to_string(),
            ]
        })
        .collect();
    format!("# seed: {seed}\n{}{}", render(headers, body), LEGEND)
}

const LEGEND: &str = "\n' light band (|change| <= 5%), \" dark band (|change| > 5%)\n";

fn fmt_value(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4}"))
}

fn fmt_change(c: Option<f64>, b: Band) -> String {
    let mark = match b {
        Band::None => "",
        Band::Light => "'",
        Band::Dark => "\"",
    };
    c.map_or("n/a".into(), |c| format!("{c:+.2}%{mark}"))
}

fn fmt_cell(value: Option<f64>, change: Option<f64>, kind: Option<ChangeKind>, band: Band) -> String {
    let change = match (change, kind) {
        (Some(x), Some(ChangeKind::Absolute)) => format!("{x:+.4} abs"),
        (x, _) => fmt_change(x, band),
    };
    format!("{} ({change})", fmt_value(value))
}

/// Left-aligned text table sized by character count.
pub fn render(headers: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let n = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (i, c) in r.iter().enumerate().take(n) {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c}{}", " ".repeat(widths[i] - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&headers);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    Ok(write_atomic(path, to_csv(rows, header)?.as_bytes())?)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub const SERIES_HEADER: &[&str] = &["seed", "policy", "participant", "metric", "attribute", "step", "baseline", "raw", "cma"];
pub const DELTA_HEADER: &[&str] = &[
    "seed", "policy", "participant", "steps", "metric", "attribute", "header", "baseline", "value", "change",
    "change_kind", "improvement", "highlight_band",
];
pub const AVERAGE_HEADER: &[&str] = &[
    "seed", "policy", "metric", "attribute", "header", "n_participants", "baseline", "mean_value", "mean_change",
    "n_improved", "highlight_band",
];
pub const GLOBAL_HEADER: &[&str] = &[
    "seed", "policy", "metric", "attribute", "header", "baseline", "value", "change", "change_kind", "improvement",
    "highlight_band",
];
