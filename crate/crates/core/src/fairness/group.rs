use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{undefined, MetricError, Result};
use crate::data::Grouping;
use crate::Outcome;

/// How per-group rates reduce to one number for multi-valued attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupReduction {
    /// Spread between the lowest and highest group.
    #[default]
    MinMax,
    /// Largest value of the pairwise metric over all group pairs. Identical to
    /// `MinMax` for DPR, EOD and PPD; differs for AOD.
    PairwiseMax,
}

/// Confusion counts and rates for one group, with `Accept` as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub count: usize,
    pub true_accept: usize,
    pub false_accept: usize,
    pub true_reject: usize,
    pub false_reject: usize,
    pub selection_rate: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub ppv: Option<f64>,
}

impl GroupRates {
    fn from_counts(ta: usize, fa: usize, tr: usize, fr: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let count = ta + fa + tr + fr;
        Self {
            count,
            true_accept: ta,
            false_accept: fa,
            true_reject: tr,
            false_reject: fr,
            selection_rate: ratio(ta + fa, count),
            tpr: ratio(ta, ta + fr),
            fpr: ratio(fa, fa + tr),
            ppv: ratio(ta, ta + fa),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: BTreeMap<String, GroupRates>,
}

impl GroupStats {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn group_stats(preds: &[Outcome], truth: &[Outcome], grouping: &Grouping) -> Result<GroupStats> {
    if preds.len() != truth.len() || preds.len() != grouping.len() {
        return Err(MetricError::Invalid(format!(
            "misaligned inputs: {} predictions, {} labels, {} group labels",
            preds.len(),
            truth.len(),
            grouping.len()
        )));
    }
    if preds.is_empty() {
        return Err(MetricError::Invalid("empty group set".into()));
    }
    let mut counts: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for ((p, t), g) in preds.iter().zip(truth).zip(&grouping.labels) {
        let c = counts.entry(g.as_str()).or_default();
        let slot = match (p, t) {
            (Outcome::Accept, Outcome::Accept) => 0,
            (Outcome::Accept, Outcome::Reject) => 1,
            (Outcome::Reject, Outcome::Reject) => 2,
            (Outcome::Reject, Outcome::Accept) => 3,
        };
        c[slot] += 1;
    }
    Ok(GroupStats {
        groups: counts
            .into_iter()
            .map(|(g, c)| (g.to_string(), GroupRates::from_counts(c[0], c[1], c[2], c[3])))
            .collect(),
    })
}

/// Per-group values of one rate; fails on the first group where it is undefined.
fn rates(
    stats: &GroupStats,
    metric: &'static str,
    rate: &str,
    get: impl Fn(&GroupRates) -> Option<f64>,
) -> Result<Vec<(String, f64)>> {
    if stats.len() < 2 {
        return Err(MetricError::TooFewGroups {
            metric,
            found: stats.len(),
        });
    }
    stats
        .groups
        .iter()
        .map(|(g, r)| {
            get(r)
                .map(|v| (g.clone(), v))
                .ok_or_else(|| undefined(metric, Some(g), &format!("{rate} has a zero denominator")))
        })
        .collect()
}

/// Lowest and highest `(group, value)`; ties go to the first group in sorted order.
pub fn extremes(values: &[(String, f64)]) -> ((String, f64), (String, f64)) {
    let mut lo = &values[0];
    let mut hi = &values[0];
    for v in &values[1..] {
        if v.1 < lo.1 {
            lo = v;
        }
        if v.1 > hi.1 {
            hi = v;
        }
    }
    (lo.clone(), hi.clone())
}

fn spread(values: &[(String, f64)]) -> f64 {
    let (lo, hi) = extremes(values);
    hi.1 - lo.1
}

/// Demographic parity ratio: lowest selection rate over highest.
pub fn dpr(stats: &GroupStats) -> Result<f64> {
    let sr = rates(stats, "DPR", "selection rate", |r| r.selection_rate)?;
    let (lo, hi) = extremes(&sr);
    if hi.1 == 0.0 {
        return Err(undefined("DPR", None, "no group has any accepted instance"));
    }
    Ok(lo.1 / hi.1)
}

/// Equal opportunity difference: spread of true-positive rates.
pub fn eod(stats: &GroupStats) -> Result<f64> {
    Ok(spread(&rates(stats, "EOD", "TPR", |r| r.tpr)?))
}

/// Average odds difference: mean of the TPR spread and the FPR spread.
pub fn aod(stats: &GroupStats, reduction: GroupReduction) -> Result<f64> {
    let tpr = rates(stats, "AOD", "TPR", |r| r.tpr)?;
    let fpr = rates(stats, "AOD", "FPR", |r| r.fpr)?;
    Ok(match reduction {
        GroupReduction::MinMax => 0.5 * (spread(&tpr) + spread(&fpr)),
        GroupReduction::PairwiseMax => {
            let mut best = 0.0f64;
            for i in 0..tpr.len() {
                for j in i + 1..tpr.len() {
                    let v = 0.5 * ((tpr[i].1 - tpr[j].1).abs() + (fpr[i].1 - fpr[j].1).abs());
                    best = best.max(v);
                }
            }
            best
        }
    })
}

/// Predictive parity difference: spread of precision.
pub fn ppd(stats: &GroupStats) -> Result<f64> {
    Ok(spread(&rates(stats, "PPD", "PPV", |r| r.ppv)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdd {
    /// Largest size-weighted disparity over groups.
    pub value: f64,
    pub by_group: BTreeMap<String, f64>,
    /// Strata without both accepted and rejected predictions.
    pub skipped_strata: Vec<String>,
}

/// Conditional demographic disparity.
///
/// Per stratum and group, `DD = P(group | pred Reject) - P(group | pred Accept)`;
/// each group's DD is averaged over strata weighted by stratum size, and the
/// largest group value is reported. Without strata a single stratum is used.
pub fn cdd(preds: &[Outcome], grouping: &Grouping, strata: Option<&Grouping>) -> Result<Cdd> {
    if preds.len() != grouping.len() || strata.is_some_and(|s| s.len() != preds.len()) {
        return Err(MetricError::Invalid("misaligned CDD inputs".into()));
    }
    let groups = grouping.values();
    if groups.len() < 2 {
        return Err(MetricError::TooFewGroups {
            metric: "CDD",
            found: groups.len(),
        });
    }
    let gidx: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    // stratum -> (size, accepts per group, rejects per group)
    let mut per_stratum: BTreeMap<&str, (usize, Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        let s = strata.map_or("all", |s| s.labels[i].as_str());
        let e = per_stratum
            .entry(s)
            .or_insert_with(|| (0, vec![0; groups.len()], vec![0; groups.len()]));
        e.0 += 1;
        let g = gidx[grouping.labels[i].as_str()];
        match p {
            Outcome::Accept => e.1[g] += 1,
            Outcome::Reject => e.2[g] += 1,
        }
    }
    let mut weighted = vec![0.0; groups.len()];
    let mut total = 0usize;
    let mut skipped = Vec::new();
    for (s, (n, acc, rej)) in &per_stratum {
        let a: usize = acc.iter().sum();
        let r: usize = rej.iter().sum();
        if a == 0 || r == 0 {
            log::warn!("CDD stratum `{s}` has no predicted {}; skipped", if a == 0 { "Accept" } else { "Reject" });
            skipped.push(s.to_string());
            continue;
        }
        total += n;
        for g in 0..groups.len() {
            let dd = rej[g] as f64 / r as f64 - acc[g] as f64 / a as f64;
            weighted[g] += *n as f64 * dd;
        }
    }
    if total == 0 {
        return Err(undefined("CDD", None, "every stratum lacks accepted or rejected predictions"));
    }
    let by_group: BTreeMap<String, f64> = groups
        .iter()
        .zip(&weighted)
        .map(|(g, w)| (g.clone(), w / total as f64))
        .collect();
    let value = by_group.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Cdd {
        value,
        by_group,
        skipped_strata: skipped,
    })
}
