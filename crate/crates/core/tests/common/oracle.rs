//! Brute-force reference implementations, written independently of the
//! library's metric code: direct counting, pairwise enumeration over groups,
//! full sorts, and raw-value substitution followed by re-encoding.

use std::collections::BTreeMap;

use fairloop_core::data::{BinningRule, Dataset, Encoder, FeatureKind, Value};
use fairloop_core::gbdt::Model;
use fairloop_core::Outcome;

pub fn fav(o: Outcome) -> f64 {
    if o == Outcome::Accept {
        1.0
    } else {
        0.0
    }
}

fn distinct(groups: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for g in groups {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out.sort();
    out
}

/// Rate `num/den` per group from a predicate pair; `None` when `den` is 0.
fn rate(
    preds: &[Outcome],
    truth: &[Outcome],
    groups: &[String],
    g: &str,
    den: impl Fn(Outcome, Outcome) -> bool,
    num: impl Fn(Outcome, Outcome) -> bool,
) -> Option<f64> {
    let mut d = 0u32;
    let mut n = 0u32;
    for i in 0..preds.len() {
        if groups[i] == g && den(preds[i], truth[i]) {
            d += 1;
            if num(preds[i], truth[i]) {
                n += 1;
            }
        }
    }
    (d > 0).then(|| n as f64 / d as f64)
}

pub fn selection_rates(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Vec<Option<f64>> {
    distinct(groups)
        .iter()
        .map(|g| rate(preds, truth, groups, g, |_, _| true, |p, _| p == Outcome::Accept))
        .collect()
}

pub fn tprs(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Vec<Option<f64>> {
    distinct(groups)
        .iter()
        .map(|g| rate(preds, truth, groups, g, |_, t| t == Outcome::Accept, |p, _| p == Outcome::Accept))
        .collect()
}

pub fn fprs(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Vec<Option<f64>> {
    distinct(groups)
        .iter()
        .map(|g| rate(preds, truth, groups, g, |_, t| t == Outcome::Reject, |p, _| p == Outcome::Accept))
        .collect()
}

pub fn ppvs(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Vec<Option<f64>> {
    distinct(groups)
        .iter()
        .map(|g| rate(preds, truth, groups, g, |p, _| p == Outcome::Accept, |_, t| t == Outcome::Accept))
        .collect()
}

fn all_defined(v: &[Option<f64>]) -> Option<Vec<f64>> {
    if v.len() < 2 {
        return None;
    }
    v.iter().copied().collect()
}

/// Largest absolute pairwise difference.
fn max_pair_gap(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for a in v {
        for b in v {
            best = best.max((a - b).abs());
        }
    }
    best
}

/// Smallest ratio over ordered pairs with a positive denominator.
pub fn dpr(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Option<f64> {
    let sr = all_defined(&selection_rates(preds, truth, groups))?;
    let mut best: Option<f64> = None;
    let mut any_positive = false;
    for a in &sr {
        for b in &sr {
            if *b > 0.0 {
                any_positive = true;
                let r = a / b;
                best = Some(best.map_or(r, |x: f64| x.min(r)));
            }
        }
    }
    if any_positive {
        best
    } else {
        None
    }
}

pub fn eod(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Option<f64> {
    Some(max_pair_gap(&all_defined(&tprs(preds, truth, groups))?))
}

pub fn ppd(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Option<f64> {
    Some(max_pair_gap(&all_defined(&ppvs(preds, truth, groups))?))
}

pub fn aod(preds: &[Outcome], truth: &[Outcome], groups: &[String]) -> Option<f64> {
    let t = all_defined(&tprs(preds, truth, groups))?;
    let f = all_defined(&fprs(preds, truth, groups))?;
    Some(0.5 * (max_pair_gap(&t) + max_pair_gap(&f)))
}

/// Size-weighted DD per group over strata, max over groups.
pub fn cdd(preds: &[Outcome], groups: &[String], strata: &[String]) -> Option<f64> {
    let gs = distinct(groups);
    if gs.len() < 2 {
        return None;
    }
    let mut total = 0usize;
    let mut acc = vec![0.0; gs.len()];
    for s in distinct(strata) {
        let idx: Vec<usize> = (0..preds.len()).filter(|&i| strata[i] == s).collect();
        let rej = idx.iter().filter(|&&i| preds[i] == Outcome::Reject).count();
        let accp = idx.len() - rej;
        if rej == 0 || accp == 0 {
            continue;
        }
        total += idx.len();
        for (k, g) in gs.iter().enumerate() {
            let gr = idx.iter().filter(|&&i| preds[i] == Outcome::Reject && &groups[i] == g).count();
            let ga = idx.iter().filter(|&&i| preds[i] == Outcome::Accept && &groups[i] == g).count();
            acc[k] += idx.len() as f64 * (gr as f64 / rej as f64 - ga as f64 / accp as f64);
        }
    }
    if total == 0 {
        return None;
    }
    acc.iter().map(|a| a / total as f64).reduce(f64::max)
}

pub fn accuracy(preds: &[Outcome], truth: &[Outcome]) -> f64 {
    preds.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64
}

/// kNN by fully sorting `(squared distance, index)` pairs.
pub fn consistency(preds: &[Outcome], rows: &[Vec<f64>], k: usize) -> Option<f64> {
    let n = rows.len();
    if k == 0 || k >= n {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum(), j))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean: f64 = d[..k].iter().map(|&(_, j)| fav(preds[j])).sum::<f64>() / k as f64;
        total += (fav(preds[i]) - mean).abs();
    }
    Some(1.0 - total / n as f64)
}

pub fn theil(preds: &[Outcome], truth: &[Outcome]) -> Option<f64> {
    let b: Vec<f64> = preds.iter().zip(truth).map(|(p, t)| fav(*p) - fav(*t) + 1.0).collect();
    theil_benefits(&b)
}

pub fn theil_benefits(b: &[f64]) -> Option<f64> {
    let n = b.len() as f64;
    let mu = b.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return None;
    }
    Some(
        b.iter()
            .map(|x| if *x == 0.0 { 0.0 } else { (x / mu) * (x / mu).ln() })
            .sum::<f64>()
            / n,
    )
}

/// Flip oracle: substitutes raw values into the dataset row, re-encodes it
/// and re-predicts.
pub fn counterfactual(
    model: &Model,
    encoder: &Encoder,
    ds: &Dataset,
    attribute: &str,
    rule: Option<&BinningRule>,
) -> Option<f64> {
    let j = ds.schema().position(attribute)?;
    let numeric = ds.schema().features()[j].kind == FeatureKind::Numeric;
    let label_of = |v: &Value| -> String {
        match rule {
            Some(r) => r.label_of(v.as_num().unwrap()).to_string(),
            None => v.to_string(),
        }
    };
    // observed value set: label -> substitute raw value
    let mut members: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut cats: BTreeMap<String, Value> = BTreeMap::new();
    for i in 0..ds.len() {
        let v = ds.value(i, j).unwrap();
        let l = label_of(v);
        if numeric {
            members.entry(l).or_default().push(v.as_num().unwrap());
        } else {
            cats.insert(l, v.clone());
        }
    }
    let subs: BTreeMap<String, Value> = if numeric {
        members
            .into_iter()
            .map(|(l, mut xs)| {
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = xs.len();
                let med = if m % 2 == 1 { xs[m / 2] } else { (xs[m / 2 - 1] + xs[m / 2]) / 2.0 };
                (l, Value::Num(med))
            })
            .collect()
    } else {
        cats
    };
    if subs.len() < 2 {
        return None;
    }
    let predict = |row: &[Option<Value>]| {
        let enc = encoder.transform_row(row, &mut Vec::new()).unwrap();
        model.predict(&enc).unwrap().label
    };
    let mut invariant = 0usize;
    for i in 0..ds.len() {
        let row = ds.row(i).to_vec();
        let own = label_of(row[j].as_ref().unwrap());
        let base = predict(&row);
        let ok = subs.iter().filter(|(l, _)| **l != own).all(|(_, v)| {
            let mut r = row.clone();
            r[j] = Some(v.clone());
            predict(&r) == base
        });
        invariant += ok as usize;
    }
    Some(invariant as f64 / ds.len() as f64)
}

/// Exhaustive depth-1 split search on one boosting round from `base_margin`.
/// Returns `(gain, column, threshold)` of the best split with positive gain.
pub fn best_stump(
    columns: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    base_margin: f64,
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
) -> Option<(f64, usize, f64)> {
    let p = 1.0 / (1.0 + (-base_margin).exp());
    let g: Vec<f64> = y.iter().zip(w).map(|(y, w)| w * (p - y)).collect();
    let h: Vec<f64> = w.iter().map(|w| w * p * (1.0 - p)).collect();
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
    let mut best: Option<(f64, usize, f64)> = None;
    for (c, col) in columns.iter().enumerate() {
        let mut vals: Vec<f64> = col.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for pair in vals.windows(2) {
            let thr = pair[0] + (pair[1] - pair[0]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..col.len() {
                if col[i] <= pair[0] {
                    gl += g[i];
                    hl += h[i];
                }
            }
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < min_child_weight || hr < min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gt, ht)) - gamma;
            if gain > 0.0 && best.is_none_or(|b| gain > b.0) {
                best = Some((gain, c, thr));
            }
        }
    }
    best
}
