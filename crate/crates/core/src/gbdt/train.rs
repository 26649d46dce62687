use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    FeatureWeightMode, FeatureWeights, GbdtError, GbdtParams, InstanceWeights, Model, Node, Result,
};
use crate::data::EncodedMatrix;
use crate::Outcome;

/// Base-score probabilities are clamped into `[EPS, 1 - EPS]` so a
/// single-class training set still yields a finite log-odds.
const BASE_SCORE_EPS: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient and hessian of the weighted logistic loss with respect to the
/// margin: `(w (p - y), w p (1 - p))`.
pub fn logistic_grad_hess(margin: f64, y: f64, w: f64) -> (f64, f64) {
    let p = sigmoid(margin);
    (w * (p - y), w * p * (1.0 - p))
}

/// Weight-averaged logistic loss `sum w_i l_i / sum w_i`.
pub fn weighted_logloss(margins: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((m, y), w) in margins.iter().zip(y).zip(w) {
        // softplus(m) - y m, computed stably
        let softplus = m.max(0.0) + (-m.abs()).exp().ln_1p();
        num += w * (softplus - y * m);
        den += w;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainWarning {
    /// Every weighted training row has the same target.
    DegenerateTarget { class: Outcome },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Loss of the constant base-score model.
    pub initial_loss: f64,
    /// Weighted training log-loss after each boosting round.
    pub loss_per_round: Vec<f64>,
    pub warnings: Vec<TrainWarning>,
}

/// Trains a boosted ensemble. Rows with zero instance weight are dropped
/// before training, so they influence neither splits nor the fingerprint.
pub fn train(
    matrix: &EncodedMatrix,
    params: &GbdtParams,
    iw: &InstanceWeights,
    fw: &FeatureWeights,
) -> Result<Model> {
    train_with_trace(matrix, params, iw, fw).map(|(m, _)| m)
}

pub fn train_with_trace(
    matrix: &EncodedMatrix,
    params: &GbdtParams,
    iw: &InstanceWeights,
    fw: &FeatureWeights,
) -> Result<(Model, TrainTrace)> {
    let params = params.clone().validated()?;
    if iw.len() != matrix.n_rows() {
        return Err(GbdtError::Dimension {
            expected: matrix.n_rows(),
            found: iw.len(),
        });
    }
    let trainer = Trainer::new(matrix, &params, iw, fw)?;
    Ok(trainer.run())
}

struct Candidate {
    gain: f64,
    column: usize,
    threshold: f64,
}

struct BuildNode {
    g: f64,
    h: f64,
    split: Option<(usize, f64, usize, usize)>,
}

struct Trainer<'a> {
    params: &'a GbdtParams,
    fw: &'a FeatureWeights,
    /// Column-major values of the active rows.
    values: Vec<Vec<f64>>,
    /// Per column, active-row positions sorted by value (ties by position).
    sorted: Vec<Vec<u32>>,
    y: Vec<f64>,
    w: Vec<f64>,
    column_weight: Vec<f64>,
    gain_scale: Vec<f64>,
    fingerprint: String,
    warnings: Vec<TrainWarning>,
}

impl<'a> Trainer<'a> {
    fn new(
        matrix: &EncodedMatrix,
        params: &'a GbdtParams,
        iw: &InstanceWeights,
        fw: &'a FeatureWeights,
    ) -> Result<Self> {
        let active: Vec<usize> = (0..matrix.n_rows())
            .filter(|&r| iw.as_slice()[r] > 0.0)
            .collect();
        if active.is_empty() {
            return Err(GbdtError::EmptyTraining);
        }
        let mut y = Vec::with_capacity(active.len());
        for &r in &active {
            let t = matrix.targets()[r].ok_or_else(|| GbdtError::Unlabeled(matrix.ids()[r].clone()))?;
            y.push(t.target());
        }
        let w: Vec<f64> = active.iter().map(|&r| iw.as_slice()[r]).collect();

        let widths = matrix.group_widths();
        let n_groups = widths.len() as f64;
        let mut column_weight = Vec::with_capacity(matrix.n_cols());
        let mut gain_scale = Vec::with_capacity(matrix.n_cols());
        for info in matrix.column_map() {
            let gw = fw
                .get(&info.feature)
                .ok_or_else(|| GbdtError::MissingFeatureWeight(info.feature.clone()))?;
            column_weight.push(gw / widths[&info.feature] as f64);
            gain_scale.push(match params.feature_weight_mode {
                FeatureWeightMode::Sampling => 1.0,
                FeatureWeightMode::GainScaling => gw * n_groups,
            });
        }

        let values: Vec<Vec<f64>> = (0..matrix.n_cols())
            .map(|c| {
                let col = matrix.column(c);
                active.iter().map(|&r| col[r]).collect()
            })
            .collect();
        let sorted: Vec<Vec<u32>> = values
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut warnings = Vec::new();
        if y.iter().all(|v| *v == y[0]) {
            let class = if y[0] == 1.0 { Outcome::Reject } else { Outcome::Accept };
            log::warn!("all training targets are {class}; the model is degenerate");
            warnings.push(TrainWarning::DegenerateTarget { class });
        }

        let fingerprint = fingerprint(matrix, &values, &y, &w, fw, params);
        Ok(Self {
            params,
            fw,
            values,
            sorted,
            y,
            w,
            column_weight,
            gain_scale,
            fingerprint,
            warnings,
        })
    }

    fn run(self) -> (Model, TrainTrace) {
        let n = self.y.len();
        let sum_w: f64 = self.w.iter().sum();
        let pos: f64 = self.w.iter().zip(&self.y).map(|(w, y)| w * y).sum();
        let p = (pos / sum_w).clamp(BASE_SCORE_EPS, 1.0 - BASE_SCORE_EPS);
        let base_score = (p / (1.0 - p)).ln();

        let mut margins = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let mut trees = Vec::with_capacity(self.params.n_trees);
        let mut trace = TrainTrace {
            initial_loss: weighted_logloss(&margins, &self.y, &self.w),
            loss_per_round: Vec::with_capacity(self.params.n_trees),
            warnings: self.warnings.clone(),
        };

        for _ in 0..self.params.n_trees {
            for i in 0..n {
                let (g, h) = logistic_grad_hess(margins[i], self.y[i], self.w[i]);
                grad[i] = g;
                hess[i] = h;
            }
            let columns = self.sample_columns(&mut rng);
            let (tree, leaf_values) = self.grow(&grad, &hess, &columns);
            for (m, v) in margins.iter_mut().zip(&leaf_values) {
                *m += v;
            }
            trees.push(tree);
            trace
                .loss_per_round
                .push(weighted_logloss(&margins, &self.y, &self.w));
        }

        let model = Model::new(
            self.values.len(),
            base_score,
            trees,
            self.params.clone(),
            self.fw.clone(),
            self.fingerprint,
        );
        (model, trace)
    }

    /// Weighted sampling without replacement (exponential-key method): column
    /// `c` gets key `ln(u) / weight[c]`, the `k` largest keys win. Zero-weight
    /// columns are never drawn.
    fn sample_columns(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.values.len();
        if self.params.colsample_bytree >= 1.0 {
            return (0..n).collect();
        }
        let k = ((self.params.colsample_bytree * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let uniform = self.params.feature_weight_mode == FeatureWeightMode::GainScaling;
        let mut keyed: Vec<(f64, usize)> = (0..n)
            .filter_map(|c| {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let w = if uniform { 1.0 } else { self.column_weight[c] };
                (w > 0.0).then(|| (u.ln() / w, c))
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keyed.into_iter().take(k).map(|(_, c)| c).collect();
        chosen.sort_unstable();
        chosen
    }

    /// Level-wise exact greedy growth. Returns the tree and each training
    /// row's leaf value.
    fn grow(&self, grad: &[f64], hess: &[f64], columns: &[usize]) -> (Node, Vec<f64>) {
        let p = self.params;
        let n = grad.len();
        let mut node_of = vec![0u32; n];
        let mut nodes = vec![BuildNode {
            g: grad.iter().sum(),
            h: hess.iter().sum(),
            split: None,
        }];
        let mut frontier = vec![0usize];

        for _depth in 0..p.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot_of = vec![u32::MAX; nodes.len()];
            for (s, &nid) in frontier.iter().enumerate() {
                slot_of[nid] = s as u32;
            }
            let totals: Vec<(f64, f64)> = frontier.iter().map(|&id| (nodes[id].g, nodes[id].h)).collect();

            let per_column: Vec<Vec<Option<Candidate>>> = columns
                .par_iter()
                .map(|&c| self.scan_column(c, grad, hess, &node_of, &slot_of, &totals))
                .collect();

            let mut best: Vec<Option<Candidate>> = (0..frontier.len()).map(|_| None).collect();
            for col_best in per_column {
                for (s, cand) in col_best.into_iter().enumerate() {
                    if let Some(c) = cand {
                        if best[s].as_ref().is_none_or(|b| c.gain > b.gain) {
                            best[s] = Some(c);
                        }
                    }
                }
            }

            let mut next = Vec::new();
            for (s, cand) in best.into_iter().enumerate() {
                let Some(c) = cand else { continue };
                if c.gain <= 0.0 {
                    continue;
                }
                let left = nodes.len();
                nodes.push(BuildNode { g: 0.0, h: 0.0, split: None });
                nodes.push(BuildNode { g: 0.0, h: 0.0, split: None });
                nodes[frontier[s]].split = Some((c.column, c.threshold, left, left + 1));
                next.push(left);
                next.push(left + 1);
            }
            if next.is_empty() {
                break;
            }
            for r in 0..n {
                let nid = node_of[r] as usize;
                if let Some((col, thr, l, rt)) = nodes[nid].split {
                    let child = if self.values[col][r] <= thr { l } else { rt };
                    node_of[r] = child as u32;
                    nodes[child].g += grad[r];
                    nodes[child].h += hess[r];
                }
            }
            frontier = next;
        }

        let leaf = |b: &BuildNode| -b.g / (b.h + p.lambda) * p.learning_rate;
        let leaf_values = node_of.iter().map(|&nid| leaf(&nodes[nid as usize])).collect();
        (assemble(&nodes, 0, &leaf), leaf_values)
    }

    fn scan_column(
        &self,
        c: usize,
        grad: &[f64],
        hess: &[f64],
        node_of: &[u32],
        slot_of: &[u32],
        totals: &[(f64, f64)],
    ) -> Vec<Option<Candidate>> {
        let p = self.params;
        let vals = &self.values[c];
        let scale = self.gain_scale[c];
        let n_slots = totals.len();
        let mut acc_g = vec![0.0; n_slots];
        let mut acc_h = vec![0.0; n_slots];
        let mut last = vec![f64::NAN; n_slots];
        let mut best: Vec<Option<Candidate>> = (0..n_slots).map(|_| None).collect();
        for &r in &self.sorted[c] {
            let r = r as usize;
            let s = slot_of[node_of[r] as usize];
            if s == u32::MAX {
                continue;
            }
            let s = s as usize;
            let v = vals[r];
            // NaN `last` means no row of this node seen yet
            if v > last[s] {
                let (gt, ht) = totals[s];
                let (gl, hl) = (acc_g[s], acc_h[s]);
                let (gr, hr) = (gt - gl, ht - hl);
                if hl >= p.min_child_weight && hr >= p.min_child_weight {
                    let raw = 0.5
                        * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda)
                            - gt * gt / (ht + p.lambda));
                    let gain = scale * raw - p.gamma;
                    if best[s].as_ref().is_none_or(|b| gain > b.gain) {
                        let mut threshold = last[s] + (v - last[s]) / 2.0;
                        if threshold >= v {
                            threshold = last[s];
                        }
                        best[s] = Some(Candidate {
                            gain,
                            column: c,
                            threshold,
                        });
                    }
                }
            }
            acc_g[s] += grad[r];
            acc_h[s] += hess[r];
            last[s] = v;
        }
        best
    }
}

fn assemble(nodes: &[BuildNode], id: usize, leaf: &impl Fn(&BuildNode) -> f64) -> Node {
    match nodes[id].split {
        Some((column, threshold, l, r)) => Node::Split {
            column,
            threshold,
            left: Box::new(assemble(nodes, l, leaf)),
            right: Box::new(assemble(nodes, r, leaf)),
        },
        None => Node::Leaf {
            weight: leaf(&nodes[id]),
        },
    }
}

fn fingerprint(
    matrix: &EncodedMatrix,
    values: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    fw: &FeatureWeights,
    params: &GbdtParams,
) -> String {
    let mut h = Sha256::new();
    h.update(b"fairloop-gbdt-v1");
    h.update((y.len() as u64).to_le_bytes());
    h.update((values.len() as u64).to_le_bytes());
    for info in matrix.column_map() {
        h.update(info.feature.as_bytes());
        h.update([0u8]);
    }
    for col in values {
        for x in col {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    for (t, wt) in y.iter().zip(w) {
        h.update(t.to_bits().to_le_bytes());
        h.update(wt.to_bits().to_le_bytes());
    }
    let fw_sorted: BTreeMap<_, _> = fw.as_map().iter().collect();
    for (k, v) in fw_sorted {
        h.update(k.as_bytes());
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(h.finalize())
}
