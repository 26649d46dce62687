//! Exhaustive lock/undo model check of a session against an abstract stack
//! model. Every action sequence up to the given length is explored by DFS
//! over cloned sessions; each node is compared with a from-scratch replay of
//! its active feedback.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use fairloop_core::fairness::FairnessReport;
use fairloop_core::gbdt::Prediction;
use fairloop_core::integration::{retrain_personalized, FeedbackLabel, RetrainContext};
use fairloop_core::session::{FairnessStatus, Session, SessionError};

#[derive(Debug, Clone)]
pub struct FeedbackAction {
    pub application_id: String,
    pub label: FeedbackLabel,
    pub weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckStats {
    /// Action sequences explored, the empty one included.
    pub sequences: usize,
    pub accepted_feedback: usize,
    pub rejected_feedback: usize,
    pub undos: usize,
    pub empty_undos: usize,
}

struct Checker<'a> {
    ctx: Arc<RetrainContext>,
    actions: &'a [FeedbackAction],
    reference: HashMap<Vec<usize>, (String, FairnessReport)>,
    stats: CheckStats,
}

impl Checker<'_> {
    fn reference(&mut self, stack: &[usize], session: &Session) -> Result<(String, FairnessReport), String> {
        if let Some(r) = self.reference.get(stack) {
            return Ok(r.clone());
        }
        let r = if stack.is_empty() {
            let b = self.ctx.baseline();
            (b.model.fingerprint().to_string(), b.report.clone())
        } else {
            let run = retrain_personalized(&self.ctx, &session.log()).map_err(|e| e.to_string())?;
            let last = run.outcomes.last().expect("non-empty log");
            (last.model.fingerprint().to_string(), last.report.clone())
        };
        self.reference.insert(stack.to_vec(), r.clone());
        Ok(r)
    }

    fn check_node(&mut self, s: &Session, stack: &[usize], shown: &[Prediction], path: &str) -> Result<(), String> {
        let fail = |what: &str| Err(format!("after [{path}]: {what}"));
        if s.undo_depth() != stack.len() {
            return fail("undo depth differs from feedback count");
        }
        let log = s.log();
        let expected: Vec<&str> = stack.iter().map(|&i| self.actions[i].application_id.as_str()).collect();
        let got: Vec<&str> = log.iter().map(|f| f.application_id.as_str()).collect();
        if expected != got {
            return fail("active log differs from the stack");
        }
        if s.locks().len() != stack.len() {
            return fail("lock set differs from the stack");
        }
        for (k, &i) in stack.iter().enumerate() {
            let a = &self.actions[i];
            let want = match a.label {
                FeedbackLabel::Unfair => FairnessStatus::Unfair,
                _ => FairnessStatus::Checked,
            };
            if s.status(&a.application_id) != want {
                return fail("lock status mismatch");
            }
            let row = s.context().pool().position(&a.application_id).expect("pool row");
            if s.displayed_prediction(row) != shown[k] {
                return fail("locked prediction changed");
            }
        }
        let (fp, report) = self.reference(stack, s)?;
        if s.current().model.fingerprint() != fp {
            return fail("model differs from a from-scratch replay");
        }
        if *s.report() != report {
            return fail("report differs from a from-scratch replay");
        }
        Ok(())
    }

    fn dfs(&mut self, s: &Session, stack: &mut Vec<usize>, shown: &mut Vec<Prediction>, path: &mut Vec<String>, depth: usize) -> Result<(), String> {
        self.stats.sequences += 1;
        self.check_node(s, stack, shown, &path.join(" "))?;
        if depth == 0 {
            return Ok(());
        }
        for i in 0..self.actions.len() {
            let a = &self.actions[i];
            let mut next = s.clone();
            let row = s.context().pool().position(&a.application_id).expect("pool row");
            let before = s.displayed_prediction(row);
            let r = next.feedback(&a.application_id, a.label, a.weights.clone(), path.len() as i64);
            path.push(format!("fb{i}"));
            if stack.contains(&i) {
                self.stats.rejected_feedback += 1;
                if !matches!(r, Err(SessionError::Locked(_))) {
                    return Err(format!("after [{}]: locked feedback accepted", path.join(" ")));
                }
                // a rejected request leaves the session unchanged; explore on
                self.dfs(&next, stack, shown, path, depth - 1)?;
            } else {
                self.stats.accepted_feedback += 1;
                r.map_err(|e| format!("after [{}]: {e}", path.join(" ")))?;
                stack.push(i);
                shown.push(before);
                self.dfs(&next, stack, shown, path, depth - 1)?;
                stack.pop();
                shown.pop();
            }
            path.pop();
        }
        let mut next = s.clone();
        path.push("undo".into());
        match (next.undo(), stack.pop()) {
            (Err(SessionError::EmptyUndo), None) => {
                self.stats.empty_undos += 1;
                self.dfs(&next, stack, shown, path, depth - 1)?;
            }
            (Ok(f), Some(i)) if f.application_id == self.actions[i].application_id => {
                self.stats.undos += 1;
                let p = shown.pop().expect("shown per stack entry");
                self.dfs(&next, stack, shown, path, depth - 1)?;
                stack.push(i);
                shown.push(p);
            }
            (r, _) => return Err(format!("after [{}]: unexpected undo result {r:?}", path.join(" "))),
        }
        path.pop();
        Ok(())
    }
}

/// Explores every sequence of at most `max_len` actions drawn from the
/// feedback actions and undo.
pub fn check_all_sequences(ctx: Arc<RetrainContext>, actions: &[FeedbackAction], max_len: usize) -> Result<CheckStats, String> {
    let mut c = Checker {
        ctx: ctx.clone(),
        actions,
        reference: HashMap::new(),
        stats: CheckStats::default(),
    };
    let root = Session::new("model-check", "mc", ctx);
    c.dfs(&root, &mut Vec::new(), &mut Vec::new(), &mut Vec::new(), max_len)?;
    Ok(c.stats)
}
