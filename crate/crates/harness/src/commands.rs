//! The driver's subcommands as library functions. Every file goes through
//! `write_atomic`, so an interrupted run never leaves a half-written table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairloop_core::artifacts::{default_report_config, prepare as prepare_splits, read_json, write_atomic, write_json, Baseline, Prepared};
use fairloop_core::data::{load_csv, Dataset};
use fairloop_core::fairness::FairnessReport;
use fairloop_core::gbdt::FeatureWeights;
use fairloop_core::integration::{
    by_participant, read_jsonl, retrain_global, retrain_personalized, FeedbackInstance, FeedbackLog, FeedbackMapping,
    FlipReference, IntegrationPolicy, IntegrationWarning, PolicyKind, RetrainContext,
};
use fairloop_core::synth::generate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{require, ExperimentConfig, Mode};
use crate::tables::{self, AverageRow, GlobalRow, ParticipantDeltaRow, SeriesRow};
use crate::{HarnessError, Result};

pub const RUN_FILE: &str = "run.json";
pub const BASELINE_REPORT_FILE: &str = "baseline_report.json";
pub const REPORTS_DIR: &str = "reports";
pub const OUTCOMES_FILE: &str = "outcomes.json";
pub const GLOBAL_TABLE_CSV: &str = "global_table.csv";
pub const GLOBAL_TABLE_TXT: &str = "global_table.txt";
pub const SERIES_CSV: &str = "series.csv";
pub const DELTAS_CSV: &str = "participant_deltas.csv";
pub const AVERAGES_CSV: &str = "averages.csv";
pub const AVERAGES_TXT: &str = "averages.txt";
pub const PARTICIPANTS_FILE: &str = "participants.json";
pub const ERRORS_FILE: &str = "errors.json";
pub const BASELINE_TABLE_CSV: &str = "baseline_table.csv";
pub const BASELINE_TABLE_TXT: &str = "baseline_table.txt";

/// Raw applications: generated when `synthetic` is set, else read from `data`.
pub fn load_raw(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(s) = &cfg.synthetic {
        return Ok(generate(s)?);
    }
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| HarnessError::Config("either `data` or `synthetic` is required".into()))?;
    require(path, "data")?;
    Ok(load_csv(path, &cfg.schema_config()?.schema()?)?)
}

/// Splits, imputes and encodes the raw data into `out/prepared`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let raw = load_raw(cfg)?;
    let prepared = prepare_splits(&raw, cfg.schema_config()?, cfg.split, cfg.n_display, cfg.seed)?;
    for w in &prepared.manifest.encode_warnings {
        log::warn!("encoder: {w:?}");
    }
    prepared.write(&cfg.prepared_dir())?;
    log::info!(
        "prepared {} train, {} test, {} display rows in {}",
        prepared.train.len(),
        prepared.test.len(),
        prepared.display.len(),
        cfg.prepared_dir().display()
    );
    Ok(prepared)
}

/// Trains the baseline on `out/prepared` and writes it with its metric table.
pub fn train_baseline(cfg: &ExperimentConfig) -> Result<Baseline> {
    let dir = cfg.prepared_dir();
    if !Prepared::exists(&dir) {
        return Err(HarnessError::Config(format!(
            "no prepared data in `{}`; run `prepare` first",
            dir.display()
        )));
    }
    let prepared = Prepared::read(&dir)?;
    let mut rc = default_report_config(&prepared.config, &prepared.train, cfg.report.attributes.clone())?;
    if let Some(k) = cfg.report.k {
        rc.k = k;
    }
    if let Some(cf) = cfg.report.counterfactual {
        rc.counterfactual = cf;
    }
    rc.strata = cfg.report.strata.clone();
    rc.reduction = cfg.report.reduction;
    let baseline = Baseline::train(prepared, cfg.gbdt_params(), rc, cfg.seed)?;
    let out = cfg.baseline_dir();
    baseline.write(&out)?;
    let rows = tables::baseline_rows(&baseline.report, cfg.seed);
    tables::write_csv(&out.join(BASELINE_TABLE_CSV), &rows, &["seed", "metric", "attribute", "header", "value"])?;
    write_atomic(&out.join(BASELINE_TABLE_TXT), tables::render_baseline(&rows).as_bytes())?;
    log::info!("baseline {} written to {}", baseline.manifest.model_fingerprint, out.display());
    Ok(baseline)
}

/// Parses `all` or a comma-separated list of policy names.
pub fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s.trim() == "all" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let p: PolicyKind = serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| HarnessError::Config(format!("unknown policy `{name}`")))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Config("no policy given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRequest {
    pub mode: Mode,
    pub policies: Vec<PolicyKind>,
    pub alpha: f64,
    pub flip: FlipReference,
    pub feedback: PathBuf,
    pub mapping: Option<PathBuf>,
}

impl ReplayRequest {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            mode: cfg.mode,
            policies: vec![cfg.policy],
            alpha: cfg.alpha,
            flip: cfg.flip_reference(),
            feedback: cfg
                .feedback
                .clone()
                .ok_or_else(|| HarnessError::Config("`feedback` is required for replay".into()))?,
            mapping: cfg.mapping.clone(),
        })
    }
}

/// A problem that skipped part of the input; the run continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayError {
    pub line: Option<usize>,
    pub participant: Option<String>,
    pub policy: Option<PolicyKind>,
    pub message: String,
}

impl std::fmt::Display for ReplayError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(p) = self.policy {
            write!(f, "[{p}] ")?;
        }
        if let Some(p) = &self.participant {
            write!(f, "participant `{p}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Settings of a replay run, stored next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub mode: Mode,
    pub policies: Vec<PolicyKind>,
    pub alpha: f64,
    pub flip_reference: FlipReference,
    pub seed: u64,
    pub baseline_fingerprint: String,
    pub feedback: String,
    pub n_instances: usize,
    pub n_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalOutcome {
    pub policy: PolicyKind,
    pub model_fingerprint: String,
    pub n_feedback_rows: usize,
    pub empty_feedback: bool,
    pub feature_weights: FeatureWeights,
    pub warnings: Vec<IntegrationWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantOutcome {
    pub policy: PolicyKind,
    pub participant: String,
    pub steps: usize,
    /// Model after the last step.
    pub model_fingerprint: String,
    pub step_fingerprints: Vec<String>,
    pub warnings: Vec<IntegrationWarning>,
}

#[derive(Debug, Clone)]
pub struct ReplaySummary {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub errors: Vec<ReplayError>,
    pub global: Vec<GlobalOutcome>,
    pub participants: Vec<ParticipantOutcome>,
}

fn read_log(req: &ReplayRequest) -> Result<FeedbackLog> {
    require(&req.feedback, "feedback")?;
    Ok(match &req.mapping {
        Some(m) => {
            require(m, "mapping")?;
            let file = std::fs::File::open(&req.feedback).map_err(|e| HarnessError::io(&req.feedback, e))?;
            FeedbackMapping::from_path(m)?.read_csv(file)?
        }
        None => read_jsonl(&req.feedback)?,
    })
}

/// Drops instances the context cannot resolve, reporting them by source line.
fn screen(ctx: &RetrainContext, log: FeedbackLog) -> (Vec<FeedbackInstance>, Vec<ReplayError>) {
    let mut errors: Vec<ReplayError> = log
        .errors
        .into_iter()
        .map(|e| ReplayError {
            line: Some(e.line),
            participant: None,
            policy: None,
            message: e.message,
        })
        .collect();
    let mut kept = Vec::new();
    for (f, line) in log.instances.into_iter().zip(log.lines) {
        let problem = if ctx.pool().position(&f.application_id).is_none() {
            Some(format!("application `{}` is not in the application pool", f.application_id))
        } else {
            f.weights
                .as_ref()
                .and_then(|w| w.keys().find(|k| ctx.baseline_fw().get(k).is_none()))
                .map(|k| format!("unknown feature `{k}` in weights"))
        };
        match problem {
            Some(message) => errors.push(ReplayError {
                line: Some(line),
                participant: Some(f.participant_id.clone()),
                policy: None,
                message,
            }),
            None => kept.push(f),
        }
    }
    (kept, errors)
}

/// Replays a feedback log against the stored baseline under each policy.
pub fn replay(cfg: &ExperimentConfig, req: &ReplayRequest) -> Result<ReplaySummary> {
    if req.mode == Mode::Global && req.flip == FlipReference::ShownModel {
        return Err(HarnessError::Config("global mode has no shown model; use `baseline` or `ground_truth`".into()));
    }
    let bdir = cfg.baseline_dir();
    if !Baseline::exists(&bdir) {
        return Err(HarnessError::Config(format!(
            "no baseline in `{}`; run `train-baseline` first",
            bdir.display()
        )));
    }
    let baseline = Baseline::read(&bdir)?;
    let log = read_log(req)?;
    let contexts = req
        .policies
        .iter()
        .map(|p| Ok((*p, baseline.context(IntegrationPolicy::new(*p).with_alpha(req.alpha), req.flip)?)))
        .collect::<Result<Vec<_>>>()?;
    // pool and feature names do not depend on the policy
    let (instances, mut errors) = screen(&contexts[0].1, log);
    let dir = cfg.replay_dir(req.mode, &req.policies);
    write_json(&dir.join(BASELINE_REPORT_FILE), &baseline.report)?;

    let mut global = Vec::new();
    let mut participants = Vec::new();
    match req.mode {
        Mode::Global => {
            let mut reports = Vec::new();
            for (policy, ctx) in &contexts {
                match retrain_global(ctx, &instances) {
                    Ok(o) => {
                        write_json(&dir.join(REPORTS_DIR).join(format!("{policy}.json")), &o.report)?;
                        global.push(GlobalOutcome {
                            policy: *policy,
                            model_fingerprint: o.model.fingerprint().to_string(),
                            n_feedback_rows: o.n_feedback_rows,
                            empty_feedback: o.empty_feedback,
                            feature_weights: o.fw.clone(),
                            warnings: o.warnings.clone(),
                        });
                        reports.push((*policy, o.report));
                    }
                    Err(e) => errors.push(ReplayError {
                        line: None,
                        participant: None,
                        policy: Some(*policy),
                        message: e.to_string(),
                    }),
                }
            }
            write_json(&dir.join(OUTCOMES_FILE), &global)?;
            write_global_tables(&dir, &tables::global_rows(&baseline.report, &reports, baseline.manifest.seed))?;
        }
        Mode::Personalized => {
            let groups: Vec<(String, Vec<FeedbackInstance>)> = by_participant(&instances).into_iter().collect();
            let mut series = Vec::new();
            for (policy, ctx) in &contexts {
                let runs: Vec<_> = groups
                    .par_iter()
                    .map(|(p, fs)| (p.clone(), retrain_personalized(ctx, fs)))
                    .collect();
                let mut ok = Vec::new();
                for (p, run) in runs {
                    match run {
                        Ok(run) => {
                            participants.push(ParticipantOutcome {
                                policy: *policy,
                                participant: p,
                                steps: run.outcomes.len(),
                                model_fingerprint: run
                                    .outcomes
                                    .last()
                                    .map_or_else(String::new, |o| o.model.fingerprint().to_string()),
                                step_fingerprints: run.outcomes.iter().map(|o| o.model.fingerprint().to_string()).collect(),
                                warnings: run.outcomes.iter().flat_map(|o| o.warnings.clone()).collect(),
                            });
                            ok.push(run);
                        }
                        Err(e) => errors.push(ReplayError {
                            line: None,
                            participant: Some(p),
                            policy: Some(*policy),
                            message: e.to_string(),
                        }),
                    }
                }
                series.extend(tables::series_rows(*policy, &ok, baseline.manifest.seed));
            }
            write_json(&dir.join(PARTICIPANTS_FILE), &participants)?;
            tables::write_csv(&dir.join(SERIES_CSV), &series, tables::SERIES_HEADER)?;
            write_personalized_tables(&dir, &series)?;
        }
    }
    for e in &errors {
        log::error!("{e}");
    }
    let info = RunInfo {
        mode: req.mode,
        policies: req.policies.clone(),
        alpha: req.alpha,
        flip_reference: req.flip,
        seed: baseline.manifest.seed,
        baseline_fingerprint: baseline.manifest.model_fingerprint.clone(),
        feedback: req.feedback.display().to_string(),
        n_instances: instances.len(),
        n_errors: errors.len(),
    };
    write_json(&dir.join(ERRORS_FILE), &errors)?;
    write_json(&dir.join(RUN_FILE), &info)?;
    Ok(ReplaySummary {
        dir,
        info,
        errors,
        global,
        participants,
    })
}

fn global_files(rows: &[GlobalRow]) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        (GLOBAL_TABLE_CSV, tables::to_csv(rows, tables::GLOBAL_HEADER)?),
        (GLOBAL_TABLE_TXT, tables::render_global(rows)),
    ])
}

fn personalized_files(series: &[SeriesRow]) -> Result<Vec<(&'static str, String)>> {
    let deltas: Vec<ParticipantDeltaRow> = tables::participant_deltas(series);
    let averages: Vec<AverageRow> = tables::averages(&deltas);
    Ok(vec![
        (DELTAS_CSV, tables::to_csv(&deltas, tables::DELTA_HEADER)?),
        (AVERAGES_CSV, tables::to_csv(&averages, tables::AVERAGE_HEADER)?),
        (AVERAGES_TXT, tables::render_averages(&averages)),
    ])
}

fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    for (name, text) in files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    Ok(())
}

fn write_global_tables(dir: &Path, rows: &[GlobalRow]) -> Result<()> {
    write_files(dir, &global_files(rows)?)
}

fn write_personalized_tables(dir: &Path, series: &[SeriesRow]) -> Result<()> {
    write_files(dir, &personalized_files(series)?)
}

/// Rebuilds the tables of a replay directory from its series files. With
/// `check`, compares against the files on disk instead of writing.
pub fn report(dir: &Path, check: bool) -> Result<Vec<PathBuf>> {
    let run_path = dir.join(RUN_FILE);
    require(&run_path, "replay run")?;
    let info: RunInfo = read_json(&run_path)?;
    let files = match info.mode {
        Mode::Global => {
            let baseline: FairnessReport = read_json(&dir.join(BASELINE_REPORT_FILE))?;
            let mut reports = Vec::new();
            for p in &info.policies {
                let path = dir.join(REPORTS_DIR).join(format!("{p}.json"));
                if path.is_file() {
                    reports.push((*p, read_json::<FairnessReport>(&path)?));
                }
            }
            global_files(&tables::global_rows(&baseline, &reports, info.seed))?
        }
        Mode::Personalized => personalized_files(&tables::read_csv::<SeriesRow>(&dir.join(SERIES_CSV))?)?,
    };
    if check {
        for (name, text) in &files {
            let path = dir.join(name);
            let found = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            if &found != text {
                return Err(HarnessError::Mismatch(format!("{} differs from its recomputation", path.display())));
            }
        }
    } else {
        write_files(dir, &files)?;
    }
    Ok(files.iter().map(|(n, _)| dir.join(n)).collect())
}

/// Final model fingerprint per participant of a personalized replay.
pub fn participant_fingerprints(summary: &ReplaySummary, policy: PolicyKind) -> BTreeMap<String, String> {
    summary
        .participants
        .iter()
        .filter(|p| p.policy == policy)
        .map(|p| (p.participant.clone(), p.model_fingerprint.clone()))
        .collect()
}

/// Hosts the session service until the process is stopped. The listener
/// binds first, so requests made during baseline loading get 503.
pub fn serve(addr: &str, baseline_dir: &Path, store_dir: Option<&Path>) -> Result<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| HarnessError::Serve(e.to_string()))?;
    rt.block_on(async {
        let store = store_dir
            .map(|d| fairloop_service::store::SessionStore::open(d).map_err(|e| HarnessError::io(d, e)))
            .transpose()?;
        let state = fairloop_service::AppState::new(store);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| HarnessError::Serve(format!("bind {addr}: {e}")))?;
        log::info!("listening on {addr}; loading baseline from {}", baseline_dir.display());
        let load = fairloop_service::spawn_baseline_load(state.clone(), baseline_dir);
        tokio::spawn(async move {
            match load.await {
                Ok(Ok(r)) => log::info!("baseline ready; {r:?}"),
                Ok(Err(e)) => log::error!("baseline load failed: {e}"),
                Err(e) => log::error!("baseline load task failed: {e}"),
            }
        });
        fairloop_service::serve(listener, state)
            .await
            .map_err(|e| HarnessError::Serve(e.to_string()))
    })
}
