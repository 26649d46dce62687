#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fairloop_core::artifacts::Baseline;
use fairloop_core::data::SplitMode;
use fairloop_core::gbdt::GbdtParams;
use fairloop_core::integration::{FeedbackInstance, FeedbackLabel};
use fairloop_core::synth::SynthConfig;
use fairloop_harness::commands;
use fairloop_harness::ExperimentConfig;

/// Small synthetic experiment writing under `out`.
pub fn small_config(out: &Path, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        synthetic: Some(SynthConfig {
            n: 400,
            seed,
            ..SynthConfig::default()
        }),
        split: SplitMode::Stratified {
            n_train: 200,
            n_test: 200,
        },
        n_display: 40,
        gbdt: GbdtParams {
            n_trees: 12,
            max_depth: 3,
            learning_rate: 0.3,
            ..GbdtParams::default()
        },
        out: out.to_path_buf(),
        seed,
        ..ExperimentConfig::default()
    }
}

/// Runs `prepare` and `train-baseline`.
pub fn trained(cfg: &ExperimentConfig) -> Baseline {
    commands::prepare(cfg).unwrap();
    commands::train_baseline(cfg).unwrap()
}

pub fn instance(p: &str, app: &str, t: i64, label: FeedbackLabel, weights: Option<&[(&str, f64)]>) -> FeedbackInstance {
    FeedbackInstance {
        participant_id: p.into(),
        application_id: app.into(),
        timestamp_ms: t,
        label,
        weights: weights.map(|w| w.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
    }
}

pub fn write_lines(path: &Path, lines: &[String]) -> PathBuf {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
    path.to_path_buf()
}

pub fn json_line(f: &FeedbackInstance) -> String {
    serde_json::to_string(f).unwrap()
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
