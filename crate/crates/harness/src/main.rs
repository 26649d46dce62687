use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairloop_core::integration::FlipReference;
use fairloop_harness::commands::{self, ReplayRequest};
use fairloop_harness::{ExperimentConfig, Mode, Result};

#[derive(Parser)]
#[command(name = "fairloop", version, about = "Fairness feedback experiments: prepare, train, replay, report, serve")]
struct Cli {
    /// Experiment config (JSON); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, impute and encode the raw data into OUT/prepared.
    Prepare,
    /// Train the baseline model into OUT/baseline.
    TrainBaseline,
    /// Replay a feedback log against the baseline.
    Replay {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Comma-separated policy names, or `all`.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// baseline, shown_model or ground_truth.
        #[arg(long)]
        flip_reference: Option<String>,
        /// Feedback log: JSON Lines, or CSV with --mapping.
        #[arg(long)]
        feedback: Option<PathBuf>,
        /// Column mapping for a CSV feedback log.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Rebuild the tables of a replay directory from its series files.
    Report {
        #[arg(long)]
        from: PathBuf,
        /// Compare with the files on disk instead of rewriting them.
        #[arg(long)]
        check: bool,
    },
    /// Host the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Defaults to OUT/baseline.
        #[arg(long)]
        baseline_dir: Option<PathBuf>,
        /// Persist session event logs here.
        #[arg(long)]
        session_store_dir: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

/// Number of errors; warnings are logged only.
fn run(cli: Cli) -> Result<usize> {
    let mut cfg = config(&cli)?;
    match cli.command {
        Command::Prepare => {
            commands::prepare(&cfg)?;
        }
        Command::TrainBaseline => {
            let b = commands::train_baseline(&cfg)?;
            emit(&std::fs::read_to_string(cfg.baseline_dir().join(commands::BASELINE_TABLE_TXT)).unwrap_or_default());
            emit(&format!("baseline model {}\n", b.manifest.model_fingerprint));
        }
        Command::Replay {
            mode,
            policy,
            alpha,
            flip_reference,
            feedback,
            mapping,
        } => {
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(f) = flip_reference {
                cfg.flip_reference = Some(
                    serde_json::from_value::<FlipReference>(serde_json::Value::String(f.clone()))
                        .map_err(|_| fairloop_harness::HarnessError::Config(format!("unknown flip reference `{f}`")))?,
                );
            }
            if feedback.is_some() {
                cfg.feedback = feedback;
                cfg.mapping = mapping;
            } else if mapping.is_some() {
                cfg.mapping = mapping;
            }
            let mut req = ReplayRequest::from_config(&cfg)?;
            if let Some(p) = policy {
                req.policies = commands::parse_policies(&p)?;
            }
            let summary = commands::replay(&cfg, &req)?;
            let table = match req.mode {
                Mode::Global => commands::GLOBAL_TABLE_TXT,
                Mode::Personalized => commands::AVERAGES_TXT,
            };
            emit(&std::fs::read_to_string(summary.dir.join(table)).unwrap_or_default());
            emit(&format!(
                "{} instances replayed, {} errors; outputs in {}\n",
                summary.info.n_instances,
                summary.errors.len(),
                summary.dir.display()
            ));
            return Ok(summary.errors.len());
        }
        Command::Report { from, check } => {
            for p in commands::report(&from, check)? {
                emit(&format!("{} {}\n", if check { "verified" } else { "wrote" }, p.display()));
            }
        }
        Command::Serve {
            host,
            port,
            baseline_dir,
            session_store_dir,
        } => {
            let dir = baseline_dir.unwrap_or_else(|| cfg.baseline_dir());
            commands::serve(&format!("{host}:{port}"), &dir, session_store_dir.as_deref())?;
        }
    }
    Ok(0)
}

/// Writes to stdout; a closed pipe (`| head`) truncates output instead of aborting.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("finished with {n} error(s)");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
