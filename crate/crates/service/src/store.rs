//! Append-only per-session event logs. A session's state is a pure function
//! of its events, so replaying a log after a crash restores it exactly.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use fairloop_core::integration::FeedbackInstance;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        participant_id: String,
        baseline_fingerprint: String,
    },
    /// Accepted feedback with its final timestamp.
    Feedback { instance: FeedbackInstance },
    Undo,
}

/// Events recovered from one log file.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub session_id: String,
    pub events: Vec<SessionEvent>,
    /// Line number of an unreadable line that ended the log early.
    pub truncated_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&self, session_id: &str, event: &SessionEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(session_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }

    /// Replaces a log with `events`, e.g. to drop a torn tail before new
    /// events are appended after it.
    pub fn rewrite(&self, session_id: &str, events: &[SessionEvent]) -> std::io::Result<()> {
        let mut text = String::new();
        for e in events {
            text.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            text.push('\n');
        }
        let path = self.path(session_id);
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(tmp, path)
    }

    /// Every stored log, sorted by session id. Reading a log stops at the
    /// first unparsable line, which is how a torn final write shows up.
    pub fn load_all(&self) -> std::io::Result<Vec<StoredSession>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(session_id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let reader = std::io::BufReader::new(std::fs::File::open(&path)?);
            let mut events = Vec::new();
            let mut truncated_at = None;
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str(&line) {
                    Ok(e) => events.push(e),
                    Err(_) => {
                        truncated_at = Some(i + 1);
                        break;
                    }
                }
            }
            out.push(StoredSession {
                session_id,
                events,
                truncated_at,
            });
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(out)
    }
}
