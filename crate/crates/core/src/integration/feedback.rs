use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntegrationError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLabel {
    Fair,
    Unfair,
    WeightsOnly,
}

impl FeedbackLabel {
    /// Whether this is a fairness judgement of the application (not only weights).
    pub fn is_judgement(self) -> bool {
        !matches!(self, FeedbackLabel::WeightsOnly)
    }
}

/// One line of a feedback log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackInstance {
    pub participant_id: String,
    pub application_id: String,
    pub timestamp_ms: i64,
    pub label: FeedbackLabel,
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
}

impl FeedbackInstance {
    /// Checks the weight map: non-negative finite entries, not all zero, and
    /// present for `WeightsOnly`.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| IntegrationError::InvalidFeedback {
            application_id: self.application_id.clone(),
            reason,
        };
        match &self.weights {
            None if self.label == FeedbackLabel::WeightsOnly => {
                Err(bad("weights_only feedback without weights".into()))
            }
            None => Ok(()),
            Some(w) => {
                if w.is_empty() {
                    return Err(bad("empty weight map".into()));
                }
                if let Some((k, v)) = w.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                    return Err(bad(format!("weight for `{k}` must be finite and >= 0, got {v}")));
                }
                if w.values().all(|v| *v == 0.0) {
                    return Err(bad("all weights are zero".into()));
                }
                Ok(())
            }
        }
    }
}

/// A log line that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackLog {
    pub instances: Vec<FeedbackInstance>,
    /// Source line of each instance.
    pub lines: Vec<usize>,
    pub errors: Vec<LineError>,
}

/// Parses JSON Lines; blank lines are skipped, malformed lines are collected
/// in `errors` and parsing continues.
pub fn parse_jsonl(reader: impl BufRead) -> Result<FeedbackLog> {
    let mut log = FeedbackLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IntegrationError::Io {
            path: "<feedback log>".into(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<FeedbackInstance>(&line)
            .map_err(|e| e.to_string())
            .and_then(|f| f.validate().map(|_| f).map_err(|e| e.to_string()));
        match parsed {
            Ok(f) => {
                log.instances.push(f);
                log.lines.push(i + 1);
            }
            Err(message) => log.errors.push(LineError { line: i + 1, message }),
        }
    }
    Ok(log)
}

pub fn read_jsonl(path: &Path) -> Result<FeedbackLog> {
    let file = std::fs::File::open(path).map_err(|e| IntegrationError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl(mut out: impl Write, instances: &[FeedbackInstance]) -> Result<()> {
    for f in instances {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n").map_err(|e| IntegrationError::Io {
            path: "<feedback log>".into(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn to_jsonl(instances: &[FeedbackInstance]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, instances).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Stable sort by `(participant_id, timestamp_ms)`; equal timestamps keep log order.
pub fn chronological(instances: &[FeedbackInstance]) -> Vec<FeedbackInstance> {
    let mut v = instances.to_vec();
    v.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then(a.timestamp_ms.cmp(&b.timestamp_ms))
    });
    v
}

/// Feedback grouped per participant, each list in chronological order.
pub fn by_participant(instances: &[FeedbackInstance]) -> BTreeMap<String, Vec<FeedbackInstance>> {
    let mut out: BTreeMap<String, Vec<FeedbackInstance>> = BTreeMap::new();
    for f in chronological(instances) {
        out.entry(f.participant_id.clone()).or_default().push(f);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampUnit {
    #[default]
    Milliseconds,
    Seconds,
}

fn default_label_values() -> BTreeMap<String, FeedbackLabel> {
    [
        ("fair", FeedbackLabel::Fair),
        ("unfair", FeedbackLabel::Unfair),
        ("weights_only", FeedbackLabel::WeightsOnly),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Column mapping from a released feedback CSV onto [`FeedbackInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMapping {
    pub participant_id: String,
    pub application_id: String,
    pub timestamp: String,
    #[serde(default)]
    pub timestamp_unit: TimestampUnit,
    pub label: String,
    /// Raw label cell (trimmed, lowercased) to label.
    #[serde(default = "default_label_values")]
    pub label_values: BTreeMap<String, FeedbackLabel>,
    /// CSV column to schema feature, for weight columns.
    #[serde(default)]
    pub weight_columns: BTreeMap<String, String>,
    /// Prepended to application ids, e.g. to match prepared-set ids.
    #[serde(default)]
    pub application_prefix: String,
}

impl FeedbackMapping {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IntegrationError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reads a released CSV; rows that cannot be mapped become line errors.
    pub fn read_csv(&self, reader: impl std::io::Read) -> Result<FeedbackLog> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IntegrationError::Mapping(format!("column `{name}` not found")))
        };
        let pid = col(&self.participant_id)?;
        let aid = col(&self.application_id)?;
        let ts = col(&self.timestamp)?;
        let lab = col(&self.label)?;
        let wcols = self
            .weight_columns
            .iter()
            .map(|(c, f)| Ok((col(c)?, f.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut log = FeedbackLog::default();
        for (i, rec) in rdr.records().enumerate() {
            // header is line 1
            let line = i + 2;
            let parsed = rec.map_err(|e| e.to_string()).and_then(|r| self.map_record(&r, pid, aid, ts, lab, &wcols));
            match parsed {
                Ok(f) => {
                    log.instances.push(f);
                    log.lines.push(line);
                }
                Err(message) => log.errors.push(LineError { line, message }),
            }
        }
        Ok(log)
    }

    fn map_record(
        &self,
        r: &csv::StringRecord,
        pid: usize,
        aid: usize,
        ts: usize,
        lab: usize,
        wcols: &[(usize, String)],
    ) -> std::result::Result<FeedbackInstance, String> {
        let cell = |j: usize| r.get(j).map(str::trim).unwrap_or("");
        let raw_ts: f64 = cell(ts).parse().map_err(|_| format!("bad timestamp `{}`", cell(ts)))?;
        let timestamp_ms = match self.timestamp_unit {
            TimestampUnit::Milliseconds => raw_ts,
            TimestampUnit::Seconds => raw_ts * 1000.0,
        }
        .round() as i64;
        let raw_label = cell(lab).to_lowercase();
        let label = *self
            .label_values
            .get(&raw_label)
            .ok_or_else(|| format!("unmapped label `{raw_label}`"))?;
        let mut weights = BTreeMap::new();
        for (j, feature) in wcols {
            if cell(*j).is_empty() {
                continue;
            }
            let v: f64 = cell(*j).parse().map_err(|_| format!("bad weight `{}`", cell(*j)))?;
            weights.insert(feature.clone(), v);
        }
        let f = FeedbackInstance {
            participant_id: cell(pid).to_string(),
            application_id: format!("{}{}", self.application_prefix, cell(aid)),
            timestamp_ms,
            label,
            weights: (!weights.is_empty()).then_some(weights),
        };
        f.validate().map_err(|e| e.to_string())?;
        Ok(f)
    }
}
