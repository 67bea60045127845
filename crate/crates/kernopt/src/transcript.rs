//! Recorded transcripts and the replay backend and executor built on them.
//!
//! A transcript directory holds one JSONL file per task at
//! `<dir>/<task_id>.jsonl` (task ids may contain `/`). Each line is a
//! [`TranscriptRecord`]: model replies are keyed by template kind, round and
//! attempt; harness replies by `TEST` or `PROFILE` and round.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kernopt_core::agent::{AgentReply, AgentRequest, BackendError, LlmBackend};
use kernopt_core::exec::{ExecError, ExecRequest, ExecResponse, ExecTimes, Executor};
use kernopt_core::{PriceTable, ProfilerExport, RunReport, TemplateKind};
use serde::{Deserialize, Serialize};

use crate::profiler_csv::{parse_profiler_csv, restrict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    CoderInitial,
    CoderCorrect,
    CoderOptimize,
    JudgeCorrect,
    JudgeOptimize,
    Test,
    Profile,
}

impl From<TemplateKind> for RecordKind {
    fn from(k: TemplateKind) -> Self {
        match k {
            TemplateKind::CoderInitial => RecordKind::CoderInitial,
            TemplateKind::CoderCorrect => RecordKind::CoderCorrect,
            TemplateKind::CoderOptimize => RecordKind::CoderOptimize,
            TemplateKind::JudgeCorrect => RecordKind::JudgeCorrect,
            TemplateKind::JudgeOptimize => RecordKind::JudgeOptimize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub kind: RecordKind,
    pub round: u32,
    #[serde(default)]
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ExecResponse>,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: duplicate record {kind:?} round {round} attempt {attempt}")]
    Duplicate { path: PathBuf, kind: RecordKind, round: u32, attempt: u32 },
}

type Key = (String, RecordKind, u32, u32);

/// All records of a transcript directory, indexed for lookup.
#[derive(Debug, Default)]
pub struct Transcript {
    records: BTreeMap<Key, TranscriptRecord>,
}

impl Transcript {
    pub fn load(dir: &Path) -> Result<Self, TranscriptError> {
        let mut t = Transcript::default();
        let walk = walkdir::WalkDir::new(dir).sort_by_file_name();
        for entry in walk {
            let entry = entry.map_err(|e| TranscriptError::Io { path: dir.to_path_buf(), source: e.into() })?;
            let path = entry.path();
            if !entry.file_type().is_file() || path.extension().is_none_or(|x| x != "jsonl") {
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(path).with_extension("");
            let task_id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            let text =
                fs::read_to_string(path).map_err(|source| TranscriptError::Io { path: path.to_path_buf(), source })?;
            t.add_jsonl(&task_id, &text, path)?;
        }
        Ok(t)
    }

    fn add_jsonl(&mut self, task_id: &str, text: &str, path: &Path) -> Result<(), TranscriptError> {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| TranscriptError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            self.insert(task_id, rec).map_err(|(kind, round, attempt)| TranscriptError::Duplicate {
                path: path.to_path_buf(),
                kind,
                round,
                attempt,
            })?;
        }
        Ok(())
    }

    pub fn insert(&mut self, task_id: &str, rec: TranscriptRecord) -> Result<(), (RecordKind, u32, u32)> {
        let key = (task_id.to_string(), rec.kind, rec.round, rec.attempt);
        if self.records.contains_key(&key) {
            return Err((rec.kind, rec.round, rec.attempt));
        }
        self.records.insert(key, rec);
        Ok(())
    }

    /// The record for `attempt`, or the highest recorded attempt below it.
    pub fn lookup(&self, task_id: &str, kind: RecordKind, round: u32, attempt: u32) -> Option<&TranscriptRecord> {
        let lo = (task_id.to_string(), kind, round, 0);
        let hi = (task_id.to_string(), kind, round, attempt);
        self.records.range(lo..=hi).next_back().map(|(_, r)| r)
    }

    pub fn task_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.keys().map(|k| k.0.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Serializes records as JSONL.
pub fn to_jsonl(records: &[TranscriptRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Replays recorded model replies. Pure and shareable across threads.
#[derive(Debug, Clone)]
pub struct MockBackend {
    transcript: Arc<Transcript>,
    model_id: String,
    prices: PriceTable,
}

impl MockBackend {
    pub fn new(transcript: Arc<Transcript>, prices: PriceTable) -> Self {
        Self { transcript, model_id: "mock".into(), prices }
    }
}

impl LlmBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn prices(&self) -> PriceTable {
        self.prices
    }

    fn complete(&self, req: &AgentRequest<'_>) -> Result<AgentReply, BackendError> {
        let rec = self.transcript.lookup(req.task_id, req.kind.into(), req.round, req.attempt).ok_or_else(|| {
            BackendError::MissingTranscript(format!("{} {} round {}", req.task_id, req.kind.as_str(), req.round))
        })?;
        Ok(AgentReply {
            raw_text: rec.text.clone().unwrap_or_default(),
            prompt_tokens: rec.prompt_tokens,
            completion_tokens: rec.completion_tokens,
            latency_s: rec.latency_s,
        })
    }
}

/// Replays recorded harness replies, keyed by the request id.
#[derive(Debug, Clone)]
pub struct ScriptedExecutor {
    transcript: Arc<Transcript>,
}

impl ScriptedExecutor {
    pub fn new(transcript: Arc<Transcript>) -> Self {
        Self { transcript }
    }

    fn response(&self, req: &ExecRequest, kind: RecordKind) -> Option<ExecResponse> {
        let (task, round) = split_request_id(&req.request_id)?;
        self.transcript.lookup(task, kind, round, 0).and_then(|r| r.response.clone())
    }
}

/// Splits `<task_id>#r<round>`.
pub fn split_request_id(id: &str) -> Option<(&str, u32)> {
    let (task, round) = id.rsplit_once("#r")?;
    Some((task, round.parse().ok()?))
}

fn times(resp: &ExecResponse) -> ExecTimes {
    ExecTimes { compile_s: resp.compile_s, execute_s: resp.execute_s }
}

impl Executor for ScriptedExecutor {
    fn test(&mut self, req: &ExecRequest) -> Result<(RunReport, ExecTimes), ExecError> {
        let resp = self
            .response(req, RecordKind::Test)
            .ok_or_else(|| ExecError::Protocol(format!("no recorded TEST reply for {}", req.request_id)))?;
        let t = times(&resp);
        Ok((resp.into_report(req.tolerance)?, t))
    }

    fn profile(&mut self, req: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError> {
        let resp = self.response(req, RecordKind::Profile).ok_or_else(|| {
            ExecError::ProfilerUnavailable(format!("no recorded PROFILE reply for {}", req.request_id))
        })?;
        profile_from_response(resp, req)
    }
}

/// Turns a PROFILE reply into an export restricted to the requested names.
pub fn profile_from_response(resp: ExecResponse, req: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError> {
    if let Some(err) = resp.error.clone() {
        return Err(err.into());
    }
    let t = times(&resp);
    let csv =
        resp.profiler_csv.ok_or_else(|| ExecError::ProfilerUnavailable("reply carried no profiler output".into()))?;
    let mut export = parse_profiler_csv(&csv).map_err(|e| ExecError::Protocol(e.to_string()))?;
    export.kernel_id = req.request_id.clone();
    Ok((restrict(export, &req.metric_names), t))
}
