//! Shared value types for tasks, candidates, run reports and feedback.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cost::CostLedger;

/// Shape, dtype and seed of one reference input tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub shape: Vec<u64>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_dtype() -> String {
    "float32".to_string()
}

/// A kernel-generation problem and its reference implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub level: u8,
    pub description: String,
    pub reference_source: String,
    #[serde(default)]
    pub input_spec: Vec<InputSpec>,
    /// Constructor arguments, passed through to the harness untouched.
    #[serde(default)]
    pub init_spec: Vec<serde_json::Value>,
}

/// A task record as read from a suite file, before validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTask {
    pub id: Option<String>,
    pub level: Option<i64>,
    pub description: Option<String>,
    pub reference_source: Option<String>,
    #[serde(default)]
    pub input_spec: Vec<InputSpec>,
    #[serde(default)]
    pub init_spec: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task record is missing field `{0}`")]
    MissingField(&'static str),
    #[error("task level {0} is outside 1..=3")]
    BadLevel(i64),
    #[error("task reference_source is empty")]
    EmptySource,
    #[error("duplicate task id `{0}` in suite")]
    DuplicateId(String),
}

/// Checks a raw record against the task invariants.
pub fn validate_task(raw: RawTask) -> Result<Task, TaskError> {
    let id = raw.id.unwrap_or_default();
    if id.trim().is_empty() {
        return Err(TaskError::MissingField("id"));
    }
    let level = raw.level.ok_or(TaskError::MissingField("level"))?;
    if !(1..=3).contains(&level) {
        return Err(TaskError::BadLevel(level));
    }
    let reference_source = raw.reference_source.unwrap_or_default();
    if reference_source.trim().is_empty() {
        return Err(TaskError::EmptySource);
    }
    Ok(Task {
        id,
        level: level as u8,
        description: raw.description.unwrap_or_default(),
        reference_source,
        input_spec: raw.input_spec,
        init_spec: raw.init_spec,
    })
}

/// Validates every record and rejects duplicate ids.
pub fn validate_suite(raws: Vec<RawTask>) -> Result<Vec<Task>, TaskError> {
    let mut tasks: Vec<Task> = Vec::with_capacity(raws.len());
    for raw in raws {
        let task = validate_task(raw)?;
        if tasks.iter().any(|t| t.id == task.id) {
            return Err(TaskError::DuplicateId(task.id));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateStatus {
    Generated,
    CompileFail,
    ExecFail,
    Correct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCandidate {
    pub task_id: String,
    pub round: u32,
    pub source: String,
    pub status: CandidateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

impl KernelCandidate {
    pub fn generated(task_id: &str, round: u32, source: String) -> Self {
        Self { task_id: task_id.to_string(), round, source, status: CandidateStatus::Generated, latency_ms: None }
    }

    /// Moves the candidate to its terminal status according to a test report.
    pub fn settle(&mut self, report: &RunReport) {
        self.status = if !report.compiled {
            CandidateStatus::CompileFail
        } else if !report.correct {
            CandidateStatus::ExecFail
        } else {
            CandidateStatus::Correct
        };
        self.latency_ms = if report.correct { report.kernel_latency_ms } else { None };
    }
}

/// Outcome of the compile + execute correctness test, with timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(default)]
    pub compiled: bool,
    #[serde(default)]
    pub correct: bool,
    #[serde(default)]
    pub error_log: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("report marked correct but not compiled")]
    CorrectWithoutCompile,
    #[error("correct report has max_abs_diff {diff} above tolerance {tolerance}")]
    AboveTolerance { diff: f64, tolerance: f64 },
    #[error("latencies must be present (and positive) exactly when the report is correct")]
    LatencyPresence,
}

impl RunReport {
    pub fn compile_failure(log: impl Into<String>) -> Self {
        Self { compiled: false, error_log: log.into(), ..Self::default() }
    }

    pub fn check(&self, tolerance: f64) -> Result<(), ReportError> {
        if self.correct && !self.compiled {
            return Err(ReportError::CorrectWithoutCompile);
        }
        let positive = |v: Option<f64>| v.is_some_and(|v| v.is_finite() && v > 0.0);
        if self.correct {
            let diff = self.max_abs_diff.unwrap_or(0.0);
            if diff.is_nan() || diff > tolerance {
                return Err(ReportError::AboveTolerance { diff, tolerance });
            }
            if !positive(self.ref_latency_ms) || !positive(self.kernel_latency_ms) {
                return Err(ReportError::LatencyPresence);
            }
        } else if self.ref_latency_ms.is_some() || self.kernel_latency_ms.is_some() {
            return Err(ReportError::LatencyPresence);
        }
        Ok(())
    }

    /// Reference latency over kernel latency, for correct reports.
    pub fn speedup(&self) -> Option<f64> {
        match (self.correct, self.ref_latency_ms, self.kernel_latency_ms) {
            (true, Some(r), Some(k)) if k > 0.0 => Some(r / k),
            _ => None,
        }
    }
}

/// One named static property of a GPU, e.g. memory bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuDetail {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuSpec {
    pub name: String,
    pub architecture: String,
    #[serde(default)]
    pub details: Vec<GpuDetail>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GpuSpecError {
    #[error("gpu spec needs a nonempty name and architecture")]
    MissingIdentity,
    #[error("gpu detail `{0}` must be finite and nonnegative")]
    BadDetail(String),
}

impl GpuSpec {
    pub fn validate(&self) -> Result<(), GpuSpecError> {
        if self.name.trim().is_empty() || self.architecture.trim().is_empty() {
            return Err(GpuSpecError::MissingIdentity);
        }
        for d in &self.details {
            if !(d.value.is_finite() && d.value >= 0.0) {
                return Err(GpuSpecError::BadDetail(d.name.clone()));
            }
        }
        Ok(())
    }
}

/// One profiler counter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

/// Filtered profiler metrics for one kernel, in catalog order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NcuProfile {
    pub kernel_id: String,
    pub metrics: Vec<MetricValue>,
}

impl NcuProfile {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn is_well_formed(&self) -> bool {
        self.metrics.iter().all(|m| m.value.is_finite())
            && self.metrics.iter().enumerate().all(|(i, m)| self.metrics[..i].iter().all(|o| o.name != m.name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JudgeMode {
    Correction,
    Optimization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub critical_issue: String,
    pub why_it_matters: String,
    pub minimal_fix_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Optimization {
    pub bottleneck: String,
    #[serde(rename = "optimisation method")]
    pub optimisation_method: String,
    #[serde(rename = "modification plan")]
    pub modification_plan: String,
}

/// Structured Judge output. Exactly one payload is present and it matches `mode`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeFeedback {
    pub mode: JudgeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Correction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<Optimization>,
}

impl JudgeFeedback {
    pub fn correction(c: Correction) -> Self {
        Self { mode: JudgeMode::Correction, correction: Some(c), optimization: None }
    }

    pub fn optimization(o: Optimization) -> Self {
        Self { mode: JudgeMode::Optimization, correction: None, optimization: Some(o) }
    }

    pub fn is_well_formed(&self) -> bool {
        let nonempty = |s: &str| !s.trim().is_empty();
        match (self.mode, &self.correction, &self.optimization) {
            (JudgeMode::Correction, Some(c), None) => {
                nonempty(&c.critical_issue) && nonempty(&c.why_it_matters) && nonempty(&c.minimal_fix_hint)
            }
            (JudgeMode::Optimization, None, Some(o)) => {
                nonempty(&o.bottleneck) && nonempty(&o.optimisation_method) && nonempty(&o.modification_plan)
            }
            _ => false,
        }
    }

    /// The JSON object the Judge emitted, in schema key order.
    ///
    /// This is the text handed to the Coder, and `parse_judge_feedback`
    /// inverts it.
    pub fn to_json(&self) -> String {
        let body = match (&self.correction, &self.optimization) {
            (Some(c), _) => serde_json::to_string_pretty(c),
            (_, Some(o)) => serde_json::to_string_pretty(o),
            (None, None) => return String::from("{}"),
        };
        body.unwrap_or_default()
    }
}

/// One round of the loop: the candidate, its test report and what the Judge said.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub candidate: KernelCandidate,
    pub report: RunReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<JudgeFeedback>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<NcuProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub task_id: String,
    pub level: u8,
    pub rounds: Vec<RoundRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<KernelCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
    pub rounds_used: u32,
    /// Set when the budget cap cut the loop short.
    #[serde(default)]
    pub truncated: bool,
    pub cost: CostLedger,
}

impl WorkflowResult {
    pub fn candidates(&self) -> impl Iterator<Item = &KernelCandidate> {
        self.rounds.iter().map(|r| &r.candidate)
    }

    /// Error log of the last round, kept for tasks that never went green.
    pub fn last_error_log(&self) -> Option<&str> {
        self.rounds.last().map(|r| r.report.error_log.as_str())
    }

    pub fn best_record(&self) -> Option<&RoundRecord> {
        let best = self.best.as_ref()?;
        self.rounds.iter().find(|r| r.round == best.round)
    }

    /// Suite score: speedup of the best kernel, zero when none is correct.
    pub fn score(&self) -> f64 {
        self.speedup.unwrap_or(0.0)
    }
}

/// Picks the fastest correct round; equal latencies go to the earliest round.
pub fn select_best(rounds: &[RoundRecord]) -> Option<&RoundRecord> {
    let mut best: Option<&RoundRecord> = None;
    for rec in rounds {
        if rec.candidate.status != CandidateStatus::Correct {
            continue;
        }
        let Some(lat) = rec.candidate.latency_ms else {
            continue;
        };
        match best {
            Some(b) if b.candidate.latency_ms.is_some_and(|bl| bl <= lat) => {}
            _ => best = Some(rec),
        }
    }
    best
}
