//! Request/response documents exchanged with the GPU execution harness, and
//! the executor interface the workflow drives.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{InputSpec, RunReport, Task};
use crate::hardware::ProfilerExport;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecMode {
    Test,
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub warmup: u32,
    pub reps: u32,
}

impl Default for Timing {
    fn default() -> Self {
        Self { warmup: 3, reps: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub version: u32,
    pub mode: ExecMode,
    /// `<task_id>#r<round>`, echoed back by the harness.
    pub request_id: String,
    pub reference_source: String,
    pub candidate_source: String,
    pub input_spec: Vec<InputSpec>,
    #[serde(default)]
    pub init_spec: Vec<serde_json::Value>,
    pub tolerance: f64,
    pub timing: Timing,
    #[serde(default)]
    pub metric_names: Vec<String>,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("tolerance must be positive")]
    Tolerance,
    #[error("timing needs at least one rep")]
    Reps,
    #[error("profile request with an empty metric list")]
    NoMetrics,
    #[error("source is empty")]
    EmptySource,
}

impl ExecRequest {
    pub fn test(task: &Task, round: u32, candidate: &str, tolerance: f64, timing: Timing, timeout_s: f64) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            mode: ExecMode::Test,
            request_id: format!("{}#r{}", task.id, round),
            reference_source: task.reference_source.clone(),
            candidate_source: candidate.to_string(),
            input_spec: task.input_spec.clone(),
            init_spec: task.init_spec.clone(),
            tolerance,
            timing,
            metric_names: Vec::new(),
            timeout_s,
        }
    }

    pub fn profile(test: &ExecRequest, metric_names: &[String]) -> Self {
        Self { mode: ExecMode::Profile, metric_names: metric_names.to_vec(), ..test.clone() }
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(RequestError::Tolerance);
        }
        if self.timing.reps < 1 {
            return Err(RequestError::Reps);
        }
        if self.mode == ExecMode::Profile && self.metric_names.is_empty() {
            return Err(RequestError::NoMetrics);
        }
        if self.reference_source.trim().is_empty() || self.candidate_source.trim().is_empty() {
            return Err(RequestError::EmptySource);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HarnessErrorKind {
    Timeout,
    DeviceError,
    ProfilerUnavailable,
    BadRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessError {
    pub kind: HarnessErrorKind,
    #[serde(default)]
    pub message: String,
}

/// Harness reply: the run report fields, plus profiler output in PROFILE mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecResponse {
    #[serde(default)]
    pub request_id: String,
    #[serde(flatten)]
    pub report: RunReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiler_csv: Option<String>,
    #[serde(default)]
    pub stderr_tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<HarnessError>,
    #[serde(default)]
    pub compile_s: f64,
    #[serde(default)]
    pub execute_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("executor unavailable: {0}")]
    Unavailable(String),
    #[error("harness timed out: {0}")]
    Timeout(String),
    #[error("device error: {0}")]
    Device(String),
    #[error("profiler unavailable: {0}")]
    ProfilerUnavailable(String),
    #[error("harness protocol error: {0}")]
    Protocol(String),
}

impl From<HarnessError> for ExecError {
    fn from(e: HarnessError) -> Self {
        match e.kind {
            HarnessErrorKind::Timeout => ExecError::Timeout(e.message),
            HarnessErrorKind::DeviceError => ExecError::Device(e.message),
            HarnessErrorKind::ProfilerUnavailable => ExecError::ProfilerUnavailable(e.message),
            HarnessErrorKind::BadRequest => ExecError::Protocol(e.message),
        }
    }
}

impl ExecResponse {
    /// The run report of a TEST reply, after checking it against `tolerance`.
    ///
    /// A timed-out run is reported as a failed candidate rather than an error,
    /// so the Judge can see it.
    pub fn into_report(self, tolerance: f64) -> Result<RunReport, ExecError> {
        if let Some(err) = self.error {
            return match err.kind {
                HarnessErrorKind::Timeout => Ok(RunReport {
                    compiled: self.report.compiled,
                    error_log: format!("Timeout: {}", err.message),
                    ..RunReport::default()
                }),
                _ => Err(err.into()),
            };
        }
        let mut report = self.report;
        if report.error_log.is_empty() && !report.correct && !self.stderr_tail.is_empty() {
            report.error_log = self.stderr_tail;
        }
        report.check(tolerance).map_err(|e| ExecError::Protocol(e.to_string()))?;
        Ok(report)
    }
}

/// Wall time the harness spent on one request, split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExecTimes {
    pub compile_s: f64,
    pub execute_s: f64,
}

/// Something that can test and profile candidate kernels.
pub trait Executor {
    fn test(&mut self, request: &ExecRequest) -> Result<(RunReport, ExecTimes), ExecError>;
    fn profile(&mut self, request: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError>;
}

impl<E: Executor + ?Sized> Executor for &mut E {
    fn test(&mut self, request: &ExecRequest) -> Result<(RunReport, ExecTimes), ExecError> {
        (**self).test(request)
    }
    fn profile(&mut self, request: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError> {
        (**self).profile(request)
    }
}
