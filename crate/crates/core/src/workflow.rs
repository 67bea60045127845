//! The Coder/Judge round loop.
//!
//! Round 1 asks the Coder for a first kernel from the reference program.
//! Each round then tests the candidate; a failing candidate goes to the Judge
//! in correction mode, a passing one is profiled and goes to the Judge in
//! optimization mode. The next Coder prompt carries only the task, the latest
//! candidate and the latest feedback.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::{
    call_agent, extract_kernel_code, parse_judge_feedback, reask_prompt, AgentError, AgentRequest, BackendError,
    LlmBackend,
};
use crate::cost::{CostLedger, Phase};
use crate::domain::{
    select_best, CandidateStatus, GpuSpec, JudgeFeedback, JudgeMode, KernelCandidate, NcuProfile, RoundRecord,
    RunReport, Task, WorkflowResult,
};
use crate::exec::{ExecError, ExecRequest, ExecTimes, Executor, Timing};
use crate::hardware::{filter_to_subset, format_gpu_items, format_metrics, MetricCatalog};
use crate::prompt::{render_prompt, PromptContext, PromptError, TemplateKind, FEW_SHOT_BASE, FEW_SHOT_NEW};

/// Re-asks after an unparsable Judge reply, before giving up on the round.
pub const JUDGE_REASKS: u32 = 3;

/// Stand-in feedback when no Judge output is available for a failing candidate.
pub const SELF_REFINE_CORRECTION: &str =
    "No diagnosis is available. Read the error log, locate the cause yourself and fix it.";

/// Stand-in feedback when no Judge output is available for a passing candidate.
pub const SELF_REFINE_OPTIMIZATION: &str =
    "No profiling-based suggestion is available. Identify the main bottleneck yourself and apply one optimization that removes it.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowConfig {
    pub max_rounds: u32,
    pub tolerance: f64,
    pub budget_cap_dollars: Option<f64>,
    pub timing: Timing,
    /// Per-request harness timeout.
    pub timeout_s: f64,
    pub gpu: GpuSpec,
    pub metric_subset: MetricCatalog,
    /// Skip the Judge entirely; the Coder refines from its own output.
    #[serde(default)]
    pub self_refine: bool,
}

impl WorkflowConfig {
    pub fn new(gpu: GpuSpec) -> Self {
        Self {
            max_rounds: 10,
            tolerance: 1e-4,
            budget_cap_dollars: None,
            timing: Timing::default(),
            timeout_s: 180.0,
            gpu,
            metric_subset: MetricCatalog::key_subset(),
            self_refine: false,
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let bad = |m: &str| Err(WorkflowError::Config(m.to_string()));
        if self.max_rounds < 1 {
            return bad("max_rounds must be at least 1");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        if self.timing.reps < 1 {
            return bad("timing.reps must be at least 1");
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return bad("timeout_s must be positive");
        }
        if self.budget_cap_dollars.is_some_and(|c| c.is_nan() || c < 0.0) {
            return bad("budget cap must be nonnegative");
        }
        self.gpu.validate().map_err(|e| WorkflowError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error("invalid workflow config: {0}")]
    Config(String),
    #[error(transparent)]
    Executor(#[from] ExecError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// One state transition, as written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorkflowEvent {
    RoundStarted { task_id: String, round: u32, kind: TemplateKind },
    Tested { task_id: String, round: u32, status: CandidateStatus, speedup: Option<f64> },
    Profiled { task_id: String, round: u32, metrics: usize, missing: Vec<String> },
    ProfilerUnavailable { task_id: String, round: u32, reason: String },
    JudgeWarning { task_id: String, round: u32, field: String, words: usize, cap: usize },
    JudgeRetry { task_id: String, round: u32, attempt: u32, error: String },
    JudgeDegraded { task_id: String, round: u32 },
    Feedback { task_id: String, round: u32, mode: JudgeMode },
    BudgetExceeded { task_id: String, round: u32, spent: f64, cap: f64 },
    Finished { task_id: String, rounds_used: u32, best_round: Option<u32>, speedup: Option<f64> },
}

pub trait EventSink {
    fn emit(&mut self, event: &WorkflowEvent);
}

/// Discards events.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&mut self, _: &WorkflowEvent) {}
}

impl EventSink for Vec<WorkflowEvent> {
    fn emit(&mut self, event: &WorkflowEvent) {
        self.push(event.clone());
    }
}

/// The Judge mode a report calls for.
pub fn decide_mode(report: &RunReport) -> JudgeMode {
    if report.correct {
        JudgeMode::Optimization
    } else {
        JudgeMode::Correction
    }
}

fn block(text: &str) -> String {
    text.trim_end().to_string()
}

fn gpu_fields(ctx: &mut PromptContext, gpu: &GpuSpec) {
    ctx.insert("gpu_name".into(), gpu.name.clone());
    ctx.insert("gpu_arch".into(), gpu.architecture.clone());
    ctx.insert("gpu_items".into(), format_gpu_items(gpu));
}

/// Context of the first Coder prompt.
pub fn initial_coder_context(task: &Task) -> PromptContext {
    let mut ctx = PromptContext::new();
    ctx.insert("few_base".into(), block(FEW_SHOT_BASE));
    ctx.insert("few_new".into(), block(FEW_SHOT_NEW));
    ctx.insert("arch_src".into(), block(&task.reference_source));
    ctx
}

/// Template and context of a follow-up Coder prompt. Only the previous round
/// is consulted; without feedback the stand-in self-refine text is used.
pub fn build_coder_context(
    prev: &RoundRecord,
    feedback: Option<&JudgeFeedback>,
    gpu: &GpuSpec,
) -> (TemplateKind, PromptContext) {
    let mut ctx = PromptContext::new();
    ctx.insert("CUDA_CODE".into(), block(&prev.candidate.source));
    match decide_mode(&prev.report) {
        JudgeMode::Correction => {
            ctx.insert("ERROR_LOG".into(), block(&prev.report.error_log));
            let problem = feedback.map_or_else(|| SELF_REFINE_CORRECTION.to_string(), JudgeFeedback::to_json);
            ctx.insert("Problem".into(), problem);
            (TemplateKind::CoderCorrect, ctx)
        }
        JudgeMode::Optimization => {
            gpu_fields(&mut ctx, gpu);
            let hint = feedback.map_or_else(|| SELF_REFINE_OPTIMIZATION.to_string(), JudgeFeedback::to_json);
            ctx.insert("optimization_suggestion".into(), hint);
            (TemplateKind::CoderOptimize, ctx)
        }
    }
}

/// Template and context of the Judge prompt for a tested candidate.
pub fn build_judge_context(task: &Task, record: &RoundRecord, gpu: &GpuSpec) -> (TemplateKind, PromptContext) {
    let mut ctx = PromptContext::new();
    ctx.insert("CUDA_CODE".into(), block(&record.candidate.source));
    match decide_mode(&record.report) {
        JudgeMode::Correction => {
            ctx.insert("ERROR_LOG".into(), block(&record.report.error_log));
            ctx.insert("PYTORCH_CODE".into(), block(&task.reference_source));
            (TemplateKind::JudgeCorrect, ctx)
        }
        JudgeMode::Optimization => {
            gpu_fields(&mut ctx, gpu);
            ctx.insert("python_code".into(), block(&task.reference_source));
            let metrics = record.profile.as_ref().map(format_metrics).unwrap_or_default();
            ctx.insert("NCU_METRICS".into(), metrics);
            (TemplateKind::JudgeOptimize, ctx)
        }
    }
}

struct Run<'a> {
    task: &'a Task,
    config: &'a WorkflowConfig,
    coder: &'a dyn LlmBackend,
    judge: &'a dyn LlmBackend,
    executor: &'a mut dyn Executor,
    events: &'a mut dyn EventSink,
    ledger: CostLedger,
}

enum Stop {
    Budget { round: u32, spent: f64, cap: f64 },
    Fatal(WorkflowError),
}

impl From<AgentError> for Stop {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::BudgetExceeded { spent, cap } => Stop::Budget { round: 0, spent, cap },
            AgentError::Backend(b) => Stop::Fatal(b.into()),
        }
    }
}

impl From<ExecError> for Stop {
    fn from(e: ExecError) -> Self {
        Stop::Fatal(e.into())
    }
}

impl From<PromptError> for Stop {
    fn from(e: PromptError) -> Self {
        Stop::Fatal(e.into())
    }
}

impl Run<'_> {
    fn book(&mut self, times: ExecTimes, profile: bool) {
        if profile {
            self.ledger.record_time(Phase::Profile, times.compile_s + times.execute_s);
        } else {
            self.ledger.record_time(Phase::Compile, times.compile_s);
            self.ledger.record_time(Phase::Execute, times.execute_s);
        }
    }

    fn generate(&mut self, round: u32, kind: TemplateKind, ctx: &PromptContext) -> Result<String, Stop> {
        let prompt = render_prompt(kind, ctx)?;
        let req = AgentRequest { task_id: &self.task.id, kind, round, attempt: 0, prompt: &prompt };
        let reply = call_agent(self.coder, &req, &mut self.ledger, self.config.budget_cap_dollars)
            .map_err(|e| with_round(e.into(), round))?;
        Ok(extract_kernel_code(&reply.raw_text).unwrap_or_default())
    }

    fn test(&mut self, round: u32, source: &str) -> Result<(RunReport, ExecRequest), Stop> {
        let c = self.config;
        let req = ExecRequest::test(self.task, round, source, c.tolerance, c.timing, c.timeout_s);
        if source.trim().is_empty() {
            return Ok((RunReport::compile_failure("coder reply contained no code"), req));
        }
        let (report, times) = self.executor.test(&req)?;
        self.book(times, false);
        Ok((report, req))
    }

    fn profile(&mut self, round: u32, test: &ExecRequest) -> Result<Option<NcuProfile>, Stop> {
        let req = ExecRequest::profile(test, self.config.metric_subset.names());
        match self.executor.profile(&req) {
            Ok((export, times)) => {
                self.book(times, true);
                let filtered = filter_to_subset(&export, &self.config.metric_subset);
                self.events.emit(&WorkflowEvent::Profiled {
                    task_id: self.task.id.clone(),
                    round,
                    metrics: filtered.profile.metrics.len(),
                    missing: filtered.missing,
                });
                Ok(Some(filtered.profile))
            }
            Err(ExecError::ProfilerUnavailable(reason) | ExecError::Timeout(reason)) => {
                self.events.emit(&WorkflowEvent::ProfilerUnavailable { task_id: self.task.id.clone(), round, reason });
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn ask_judge(&mut self, record: &RoundRecord) -> Result<Option<JudgeFeedback>, Stop> {
        let round = record.round;
        let (kind, ctx) = build_judge_context(self.task, record, &self.config.gpu);
        let mode = decide_mode(&record.report);
        let prompt = render_prompt(kind, &ctx)?;
        let mut current = prompt.clone();
        for attempt in 0..=JUDGE_REASKS {
            let req = AgentRequest { task_id: &self.task.id, kind, round, attempt, prompt: &current };
            let reply = call_agent(self.judge, &req, &mut self.ledger, self.config.budget_cap_dollars)
                .map_err(|e| with_round(e.into(), round))?;
            match parse_judge_feedback(&reply.raw_text, mode) {
                Ok(parsed) => {
                    for w in parsed.warnings {
                        self.events.emit(&WorkflowEvent::JudgeWarning {
                            task_id: self.task.id.clone(),
                            round,
                            field: w.field.to_string(),
                            words: w.words,
                            cap: w.cap,
                        });
                    }
                    self.events.emit(&WorkflowEvent::Feedback { task_id: self.task.id.clone(), round, mode });
                    return Ok(Some(parsed.feedback));
                }
                Err(err) => {
                    self.events.emit(&WorkflowEvent::JudgeRetry {
                        task_id: self.task.id.clone(),
                        round,
                        attempt,
                        error: err.to_string(),
                    });
                    current = reask_prompt(&prompt, &err);
                }
            }
        }
        self.events.emit(&WorkflowEvent::JudgeDegraded { task_id: self.task.id.clone(), round });
        Ok(None)
    }

    fn round(&mut self, round: u32, rounds: &mut Vec<RoundRecord>) -> Result<(), Stop> {
        let (kind, ctx) = match rounds.last() {
            None => (TemplateKind::CoderInitial, initial_coder_context(self.task)),
            Some(prev) => build_coder_context(prev, prev.feedback.as_ref(), &self.config.gpu),
        };
        self.events.emit(&WorkflowEvent::RoundStarted { task_id: self.task.id.clone(), round, kind });
        let source = self.generate(round, kind, &ctx)?;
        let mut candidate = KernelCandidate::generated(&self.task.id, round, source);
        let (report, req) = self.test(round, &candidate.source)?;
        candidate.settle(&report);
        self.events.emit(&WorkflowEvent::Tested {
            task_id: self.task.id.clone(),
            round,
            status: candidate.status,
            speedup: report.speedup(),
        });
        let profile = if report.correct { self.profile(round, &req)? } else { None };
        let profiled_or_failed = !report.correct || profile.is_some();
        rounds.push(RoundRecord { round, candidate, report, feedback: None, profile });
        let last = round == self.config.max_rounds;
        if !last && !self.config.self_refine && profiled_or_failed {
            let rec = rounds.last().expect("just pushed");
            let feedback = self.ask_judge(rec)?;
            rounds.last_mut().expect("just pushed").feedback = feedback;
        }
        Ok(())
    }
}

fn with_round(stop: Stop, round: u32) -> Stop {
    match stop {
        Stop::Budget { spent, cap, .. } => Stop::Budget { round, spent, cap },
        other => other,
    }
}

/// Runs the loop for one task.
///
/// Running out of budget ends the loop early and returns what was built so
/// far with `truncated` set. Executor and backend failures are errors.
pub fn run_workflow(
    task: &Task,
    config: &WorkflowConfig,
    coder: &dyn LlmBackend,
    judge: &dyn LlmBackend,
    executor: &mut dyn Executor,
    events: &mut dyn EventSink,
) -> Result<WorkflowResult, WorkflowError> {
    config.validate()?;
    let mut run = Run { task, config, coder, judge, executor, events, ledger: CostLedger::new() };
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut truncated = false;
    for round in 1..=config.max_rounds {
        match run.round(round, &mut rounds) {
            Ok(()) => {}
            Err(Stop::Budget { round, spent, cap }) => {
                run.events.emit(&WorkflowEvent::BudgetExceeded { task_id: task.id.clone(), round, spent, cap });
                truncated = true;
                break;
            }
            Err(Stop::Fatal(e)) => return Err(e),
        }
    }
    let best = select_best(&rounds);
    let best_round = best.map(|b| b.round);
    let speedup = best.and_then(|b| b.report.speedup());
    let best = best.map(|b| b.candidate.clone());
    let rounds_used = rounds.len() as u32;
    run.events.emit(&WorkflowEvent::Finished { task_id: task.id.clone(), rounds_used, best_round, speedup });
    Ok(WorkflowResult {
        task_id: task.id.clone(),
        level: task.level,
        rounds,
        best,
        speedup,
        rounds_used,
        truncated,
        cost: run.ledger,
    })
}
