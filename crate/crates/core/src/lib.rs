//! Core of a two-agent GPU kernel optimization loop.
//!
//! A Coder model writes a candidate kernel, an external harness compiles,
//! checks and times it, and a Judge model turns the outcome (error log, or
//! profiler counters plus GPU specs) into one correction or one optimization
//! hint for the next round. Alongside the loop sit the offline metric miner
//! that picks which profiler counters the Judge sees, suite statistics, and a
//! lint for kernels that quietly fall back to framework operators.
//!
//! The crate only needs `alloc`; file formats, processes and network live in
//! the `kernopt` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod cost;
pub mod domain;
pub mod evaluator;
pub mod exec;
pub mod hardware;
pub mod lint;
pub mod miner;
pub mod prompt;
pub mod stats;
pub mod workflow;

pub use agent::{AgentReply, AgentRequest, BackendError, LlmBackend};
pub use cost::{CostLedger, Phase, PriceTable};
pub use domain::{
    CandidateStatus, GpuSpec, JudgeFeedback, JudgeMode, KernelCandidate, NcuProfile, RoundRecord, RunReport, Task,
    WorkflowResult,
};
pub use exec::{ExecError, ExecRequest, ExecResponse, Executor};
pub use hardware::{MetricCatalog, ProfilerExport, ProfilerRow};
pub use prompt::TemplateKind;
pub use workflow::{run_workflow, WorkflowConfig, WorkflowError};
