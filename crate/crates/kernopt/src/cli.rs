//! The `kernopt` command line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kernopt_core::agent::{BackendError, LlmBackend};
use kernopt_core::evaluator::{render_cost_table, render_suite_table, report_cost, summarize, Fast1Denominator};
use kernopt_core::exec::{ExecError, ExecRequest, ExecTimes, Executor};
use kernopt_core::lint::{lint_kernel, rule_name};
use kernopt_core::miner::{mine, render_report, KernelSample, MinerConfig};
use kernopt_core::workflow::run_workflow;
use kernopt_core::{
    CostLedger, MetricCatalog, ProfilerExport, RunReport, Task, WorkflowConfig, WorkflowError, WorkflowResult,
};

use crate::config::{resolve, BackendChoice, ConfigError, FileConfig, Overrides, Settings};
use crate::http::HttpBackend;
use crate::output::{load_results, result_path, write_result, JsonlSink, EVENTS_FILE, RESULTS_DIR};
use crate::samples::{load_samples, write_task_samples};
use crate::subprocess::SubprocessExecutor;
use crate::suite::{load_suite, select};
use crate::transcript::{MockBackend, ScriptedExecutor, Transcript};

#[derive(Debug, Parser)]
#[command(name = "kernopt", version, about = "Coder/Judge GPU kernel optimization loop")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the loop on one task or a suite and write one result file per task.
    Run(RunArgs),
    /// Run, then print the suite report for the selected tasks.
    Bench(BenchArgs),
    /// Mine profiled kernel samples for the metrics that track runtime.
    SelectMetrics(SelectArgs),
    /// Collect profiled kernel samples with self-refining runs.
    SampleKernels(SampleArgs),
    /// Print suite statistics and cost tables for a results directory.
    Report(ReportArgs),
    /// Flag kernels without device code or with framework fallbacks.
    LintKernel(LintArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Single task id (same as --suite with an id).
    #[arg(long)]
    pub task: Option<String>,
    /// `all`, `levelN` or a task id.
    #[arg(long)]
    pub suite: Option<String>,
    /// Suite manifest listing the task files.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// GPU registry key, e.g. rtx6000-ada.
    #[arg(long)]
    pub gpu: Option<String>,
    /// Live model id, or `mock`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Transcript directory for the mock backend.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Task workflows to run concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-task API spend cap in dollars.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip tasks that already have a result file.
    #[arg(long)]
    pub resume: bool,
    /// Metric list handed to the Judge (defaults to the shipped key subset).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Never call the Judge; the Coder refines on its own.
    #[arg(long)]
    pub self_refine: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            manifest: self.manifest.clone(),
            task: self.task.clone(),
            suite: self.suite.clone(),
            max_rounds: self.max_rounds,
            tolerance: self.tolerance,
            gpu: self.gpu.clone(),
            backend: self.backend.clone(),
            mock: self.mock.clone(),
            jobs: self.jobs,
            budget: self.budget,
            out: self.out.clone(),
            resume: self.resume,
            metrics: self.metrics.clone(),
            self_refine: self.self_refine,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Fast1Arg {
    #[default]
    All,
    Correct,
}

impl From<Fast1Arg> for Fast1Denominator {
    fn from(a: Fast1Arg) -> Self {
        match a {
            Fast1Arg::All => Fast1Denominator::AllTasks,
            Fast1Arg::Correct => Fast1Denominator::CorrectTasks,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Row label of the overall line.
    #[arg(long, default_value = "kernopt")]
    pub label: String,
    /// Denominator of the Fast1 column.
    #[arg(long, value_enum, default_value_t = Fast1Arg::All)]
    pub fast1: Fast1Arg,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    /// Samples directory (`<task>/runtimes.csv` plus one profile per kernel).
    pub samples: PathBuf,
    /// Where catalog.txt and the score reports go.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// |r| above which two metrics count as aliases.
    #[arg(long, default_value_t = 0.999)]
    pub collinearity: f64,
    /// Keep collinear metrics.
    #[arg(long, conflicts_with = "collinearity")]
    pub no_collinearity: bool,
    #[arg(long, default_value_t = 0.75)]
    pub percentile: f64,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output samples directory.
    #[arg(long)]
    pub samples: PathBuf,
    /// Metric list to capture for every correct kernel.
    #[arg(long)]
    pub capture: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Results directory (defaults to `<out>/results`).
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LintArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

/// Process exit status. Higher `severity` wins when tasks disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok,
    /// Lint findings, backend or other task failures.
    Failure,
    Config,
    Executor,
    Budget,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Ok => 0,
            Exit::Failure => 1,
            Exit::Config => 2,
            Exit::Executor => 3,
            Exit::Budget => 4,
        }
    }

    fn severity(self) -> u8 {
        match self {
            Exit::Ok => 0,
            Exit::Failure => 1,
            Exit::Budget => 2,
            Exit::Executor => 3,
            Exit::Config => 4,
        }
    }

    fn max(self, other: Exit) -> Exit {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }
}

fn workflow_exit(e: &WorkflowError) -> Exit {
    match e {
        WorkflowError::Config(_) | WorkflowError::Backend(BackendError::Auth(_)) => Exit::Config,
        WorkflowError::Executor(_) => Exit::Executor,
        WorkflowError::Backend(_) | WorkflowError::Prompt(_) => Exit::Failure,
    }
}

fn config_error(out: &mut dyn Write, e: impl std::fmt::Display) -> Exit {
    let _ = writeln!(out, "error: {e}");
    Exit::Config
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Exit {
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return config_error(out, e),
    };
    match cli.command {
        Command::Run(args) => cmd_run(&file, &args, out).0,
        Command::Bench(args) => cmd_bench(&file, &args, out),
        Command::SelectMetrics(args) => cmd_select_metrics(&args, out),
        Command::SampleKernels(args) => cmd_sample_kernels(&file, &args, out),
        Command::Report(args) => cmd_report(&file, &args, out),
        Command::LintKernel(args) => cmd_lint(&args, out),
    }
}

struct Backends {
    coder: Box<dyn LlmBackend>,
    judge: Box<dyn LlmBackend>,
    executor: ExecutorProto,
}

#[derive(Clone)]
enum ExecutorProto {
    Scripted(ScriptedExecutor),
    Subprocess(SubprocessExecutor),
}

impl ExecutorProto {
    fn instance(&self) -> Box<dyn Executor + Send> {
        match self {
            ExecutorProto::Scripted(e) => Box::new(e.clone()),
            ExecutorProto::Subprocess(e) => Box::new(e.clone()),
        }
    }
}

fn build_backends(settings: &Settings) -> Result<Backends, ConfigError> {
    match &settings.backend {
        BackendChoice::Mock { dir, prices } => {
            let t = Arc::new(Transcript::load(dir).map_err(|e| ConfigError(e.to_string()))?);
            if t.is_empty() {
                return Err(ConfigError(format!("{}: no transcript records", dir.display())));
            }
            Ok(Backends {
                coder: Box::new(MockBackend::new(t.clone(), *prices)),
                judge: Box::new(MockBackend::new(t.clone(), *prices)),
                executor: ExecutorProto::Scripted(ScriptedExecutor::new(t)),
            })
        }
        BackendChoice::Live { coder, judge } => {
            let live = |s| HttpBackend::from_env(s).map_err(|e| ConfigError(e.to_string()));
            let mut sub = SubprocessExecutor::new(settings.harness_command.clone());
            sub.grace_s = settings.harness_grace_s;
            Ok(Backends {
                coder: Box::new(live(coder.clone())?),
                judge: Box::new(live(judge.clone())?),
                executor: ExecutorProto::Subprocess(sub),
            })
        }
    }
}

fn load_tasks(settings: &Settings) -> Result<Vec<Task>, ConfigError> {
    let all = load_suite(&settings.manifest).map_err(|e| ConfigError(e.to_string()))?;
    let picked = select(&all, &settings.selector).map_err(|e| ConfigError(e.to_string()))?;
    Ok(picked.into_iter().cloned().collect())
}

/// Wraps an executor so every profile request captures `capture` and the
/// full export is kept per round.
struct CapturingExecutor<'a> {
    inner: &'a mut dyn Executor,
    capture: &'a [String],
    exports: BTreeMap<u32, ProfilerExport>,
}

impl Executor for CapturingExecutor<'_> {
    fn test(&mut self, req: &ExecRequest) -> Result<(RunReport, ExecTimes), ExecError> {
        self.inner.test(req)
    }

    fn profile(&mut self, req: &ExecRequest) -> Result<(ProfilerExport, ExecTimes), ExecError> {
        let wide = ExecRequest::profile(req, self.capture);
        let (export, times) = self.inner.profile(&wide)?;
        if let Some((_, round)) = crate::transcript::split_request_id(&req.request_id) {
            self.exports.insert(round, export.clone());
        }
        Ok((export, times))
    }
}

fn samples_from(result: &WorkflowResult, exports: &BTreeMap<u32, ProfilerExport>) -> Vec<KernelSample> {
    result
        .rounds
        .iter()
        .filter_map(|r| {
            let runtime = r.report.kernel_latency_ms.filter(|_| r.report.correct)?;
            let mut profile = exports.get(&r.round)?.clone();
            let kernel_id = format!("r{:03}", r.round);
            profile.kernel_id = kernel_id.clone();
            Some(KernelSample { task_id: result.task_id.clone(), kernel_id, runtime_ms: runtime, profile })
        })
        .collect()
}

struct TaskRun {
    result: Result<WorkflowResult, WorkflowError>,
    samples: Vec<KernelSample>,
}

/// Runs `tasks` on `jobs` worker threads. Output order follows `tasks`.
fn run_tasks(
    tasks: &[Task],
    config: &WorkflowConfig,
    backends: &Backends,
    jobs: usize,
    sink: &JsonlSink,
    capture: Option<&[String]>,
) -> Vec<TaskRun> {
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(usize, TaskRun)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(tasks.len()).max(1) {
            s.spawn(|| {
                let mut executor = backends.executor.instance();
                let mut events = sink.clone();
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(task) = tasks.get(i) else { break };
                    log::info!("task {} started", task.id);
                    let run = match capture {
                        None => TaskRun {
                            result: run_workflow(
                                task,
                                config,
                                &*backends.coder,
                                &*backends.judge,
                                &mut *executor,
                                &mut events,
                            ),
                            samples: Vec::new(),
                        },
                        Some(capture) => {
                            let mut cap =
                                CapturingExecutor { inner: &mut *executor, capture, exports: BTreeMap::new() };
                            let result =
                                run_workflow(task, config, &*backends.coder, &*backends.judge, &mut cap, &mut events);
                            let samples = result.as_ref().map(|r| samples_from(r, &cap.exports)).unwrap_or_default();
                            TaskRun { result, samples }
                        }
                    };
                    match &run.result {
                        Ok(r) => {
                            log::info!("task {} finished: {} rounds, speedup {:?}", task.id, r.rounds_used, r.speedup)
                        }
                        Err(e) => log::error!("task {} failed: {e}", task.id),
                    }
                    done.lock().unwrap_or_else(|p| p.into_inner()).push((i, run));
                }
            });
        }
    });
    sink.flush();
    let mut done = done.into_inner().unwrap_or_else(|p| p.into_inner());
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, r)| r).collect()
}

fn prepare(file: &FileConfig, args: &RunArgs, out: &mut dyn Write) -> Result<(Settings, Vec<Task>, Backends), Exit> {
    let settings = resolve(file, &args.overrides()).map_err(|e| config_error(out, e))?;
    let tasks = load_tasks(&settings).map_err(|e| config_error(out, e))?;
    let backends = build_backends(&settings).map_err(|e| config_error(out, e))?;
    fs::create_dir_all(&settings.out).map_err(|e| config_error(out, format!("{}: {e}", settings.out.display())))?;
    Ok((settings, tasks, backends))
}

/// `run`: one result file per task. Returns the exit status and the ids of
/// the selected tasks.
pub fn cmd_run(file: &FileConfig, args: &RunArgs, out: &mut dyn Write) -> (Exit, Vec<String>, Option<PathBuf>) {
    let (settings, tasks, backends) = match prepare(file, args, out) {
        Ok(p) => p,
        Err(e) => return (e, Vec::new(), None),
    };
    let ids: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
    let pending: Vec<Task> = tasks
        .into_iter()
        .filter(|t| {
            let skip = settings.resume && result_path(&settings.out, &t.id).exists();
            if skip {
                log::info!("task {} already has a result, skipping", t.id);
            }
            !skip
        })
        .collect();
    let sink = match JsonlSink::append(&settings.out.join(EVENTS_FILE)) {
        Ok(s) => s,
        Err(e) => return (config_error(out, e), ids, None),
    };
    let mut exit = Exit::Ok;
    for (task, run) in
        pending.iter().zip(run_tasks(&pending, &settings.workflow, &backends, settings.jobs, &sink, None))
    {
        match run.result {
            Ok(result) => {
                if result.truncated {
                    exit = exit.max(Exit::Budget);
                }
                match write_result(&settings.out, &result) {
                    Ok(path) => {
                        let _ = writeln!(
                            out,
                            "{}: {} rounds, best {} -> {}",
                            task.id,
                            result.rounds_used,
                            result.speedup.map_or("none".into(), |s| format!("{s:.3}x")),
                            path.display()
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(out, "{}: {e}", task.id);
                        exit = exit.max(Exit::Failure);
                    }
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{}: error: {e}", task.id);
                exit = exit.max(workflow_exit(&e));
            }
        }
    }
    (exit, ids, Some(settings.out))
}

fn render_full_report(results: &[WorkflowResult], table: &TableArgs) -> Result<String, String> {
    let summary = summarize(results, table.fast1.into()).map_err(|e| e.to_string())?;
    let mut text = render_suite_table(&table.label, &summary);
    text.push('\n');
    text.push_str(&render_cost_table(results));
    let mut total = CostLedger::new();
    for r in results {
        total.merge(&r.cost);
    }
    text.push('\n');
    text.push_str(&format!("Total: {}\n", report_cost(&total).summary_line()));
    Ok(text)
}

fn cmd_bench(file: &FileConfig, args: &BenchArgs, out: &mut dyn Write) -> Exit {
    let (exit, ids, dir) = cmd_run(file, &args.run, out);
    let Some(dir) = dir else { return exit };
    let results = match load_results(&dir.join(RESULTS_DIR)) {
        Ok(rs) => rs.into_iter().filter(|r| ids.contains(&r.task_id)).collect::<Vec<_>>(),
        Err(e) => return exit.max(config_error(out, e)),
    };
    match render_full_report(&results, &args.table) {
        Ok(text) => {
            let _ = writeln!(out, "\n{text}");
            if let Err(e) = fs::write(dir.join("report.txt"), &text) {
                log::warn!("could not write report: {e}");
            }
            exit
        }
        Err(e) => exit.max(config_error(out, e)),
    }
}

fn cmd_report(file: &FileConfig, args: &ReportArgs, out: &mut dyn Write) -> Exit {
    let dir = args.results.clone().unwrap_or_else(|| {
        args.out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| crate::config::DEFAULT_OUT.into())
            .join(RESULTS_DIR)
    });
    let results = match load_results(&dir) {
        Ok(r) => r,
        Err(e) => return config_error(out, e),
    };
    match render_full_report(&results, &args.table) {
        Ok(text) => {
            let _ = write!(out, "{text}");
            Exit::Ok
        }
        Err(e) => config_error(out, format!("{}: {e}", dir.display())),
    }
}

fn cmd_select_metrics(args: &SelectArgs, out: &mut dyn Write) -> Exit {
    let config = MinerConfig {
        collinearity_threshold: (!args.no_collinearity).then_some(args.collinearity),
        top_k: args.top_k,
        percentile: args.percentile,
        ..MinerConfig::default()
    };
    let samples = match load_samples(&args.samples) {
        Ok(s) => s,
        Err(e) => return config_error(out, e),
    };
    let report = match mine(&samples, &config) {
        Ok(r) => r,
        Err(e) => return config_error(out, e),
    };
    let text = render_report(&report);
    let _ = write!(out, "{text}");
    let write =
        |name: &str, body: &str| fs::create_dir_all(&args.out).and_then(|_| fs::write(args.out.join(name), body));
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    if let Err(e) = write("metric_report.txt", &text).and_then(|_| write("metric_report.json", &json)) {
        return config_error(out, e);
    }
    match report.catalog() {
        Ok(catalog) => {
            if let Err(e) = write("catalog.txt", &catalog.to_text()) {
                return config_error(out, e);
            }
            let _ = writeln!(out, "\n{} metrics selected -> {}", catalog.len(), args.out.join("catalog.txt").display());
        }
        Err(_) => {
            let _ = writeln!(out, "\nno metric passed the selection; catalog.txt not written");
        }
    }
    Exit::Ok
}

fn cmd_sample_kernels(file: &FileConfig, args: &SampleArgs, out: &mut dyn Write) -> Exit {
    let capture = match fs::read_to_string(&args.capture)
        .map_err(|e| e.to_string())
        .and_then(|t| MetricCatalog::parse(&t).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => return config_error(out, format!("{}: {e}", args.capture.display())),
    };
    let mut run = args.run.clone();
    run.self_refine = true;
    if run.max_rounds.is_none() && file.max_rounds.is_none() {
        run.max_rounds = Some(100);
    }
    let (settings, tasks, backends) = match prepare(file, &run, out) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let sink = match JsonlSink::append(&settings.out.join(EVENTS_FILE)) {
        Ok(s) => s,
        Err(e) => return config_error(out, e),
    };
    let mut exit = Exit::Ok;
    let runs = run_tasks(&tasks, &settings.workflow, &backends, settings.jobs, &sink, Some(capture.names()));
    for (task, r) in tasks.iter().zip(runs) {
        match r.result {
            Ok(_) => {
                if let Err(e) = write_task_samples(&args.samples, &task.id, &r.samples) {
                    let _ = writeln!(out, "{}: {e}", task.id);
                    exit = exit.max(Exit::Failure);
                } else {
                    let _ = writeln!(out, "{}: {} samples", task.id, r.samples.len());
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{}: error: {e}", task.id);
                exit = exit.max(workflow_exit(&e));
            }
        }
    }
    exit
}

fn cmd_lint(args: &LintArgs, out: &mut dyn Write) -> Exit {
    let mut any = false;
    let mut report = Vec::new();
    for path in &args.files {
        let source = match fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => return config_error(out, format!("{}: {e}", path.display())),
        };
        let findings = lint_kernel(&source);
        any |= !findings.is_empty();
        if args.json {
            report.push(serde_json::json!({ "file": path, "findings": findings }));
            continue;
        }
        for f in &findings {
            let _ = writeln!(out, "{}:{}-{}: {}", path.display(), f.span.0, f.span.1, rule_name(f.rule));
            for line in f.excerpt.lines() {
                let _ = writeln!(out, "    | {line}");
            }
        }
    }
    if args.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("findings serialize"));
    }
    if any {
        Exit::Failure
    } else {
        Exit::Ok
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out).code(),
        Err(e) => {
            let _ = write!(out, "{e}");
            if e.use_stderr() {
                Exit::Config.code()
            } else {
                0
            }
        }
    }
}
