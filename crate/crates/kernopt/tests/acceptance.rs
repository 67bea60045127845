//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p kernopt --test acceptance`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kernopt::registry::GpuRegistry;
use kernopt::samples::load_samples;
use kernopt::suite::{load_suite, select};
use kernopt::transcript::{MockBackend, ScriptedExecutor, Transcript};
use kernopt_core::agent::{parse_judge_feedback, AgentReply, AgentRequest, BackendError, FeedbackError, LlmBackend};
use kernopt_core::cost::PriceTable;
use kernopt_core::domain::{JudgeMode, Task, WorkflowResult};
use kernopt_core::evaluator::{
    render_suite_table, summarize_scores, Fast1Denominator, SuiteStats, SuiteSummary, TaskScore,
};
use kernopt_core::hardware::MetricCatalog;
use kernopt_core::lint::{lint_kernel, LintRule};
use kernopt_core::miner::{pearson, rank_task, select_global, top_k, MinerConfig, RankedMetric, TaskRanking};
use kernopt_core::prompt::{render_prompt, PromptContext, TemplateKind};
use kernopt_core::workflow::{build_coder_context, run_workflow, WorkflowConfig, WorkflowEvent};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn core_fixture(rel: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------- pearson

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

fn oracle_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let xs: Vec<BigRational> = x.iter().map(|v| exact(*v)).collect();
    let ys: Vec<BigRational> = y.iter().map(|v| exact(*v)).collect();
    let mx = xs.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let my = ys.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let (mut sxy, mut sxx, mut syy) = (BigRational::zero(), BigRational::zero(), BigRational::zero());
    for (a, b) in xs.iter().zip(&ys) {
        let dx = a - &mx;
        let dy = b - &my;
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return None;
    }
    let r = ((&sxy * &sxy) / (sxx * syy)).to_f64()?.sqrt();
    Some(if sxy.is_negative() { -r } else { r })
}

fn pearson_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 1000 {
        let n = rng.gen_range(2..=50);
        let scale = 10f64.powi(rng.gen_range(-2..=5));
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let y: Vec<f64> = if rng.gen_bool(0.25) {
            let k = rng.gen_range(-2.0..2.0);
            x.iter().map(|v| k * v + rng.gen_range(-1e-2..1e-2) * scale).collect()
        } else {
            (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
        };
        let Some(want) = oracle_r(&x, &y) else { continue };
        let got = pearson(&x, &y).map_err(|e| format!("{e}"))?;
        worst = worst.max((got - want).abs());
        pairs += 1;
    }
    ensure!(worst <= 1e-12, "max abs error {worst:e} over {pairs} pairs");
    Ok(format!("{pairs} pairs, max abs error {worst:.1e}"))
}

// ---------------------------------------------------------------- conv2d table

const CONV2D_TOP20: [(&str, f64); 20] = [
    ("sm__cycles_active.avg", 1.000000),
    ("gpc__cycles_elapsed.max", 1.000000),
    ("launch__occupancy_limit_shared_mem", 0.945507),
    ("dram__bytes.sum.per_second", -0.924251),
    ("gpu__dram_throughput.avg.pct_of_peak_sustained_elapsed", -0.924155),
    ("smsp__inst_executed.avg", 0.916287),
    ("smsp__inst_executed.sum", 0.916287),
    ("smsp__inst_issued.avg", 0.916262),
    ("smsp__inst_issued.sum", 0.916262),
    ("lts__t_sector_hit_rate.pct", 0.839237),
    ("smsp__sass_average_branch_targets_threads_uniform.pct", 0.810334),
    ("lts__throughput.avg.pct_of_peak_sustained_elapsed", -0.787261),
    ("smsp__inst_executed_op_branch.sum", 0.746483),
    ("launch__grid_size", 0.745917),
    ("l1tex__t_sector_hit_rate.pct", 0.728356),
    ("gpc__cycles_elapsed.avg.per_second", 0.728053),
    ("dram__cycles_elapsed.avg.per_second", 0.665784),
    ("launch__waves_per_multiprocessor", 0.627478),
    ("launch__thread_count", 0.627478),
    ("launch__shared_mem_per_block_static", -0.610501),
];

fn conv2d_table() -> Outcome {
    let samples = load_samples(&fixtures().join("samples")).map_err(|e| e.to_string())?;
    ensure!(samples.len() == 14, "expected 14 sampled kernels, got {}", samples.len());
    let cfg = MinerConfig { collinearity_threshold: None, ..MinerConfig::default() };
    let ranking = rank_task("conv2d", &samples, &cfg).map_err(|e| e.to_string())?;
    let got: Vec<&str> = ranking.top.iter().map(|m| m.name.as_str()).collect();
    let want: Vec<&str> = CONV2D_TOP20.iter().map(|(n, _)| *n).collect();
    ensure!(got == want, "order differs:\n got {got:?}\nwant {want:?}");
    let mut worst = 0.0f64;
    for (m, (name, r)) in ranking.top.iter().zip(CONV2D_TOP20) {
        let err = (m.r - r).abs();
        ensure!(err <= 1e-6, "{name}: r = {} vs {r}", m.r);
        worst = worst.max(err);
    }
    let dram = ranking.correlations["dram__bytes.sum.per_second"];
    Ok(format!("20/20 in order, dram__bytes.sum.per_second r = {dram:.6}, max error {worst:.1e}"))
}

// ---------------------------------------------------------------- select_global

fn ranking(task: &str, rs: &[(&str, f64)], top: usize) -> TaskRanking {
    TaskRanking {
        task_id: task.into(),
        correlations: rs.iter().map(|(n, r)| (n.to_string(), *r)).collect(),
        top: top_k(rs[..top].iter().map(|(n, r)| RankedMetric { name: n.to_string(), r: *r }).collect(), 20),
    }
}

fn select_global_synthetic() -> Outcome {
    // Global scores (mean |r| over tasks reporting the metric):
    //   a = 0.8 in all three tasks, sign-consistent
    //   b = (0.7 + 0.7 + 0.7) / 3 = 0.7, sign flips in task Y
    //   c = (0.6 + 0.6 + 0.6) / 3 = 0.6, consistent
    //   d = 0.5, top list of X only
    //   e = (0.4 + 0.4) / 2 = 0.4, consistent, two tasks
    // Sorted ascending [0.4, 0.5, 0.6, 0.7, 0.8]; P75 by linear interpolation at
    // rank 0.75 * 4 = 3 is exactly 0.7, so b would sit on the boundary even
    // without its sign flip. With b's sign fixed, only a is strictly above.
    let base = |b_y: f64| {
        vec![
            ranking("X", &[("a", 0.8), ("b", 0.7), ("c", 0.6), ("d", 0.5), ("e", 0.4)], 5),
            ranking("Y", &[("a", 0.8), ("b", b_y), ("c", 0.6), ("e", -0.4)], 3),
            ranking("Z", &[("a", -0.8), ("b", 0.7), ("c", 0.6), ("e", -0.4)], 4),
        ]
    };
    let cfg = MinerConfig::default();
    let flipped = select_global(&base(-0.7), &cfg).map_err(|e| e.to_string())?;
    ensure!(flipped.selected.is_empty(), "a flips sign in Z, b flips in Y: {:?}", flipped.selected);

    let mut t = base(0.7);
    t[2] = ranking("Z", &[("a", 0.8), ("b", 0.7), ("c", 0.6), ("e", 0.4)], 4);
    t[1] = ranking("Y", &[("a", 0.8), ("b", 0.7), ("c", 0.6), ("e", 0.4)], 3);
    let sel = select_global(&t, &cfg).map_err(|e| e.to_string())?;
    ensure!((sel.threshold - 0.7).abs() < 1e-15, "P75 = {}", sel.threshold);
    let b = sel.scores.iter().find(|s| s.metric_name == "b").unwrap();
    ensure!(b.sign_consistent && b.tasks_appeared == 3 && !b.selected, "boundary metric b was selected");
    ensure!(sel.selected == ["a"], "selected {:?}", sel.selected);

    let loose = select_global(&t, &MinerConfig { percentile: 0.25, ..cfg }).map_err(|e| e.to_string())?;
    // P25 = 0.5 (d, single task); c, b and a clear it
    ensure!(loose.selected == ["a", "b", "c"], "P25 selected {:?}", loose.selected);
    Ok("sign flips reject, P75 boundary excluded, selected [a]".into())
}

// ---------------------------------------------------------------- catalog

const CATALOG: [&str; 24] = [
    "sm__cycles_active.avg",
    "sm__warps_active.avg.pct_of_peak_sustained_active",
    "launch__occupancy_limit_blocks",
    "launch__occupancy_limit_registers",
    "launch__occupancy_limit_shared_mem",
    "launch__registers_per_thread",
    "sm__inst_executed.sum",
    "sm__inst_executed_pipe_fp32.avg.pct_of_peak_sustained_active",
    "sm__inst_executed_pipe_tensor.avg.pct_of_peak_sustained_active",
    "dram__bytes_read.sum",
    "dram__bytes_write.sum",
    "dram__throughput.avg.pct_of_peak_sustained_elapsed",
    "dram__bytes.sum.per_second",
    "gpu__dram_throughput.avg.pct_of_peak_sustained_elapsed",
    "l1tex__t_sector_hit_rate.pct",
    "l1tex__throughput.avg.pct_of_peak_sustained_active",
    "lts__t_sector_hit_rate.pct",
    "lts__throughput.avg.pct_of_peak_sustained_active",
    "smsp__warp_issue_stalled_memory_dependency_per_warp_active.pct",
    "smsp__warp_issue_stalled_short_scoreboard_per_warp_active.pct",
    "smsp__warp_issue_stalled_long_scoreboard_per_warp_active.pct",
    "smsp__warp_issue_stalled_barrier_per_warp_active.pct",
    "smsp__warp_issue_stalled_branch_resolving_per_warp_active.pct",
    "smsp__sass_average_branch_targets_threads_uniform.pct",
];

fn catalog() -> Outcome {
    let asset_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/key_metrics.txt");
    let asset = std::fs::read_to_string(&asset_path).map_err(|e| e.to_string())?;
    let want = CATALOG.join("\n") + "\n";
    ensure!(asset == want, "asset file differs from the expected list");
    let cat = MetricCatalog::key_subset();
    ensure!(cat.len() == 24, "{} names", cat.len());
    ensure!(cat.names().iter().map(String::as_str).eq(CATALOG), "loaded names differ");
    ensure!(cat.to_text() == want, "re-serialized catalog differs");
    Ok("24 names, byte-exact".into())
}

// ---------------------------------------------------------------- workflow replay

fn suite_task(id: &str) -> Task {
    let tasks = load_suite(&fixtures().join("suite/manifest.toml")).unwrap();
    select(&tasks, id).unwrap()[0].clone()
}

fn replay_config() -> WorkflowConfig {
    WorkflowConfig::new(GpuRegistry::builtin().get(kernopt::registry::DEFAULT_GPU).unwrap().clone())
}

fn transcript() -> Arc<Transcript> {
    Arc::new(Transcript::load(&fixtures().join("transcripts")).unwrap())
}

fn cli_run(out: &Path) -> Result<Vec<u8>, String> {
    let f = fixtures();
    let (manifest, mock) = (f.join("suite/manifest.toml"), f.join("transcripts"));
    let args = [
        "kernopt",
        "run",
        "--manifest",
        manifest.to_str().unwrap(),
        "--task",
        "level1/95",
        "--backend",
        "mock",
        "--mock",
        mock.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let mut sink = Vec::new();
    let code = kernopt::cli::main_with_args(args, &mut sink);
    ensure!(code == 0, "run exited {code}: {}", String::from_utf8_lossy(&sink));
    std::fs::read(out.join("results/level1/95.json")).map_err(|e| e.to_string())
}

fn workflow_replay() -> Outcome {
    let start = Instant::now();
    let task = suite_task("level1/95");
    let t = transcript();
    let llm = MockBackend::new(t.clone(), PriceTable::default());
    let mut exec = ScriptedExecutor::new(t);
    let mut events: Vec<WorkflowEvent> = Vec::new();
    let res = run_workflow(&task, &replay_config(), &llm, &llm, &mut exec, &mut events).map_err(|e| e.to_string())?;

    ensure!(res.rounds_used == 10, "{} rounds", res.rounds_used);
    let best = res.best.as_ref().ok_or("no best kernel")?;
    let speedup = res.speedup.unwrap_or(0.0);
    ensure!(best.round == 7 && (speedup - 3.762).abs() < 1e-9, "best round {} at {speedup}", best.round);
    let modes: Vec<Option<JudgeMode>> = res.rounds.iter().map(|r| r.feedback.as_ref().map(|f| f.mode)).collect();
    for (i, m) in modes.iter().enumerate() {
        let round = i + 1;
        let want = match round {
            4 => Some(JudgeMode::Correction),
            10 => None,
            _ => Some(JudgeMode::Optimization),
        };
        ensure!(*m == want, "round {round}: feedback {m:?}, want {want:?}");
    }
    ensure!(!res.rounds[3].report.correct, "round 4 should fail");
    let speedups: Vec<Option<f64>> = res.rounds.iter().map(|r| r.report.speedup()).collect();
    for (round, s) in [(1, 1.66), (2, 2.42), (5, 3.436), (7, 3.762)] {
        let got = speedups[round - 1].unwrap_or(0.0);
        ensure!((got - s).abs() < 1e-9, "round {round} speedup {got}");
    }

    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = cli_run(a.path())?;
    let second = cli_run(b.path())?;
    ensure!(first == second, "result files differ between runs");
    let on_disk: WorkflowResult = serde_json::from_slice(&first).map_err(|e| e.to_string())?;
    ensure!(on_disk == res, "CLI result differs from the direct replay");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!(
        "best 3.762x in round 7, 10 rounds, correction on round 4 only, {} identical bytes, {secs:.2} s",
        first.len()
    ))
}

// ---------------------------------------------------------------- prompts

fn prompt_goldens() -> Outcome {
    let ctx: PromptContext = serde_json::from_str(&core_fixture("prompts/context.json")).map_err(|e| e.to_string())?;
    for kind in TemplateKind::ALL {
        let got = render_prompt(kind, &ctx).map_err(|e| e.to_string())?;
        let want = core_fixture(&format!("prompts/{}.golden", kind.as_str().to_lowercase()));
        ensure!(got == want, "{} differs from its golden file", kind.as_str());
    }
    Ok(format!("{} templates byte-match", TemplateKind::ALL.len()))
}

// ---------------------------------------------------------------- judge payloads

const OPT_KEYS: [&str; 3] = ["bottleneck", "optimisation method", "modification plan"];

/// Cuts the `"key": "value",` entry out of a payload. Values may hold raw
/// line breaks, so this works on the text rather than through a JSON parser.
fn drop_key(text: &str, key: &str) -> String {
    let quoted = format!("\"{key}\"");
    let start = text.find(&quoted).unwrap();
    let after = start + quoted.len();
    let open = after + text[after..].find('"').unwrap();
    let close = open + 1 + text[open + 1..].find('"').unwrap();
    let rest = &text[close + 1..];
    let rest = rest.trim_start().strip_prefix(',').unwrap_or(rest);
    let mut out = format!("{}{}", &text[..start], rest);
    let brace = out.rfind('}').unwrap();
    if out[..brace].trim_end().ends_with(',') {
        let comma = out[..brace].rfind(',').unwrap();
        out.replace_range(comma..comma + 1, "");
    }
    out
}

/// Mock transcript with garbage Judge replies on one round, counting Judge calls.
struct GarbledJudge {
    inner: MockBackend,
    round: u32,
    judge_calls: Mutex<BTreeMap<u32, u32>>,
}

impl LlmBackend for GarbledJudge {
    fn model_id(&self) -> &str {
        "garbled"
    }
    fn prices(&self) -> PriceTable {
        self.inner.prices()
    }
    fn complete(&self, req: &AgentRequest<'_>) -> Result<AgentReply, BackendError> {
        let mut reply = self.inner.complete(req)?;
        if req.kind.is_judge() {
            *self.judge_calls.lock().unwrap().entry(req.round).or_default() += 1;
            if req.round == self.round {
                reply.raw_text = "{\"bottleneck\": \"unterminated".into();
            }
        }
        Ok(reply)
    }
}

fn judge_payloads() -> Outcome {
    for name in ["full_metrics.txt", "key_subset.txt"] {
        let text = core_fixture(&format!("judge/{name}"));
        let parsed = parse_judge_feedback(&text, JudgeMode::Optimization).map_err(|e| format!("{name}: {e}"))?;
        ensure!(parsed.feedback.is_well_formed(), "{name} not well formed");
        for key in OPT_KEYS {
            let cut = drop_key(&text, key);
            ensure!(!cut.contains(&format!("\"{key}\"")), "{name}: `{key}` still present");
            match parse_judge_feedback(&cut, JudgeMode::Optimization) {
                Err(FeedbackError::MissingKey(k)) if k == key => {}
                other => return Err(format!("{name} without `{key}`: {other:?}")),
            }
        }
    }

    let t = transcript();
    let llm = GarbledJudge {
        inner: MockBackend::new(t.clone(), PriceTable::default()),
        round: 2,
        judge_calls: Mutex::new(BTreeMap::new()),
    };
    let mut exec = ScriptedExecutor::new(t);
    let mut events: Vec<WorkflowEvent> = Vec::new();
    let res = run_workflow(&suite_task("level1/95"), &replay_config(), &llm, &llm, &mut exec, &mut events)
        .map_err(|e| e.to_string())?;
    let calls = llm.judge_calls.lock().unwrap().clone();
    ensure!(calls.get(&2) == Some(&4), "round 2 judge calls: {:?}", calls.get(&2));
    ensure!(calls.iter().filter(|(r, _)| **r != 2).all(|(_, n)| *n == 1), "other rounds: {calls:?}");
    let retries = events.iter().filter(|e| matches!(e, WorkflowEvent::JudgeRetry { round: 2, .. })).count();
    let degraded = events.iter().any(|e| matches!(e, WorkflowEvent::JudgeDegraded { round: 2, .. }));
    ensure!(retries == 4 && degraded, "failed attempts {retries}, degraded {degraded}");
    ensure!(res.rounds[1].feedback.is_none(), "round 2 kept feedback after degradation");
    Ok("2 payloads accepted, 6 single-key deletions rejected, 4 Judge calls then self-refine".into())
}

// ---------------------------------------------------------------- summarize

fn stats(n: usize, correct: f64, median: f64, p75: f64, mean: f64, fast1: f64) -> SuiteStats {
    SuiteStats {
        tasks: n,
        correctness_pct: correct,
        median_speedup: median,
        p75_speedup: p75,
        mean_speedup: mean,
        fast1_pct: fast1,
    }
}

fn summarize_example() -> Outcome {
    let score = |correct: bool, score: f64| TaskScore { level: 1, correct, score };
    let scores = [score(true, 2.0), score(false, 0.0), score(true, 0.5), score(true, 1.5)];
    let s = summarize_scores(&scores, Fast1Denominator::AllTasks).map_err(|e| e.to_string())?.overall;
    ensure!(s.correctness_pct == 75.0, "correctness {}", s.correctness_pct);
    ensure!(s.mean_speedup == 1.0, "mean {}", s.mean_speedup);
    ensure!(s.median_speedup == 1.0, "median {}", s.median_speedup);
    ensure!(s.fast1_pct == 50.0, "fast1 {}", s.fast1_pct);

    let summary = SuiteSummary {
        overall: stats(250, 97.6, 1.107, 1.592, 1.677, 70.8),
        per_level: BTreeMap::from([
            (1, stats(100, 96.0, 1.044, 1.751, 1.448, 54.0)),
            (2, stats(100, 100.0, 1.124, 1.427, 2.104, 89.0)),
            (3, stats(50, 96.0, 1.081, 1.510, 1.283, 68.0)),
        ]),
    };
    let got = render_suite_table("kernopt", &summary);
    let golden_path = fixtures().join("report/suite_table.golden");
    let want = std::fs::read_to_string(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    ensure!(got == want, "table differs:\n{got}");
    ensure!(got.lines().nth(1) == Some("kernopt | 97.6% | 1.107 | 1.592 | 1.677 | 70.8%"), "overall row");
    Ok("75% / mean 1.0 / median 1.0 / fast1 50%, table matches golden".into())
}

// ---------------------------------------------------------------- linter

fn linter() -> Outcome {
    let fallback = lint_kernel(&core_fixture("lint/fallback_bmm.py"));
    ensure!(fallback.iter().any(|f| f.rule == LintRule::TryExceptFallback), "fallback fixture: {fallback:?}");
    let framework = lint_kernel(&core_fixture("lint/no_kernel_conv3d.py"));
    ensure!(framework.iter().any(|f| f.rule == LintRule::NoDeviceKernel), "conv3d fixture: {framework:?}");
    for name in ["genuine_add.py", "genuine_softmax.py"] {
        let findings = lint_kernel(&core_fixture(&format!("lint/{name}")));
        ensure!(findings.is_empty(), "{name}: {findings:?}");
    }
    Ok("both shortcuts flagged, genuine kernels clean".into())
}

// ---------------------------------------------------------------- memory

/// Records every Coder prompt while replaying the mock transcript.
struct Recording {
    inner: MockBackend,
    prompts: Mutex<BTreeMap<u32, (TemplateKind, usize)>>,
}

impl LlmBackend for Recording {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn prices(&self) -> PriceTable {
        self.inner.prices()
    }
    fn complete(&self, req: &AgentRequest<'_>) -> Result<AgentReply, BackendError> {
        if !req.kind.is_judge() {
            self.prompts.lock().unwrap().insert(req.round, (req.kind, req.prompt.len()));
        }
        self.inner.complete(req)
    }
}

fn lightweight_memory() -> Outcome {
    let t = transcript();
    let llm =
        Recording { inner: MockBackend::new(t.clone(), PriceTable::default()), prompts: Mutex::new(BTreeMap::new()) };
    let mut exec = ScriptedExecutor::new(t);
    let cfg = replay_config();
    let res = run_workflow(&suite_task("level1/95"), &cfg, &llm, &llm, &mut exec, &mut Vec::new())
        .map_err(|e| e.to_string())?;
    let context_len = |round: usize| {
        let prev = &res.rounds[round - 2];
        let (_, ctx) = build_coder_context(prev, prev.feedback.as_ref(), &cfg.gpu);
        serde_json::to_string(&ctx).unwrap().len() as f64
    };
    let (c2, c10) = (context_len(2), context_len(10));
    let ctx_delta = (c10 - c2).abs() / c2;
    ensure!(ctx_delta < 0.10, "context grew from {c2} to {c10} bytes");
    let prompts = llm.prompts.lock().unwrap().clone();
    let (k2, p2) = prompts[&2];
    let (k10, p10) = prompts[&10];
    ensure!(k2 == k10, "round 2 is {k2:?}, round 10 is {k10:?}");
    let prompt_delta = (p10 as f64 - p2 as f64).abs() / p2 as f64;
    ensure!(prompt_delta < 0.10, "prompt grew from {p2} to {p10} bytes");
    Ok(format!(
        "context {c2} -> {c10} bytes ({:.1}%), prompt {p2} -> {p10} bytes ({:.1}%)",
        100.0 * ctx_delta,
        100.0 * prompt_delta
    ))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        ("pearson-oracle", pearson_oracle),
        ("conv2d-metric-table", conv2d_table),
        ("select-global-synthetic", select_global_synthetic),
        ("key-metric-catalog", catalog),
        ("workflow-replay", workflow_replay),
        ("prompt-goldens", prompt_goldens),
        ("judge-payloads", judge_payloads),
        ("summarize-and-table", summarize_example),
        ("kernel-linter", linter),
        ("lightweight-memory", lightweight_memory),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
