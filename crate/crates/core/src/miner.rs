//! Offline selection of the profiler metrics that track kernel runtime.
//!
//! Per task: keep the five fastest and five slowest correct kernels, drop
//! constant and collinear metrics, rank the rest by |Pearson r| against
//! runtime and keep the top 20. Across tasks: a metric survives when it is in
//! at least two top lists, its correlation never flips sign, and its mean
//! |r| is strictly above the 75th percentile of all candidate means.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::hardware::{CatalogError, MetricCatalog, ProfilerExport};
use crate::stats::percentile;

/// One correct kernel with its measured runtime and full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub task_id: String,
    pub kernel_id: String,
    pub runtime_ms: f64,
    pub profile: ProfilerExport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Metric pairs with |r| above this are treated as aliases. `None` keeps
    /// collinear metrics (constant metrics are still dropped).
    pub collinearity_threshold: Option<f64>,
    pub top_k: usize,
    /// Kernels kept from each end of the runtime-sorted sample list.
    pub extremes_per_side: usize,
    pub percentile: f64,
    pub min_tasks: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self { collinearity_threshold: Some(0.999), top_k: 20, extremes_per_side: 5, percentile: 0.75, min_tasks: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MinerError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("task `{task}` has {found} samples, need at least {need}")]
    TooFewSamples { task: String, found: usize, need: usize },
    #[error("kernel `{0}` has a non-positive or non-finite runtime")]
    BadRuntime(String),
    #[error("runtimes of task `{0}` are all equal")]
    ConstantRuntime(String),
    #[error("no tasks to mine")]
    NoTasks,
}

/// Pearson correlation, computed from centred sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MinerError> {
    if x.len() != y.len() {
        return Err(MinerError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(MinerError::TooShort(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MinerError::ZeroVariance);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

fn by_runtime(a: &KernelSample, b: &KernelSample) -> Ordering {
    a.runtime_ms.total_cmp(&b.runtime_ms).then_with(|| a.kernel_id.cmp(&b.kernel_id))
}

/// The `k` fastest and `k` slowest samples (fastest first).
pub fn select_extremes_k(samples: &[KernelSample], k: usize, task: &str) -> Result<Vec<KernelSample>, MinerError> {
    if samples.len() < 2 * k {
        return Err(MinerError::TooFewSamples { task: task.into(), found: samples.len(), need: 2 * k });
    }
    if let Some(bad) = samples.iter().find(|s| !(s.runtime_ms.is_finite() && s.runtime_ms > 0.0)) {
        return Err(MinerError::BadRuntime(bad.kernel_id.clone()));
    }
    let mut sorted: Vec<&KernelSample> = samples.iter().collect();
    sorted.sort_by(|a, b| by_runtime(a, b));
    let m = sorted.len();
    Ok(sorted[..k].iter().chain(&sorted[m - k..]).map(|s| (*s).clone()).collect())
}

pub fn select_extremes(samples: &[KernelSample]) -> Result<Vec<KernelSample>, MinerError> {
    let task = samples.first().map(|s| s.task_id.as_str()).unwrap_or("");
    select_extremes_k(samples, 5, task)
}

/// Metric value vectors aligned with sample order, after pruning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrunedMetrics {
    pub vectors: BTreeMap<String, Vec<f64>>,
    pub dropped_constant: Vec<String>,
    /// `(dropped, kept)` alias pairs.
    pub dropped_collinear: Vec<(String, String)>,
}

impl PrunedMetrics {
    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vectors.keys()
    }
}

/// Drops constant metrics, then walks the remaining names in lexicographic
/// order and drops any metric whose |r| with an already-kept one exceeds the
/// threshold. Only metrics reported for every sample are considered.
pub fn dedupe_aliases(samples: &[KernelSample], threshold: Option<f64>) -> PrunedMetrics {
    let mut out = PrunedMetrics::default();
    let Some(first) = samples.first() else {
        return out;
    };
    let names: BTreeSet<&str> = first
        .profile
        .rows
        .iter()
        .map(|r| r.metric_name.as_str())
        .filter(|n| samples.iter().all(|s| s.profile.get(n).is_some()))
        .collect();

    let mut kept: Vec<(&str, Vec<f64>)> = Vec::new();
    'names: for name in names {
        let v: Vec<f64> = samples.iter().map(|s| s.profile.get(name).map(|r| r.value).unwrap_or(f64::NAN)).collect();
        let first = v[0];
        if v.iter().all(|x| *x == first) {
            out.dropped_constant.push(name.into());
            continue;
        }
        if let Some(t) = threshold {
            for (k, kv) in &kept {
                if let Ok(r) = pearson(kv, &v) {
                    if r.abs() > t {
                        out.dropped_collinear.push((name.into(), (*k).into()));
                        continue 'names;
                    }
                }
            }
        }
        kept.push((name, v));
    }
    out.vectors = kept.into_iter().map(|(k, v)| (k.into(), v)).collect();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMetric {
    pub name: String,
    pub r: f64,
}

fn rank_order(a: &RankedMetric, b: &RankedMetric) -> Ordering {
    b.r.abs().total_cmp(&a.r.abs()).then_with(|| a.name.cmp(&b.name))
}

/// Sorts by |r| descending (name ascending on ties) and keeps the first `k`.
pub fn top_k(mut correlations: Vec<RankedMetric>, k: usize) -> Vec<RankedMetric> {
    correlations.sort_by(rank_order);
    correlations.truncate(k);
    correlations
}

pub fn top20_for_task(correlations: Vec<RankedMetric>) -> Vec<RankedMetric> {
    top_k(correlations, 20)
}

/// Correlations and top list for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRanking {
    pub task_id: String,
    /// r for every metric that survived pruning.
    pub correlations: BTreeMap<String, f64>,
    pub top: Vec<RankedMetric>,
}

/// Runs extremes selection, pruning and ranking for one task's samples.
pub fn rank_task(task_id: &str, samples: &[KernelSample], config: &MinerConfig) -> Result<TaskRanking, MinerError> {
    let chosen = select_extremes_k(samples, config.extremes_per_side, task_id)?;
    let runtimes: Vec<f64> = chosen.iter().map(|s| s.runtime_ms).collect();
    let pruned = dedupe_aliases(&chosen, config.collinearity_threshold);
    let mut correlations = BTreeMap::new();
    for (name, v) in &pruned.vectors {
        match pearson(v, &runtimes) {
            Ok(r) => {
                correlations.insert(name.clone(), r);
            }
            Err(MinerError::ZeroVariance) => return Err(MinerError::ConstantRuntime(task_id.into())),
            Err(e) => return Err(e),
        }
    }
    let ranked = correlations.iter().map(|(name, r)| RankedMetric { name: name.clone(), r: *r }).collect();
    Ok(TaskRanking { task_id: task_id.into(), correlations, top: top_k(ranked, config.top_k) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_name: String,
    pub per_task_r: BTreeMap<String, f64>,
    pub global_score: f64,
    pub sign_consistent: bool,
    pub tasks_appeared: usize,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSelection {
    /// Selected metrics, best global score first.
    pub selected: Vec<String>,
    /// Every candidate (union of top lists), best global score first.
    pub scores: Vec<MetricScore>,
    /// Percentile the threshold was taken at.
    pub percentile: f64,
    pub threshold: f64,
}

fn sign_consistent(rs: impl Iterator<Item = f64>) -> bool {
    let mut sign = 0.0;
    for r in rs.filter(|r| *r != 0.0) {
        let s = r.signum();
        if sign == 0.0 {
            sign = s;
        } else if s != sign {
            return false;
        }
    }
    true
}

/// Cross-task selection over per-task rankings.
pub fn select_global(rankings: &[TaskRanking], config: &MinerConfig) -> Result<GlobalSelection, MinerError> {
    if rankings.is_empty() {
        return Err(MinerError::NoTasks);
    }
    let candidates: BTreeSet<&str> = rankings.iter().flat_map(|t| t.top.iter().map(|m| m.name.as_str())).collect();
    let mut scores: Vec<MetricScore> = candidates
        .into_iter()
        .map(|name| {
            let per_task_r: BTreeMap<String, f64> =
                rankings.iter().filter_map(|t| t.correlations.get(name).map(|r| (t.task_id.clone(), *r))).collect();
            let global_score = per_task_r.values().map(|r| r.abs()).sum::<f64>() / per_task_r.len().max(1) as f64;
            MetricScore {
                metric_name: name.into(),
                sign_consistent: sign_consistent(per_task_r.values().copied()),
                tasks_appeared: rankings.iter().filter(|t| t.top.iter().any(|m| m.name == name)).count(),
                per_task_r,
                global_score,
                selected: false,
            }
        })
        .collect();
    let all: Vec<f64> = scores.iter().map(|s| s.global_score).collect();
    let threshold = percentile(&all, config.percentile).unwrap_or(0.0);
    for s in &mut scores {
        s.selected = s.tasks_appeared >= config.min_tasks && s.sign_consistent && s.global_score > threshold;
    }
    scores.sort_by(|a, b| b.global_score.total_cmp(&a.global_score).then_with(|| a.metric_name.cmp(&b.metric_name)));
    Ok(GlobalSelection {
        selected: scores.iter().filter(|s| s.selected).map(|s| s.metric_name.clone()).collect(),
        scores,
        percentile: config.percentile,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub rankings: Vec<TaskRanking>,
    pub selection: GlobalSelection,
}

impl MiningReport {
    pub fn catalog(&self) -> Result<MetricCatalog, CatalogError> {
        MetricCatalog::new(self.selection.selected.clone())
    }
}

/// End-to-end mining over samples of several tasks. Tasks are processed in
/// task-id order, so the result does not depend on input order across tasks.
pub fn mine(samples: &[KernelSample], config: &MinerConfig) -> Result<MiningReport, MinerError> {
    let mut by_task: BTreeMap<&str, Vec<KernelSample>> = BTreeMap::new();
    for s in samples {
        by_task.entry(s.task_id.as_str()).or_default().push(s.clone());
    }
    if by_task.is_empty() {
        return Err(MinerError::NoTasks);
    }
    let rankings =
        by_task.iter().map(|(task, samples)| rank_task(task, samples, config)).collect::<Result<Vec<_>, _>>()?;
    let selection = select_global(&rankings, config)?;
    Ok(MiningReport { rankings, selection })
}

/// Per-task top list as a pipe table.
pub fn render_task_table(ranking: &TaskRanking) -> String {
    let mut out = format!("Task-{}: Pearson correlation with runtime (Top-{})\n", ranking.task_id, ranking.top.len());
    out.push_str("Metric Name | Correlation | Abs Correlation\n");
    for m in &ranking.top {
        let _ = writeln!(out, "{} | {:.6} | {:.6}", m.name, m.r, m.r.abs());
    }
    out
}

/// Full report: every task table followed by the global score table.
pub fn render_report(report: &MiningReport) -> String {
    let mut out = String::new();
    for r in &report.rankings {
        out.push_str(&render_task_table(r));
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "Global scores (P{:.0} threshold {:.6})",
        100.0 * report.selection.percentile,
        report.selection.threshold
    );
    out.push_str("Metric Name | Global Score | Tasks | Sign Consistent | Selected\n");
    for s in &report.selection.scores {
        let _ = writeln!(
            out,
            "{} | {:.6} | {} | {} | {}",
            s.metric_name,
            s.global_score,
            s.tasks_appeared,
            if s.sign_consistent { "yes" } else { "no" },
            if s.selected { "yes" } else { "no" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::ProfilerRow;
    use alloc::vec;

    fn sample(task: &str, id: usize, runtime: f64, metrics: &[(&str, f64)]) -> KernelSample {
        KernelSample {
            task_id: task.into(),
            kernel_id: format!("k{id:03}"),
            runtime_ms: runtime,
            profile: ProfilerExport {
                kernel_id: format!("k{id:03}"),
                rows: metrics
                    .iter()
                    .map(|(n, v)| ProfilerRow { metric_name: (*n).into(), unit: String::new(), value: *v })
                    .collect(),
            },
        }
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(MinerError::ZeroVariance));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(MinerError::TooShort(1)));
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]), Err(MinerError::LengthMismatch(2, 1)));
    }

    #[test]
    fn extremes_of_one_hundred() {
        let samples: Vec<_> = (1..=100).rev().map(|i| sample("t", i, i as f64, &[])).collect();
        let picked = select_extremes(&samples).unwrap();
        let rts: Vec<f64> = picked.iter().map(|s| s.runtime_ms).collect();
        assert_eq!(rts, vec![1.0, 2.0, 3.0, 4.0, 5.0, 96.0, 97.0, 98.0, 99.0, 100.0]);
    }

    #[test]
    fn extremes_boundaries() {
        let ten: Vec<_> = (1..=10).map(|i| sample("t", i, i as f64, &[])).collect();
        assert_eq!(select_extremes(&ten).unwrap().len(), 10);
        assert!(matches!(select_extremes(&ten[..9]), Err(MinerError::TooFewSamples { found: 9, need: 10, .. })));
    }

    #[test]
    fn dedupe_drops_aliases_and_constants() {
        let samples: Vec<_> = (0..10)
            .map(|i| {
                let x = i as f64;
                sample(
                    "t",
                    i,
                    1.0 + x,
                    &[
                        ("smsp__inst_executed.sum", 4.0 * (x * x + 3.0)),
                        ("smsp__inst_executed.avg", x * x + 3.0),
                        ("constant", 7.0),
                        ("wiggle", if i % 2 == 0 { 1.0 } else { -1.0 }),
                    ],
                )
            })
            .collect();
        let p = dedupe_aliases(&samples, Some(0.999));
        let names: Vec<&String> = p.names().collect();
        assert_eq!(names, vec!["smsp__inst_executed.avg", "wiggle"]);
        assert_eq!(p.dropped_constant, vec![String::from("constant")]);
        assert_eq!(
            p.dropped_collinear,
            vec![(String::from("smsp__inst_executed.sum"), String::from("smsp__inst_executed.avg"))]
        );
        let p = dedupe_aliases(&samples, None);
        assert_eq!(p.vectors.len(), 3);
    }

    #[test]
    fn top_list_order_and_truncation() {
        let list = vec![
            RankedMetric { name: "b".into(), r: -0.5 },
            RankedMetric { name: "a".into(), r: 0.5 },
            RankedMetric { name: "c".into(), r: 0.9 },
        ];
        let names: Vec<String> = top20_for_task(list).into_iter().map(|m| m.name).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
        let many: Vec<_> = (0..30).map(|i| RankedMetric { name: format!("m{i:02}"), r: i as f64 / 30.0 }).collect();
        let top = top20_for_task(many);
        assert_eq!(top.len(), 20);
        assert_eq!(top[0].name, "m29");
    }

    #[test]
    fn single_task_metric_is_not_selected() {
        let t1 = TaskRanking {
            task_id: "a".into(),
            correlations: [("x".into(), 0.9), ("y".into(), 0.8)].into_iter().collect(),
            top: vec![RankedMetric { name: "x".into(), r: 0.9 }, RankedMetric { name: "y".into(), r: 0.8 }],
        };
        let t2 = TaskRanking {
            task_id: "b".into(),
            correlations: [("y".into(), 0.7)].into_iter().collect(),
            top: vec![RankedMetric { name: "y".into(), r: 0.7 }],
        };
        let sel = select_global(&[t1, t2], &MinerConfig::default()).unwrap();
        let x = sel.scores.iter().find(|s| s.metric_name == "x").unwrap();
        assert_eq!(x.tasks_appeared, 1);
        assert!(!x.selected);
        assert_eq!(select_global(&[], &MinerConfig::default()), Err(MinerError::NoTasks));
    }

    #[test]
    fn mine_rejects_empty_input() {
        assert_eq!(mine(&[], &MinerConfig::default()).unwrap_err(), MinerError::NoTasks);
    }
}
