//! Suite statistics and report tables.
//!
//! Tasks without a correct kernel score 0 in every speedup statistic, and
//! Fast1 counts tasks whose score is above 1 over the whole suite unless
//! [`Fast1Denominator::CorrectTasks`] is requested.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cost::{CostLedger, Phase};
use crate::domain::WorkflowResult;
use crate::stats::{mean, percentile};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fast1Denominator {
    #[default]
    AllTasks,
    CorrectTasks,
}

/// Outcome of one task as seen by the suite statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub level: u8,
    pub correct: bool,
    /// Speedup of the best kernel, 0 when no kernel was correct.
    pub score: f64,
}

impl From<&WorkflowResult> for TaskScore {
    fn from(r: &WorkflowResult) -> Self {
        Self { level: r.level, correct: r.best.is_some(), score: r.score() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteStats {
    pub tasks: usize,
    pub correctness_pct: f64,
    pub median_speedup: f64,
    pub p75_speedup: f64,
    pub mean_speedup: f64,
    pub fast1_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub overall: SuiteStats,
    pub per_level: BTreeMap<u8, SuiteStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no task results to summarize")]
    EmptySuite,
}

fn stats(scores: &[TaskScore], fast1: Fast1Denominator) -> SuiteStats {
    let n = scores.len();
    let values: Vec<f64> = scores.iter().map(|s| if s.correct { s.score } else { 0.0 }).collect();
    let correct = scores.iter().filter(|s| s.correct).count();
    let faster = scores.iter().filter(|s| s.correct && s.score > 1.0).count();
    let denom = match fast1 {
        Fast1Denominator::AllTasks => n,
        Fast1Denominator::CorrectTasks => correct,
    };
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    SuiteStats {
        tasks: n,
        correctness_pct: pct(correct, n),
        median_speedup: percentile(&values, 0.5).unwrap_or(0.0),
        p75_speedup: percentile(&values, 0.75).unwrap_or(0.0),
        mean_speedup: mean(&values).unwrap_or(0.0),
        fast1_pct: pct(faster, denom),
    }
}

pub fn summarize_scores(scores: &[TaskScore], fast1: Fast1Denominator) -> Result<SuiteSummary, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let mut levels: BTreeMap<u8, Vec<TaskScore>> = BTreeMap::new();
    for s in scores {
        levels.entry(s.level).or_default().push(*s);
    }
    Ok(SuiteSummary {
        overall: stats(scores, fast1),
        per_level: levels.into_iter().map(|(l, v)| (l, stats(&v, fast1))).collect(),
    })
}

pub fn summarize(results: &[WorkflowResult], fast1: Fast1Denominator) -> Result<SuiteSummary, EvalError> {
    let scores: Vec<TaskScore> = results.iter().map(TaskScore::from).collect();
    summarize_scores(&scores, fast1)
}

impl SuiteStats {
    /// `Correct | Median | 75% | Perf | Fast1` cells.
    pub fn table_row(&self) -> String {
        format!(
            "{:.1}% | {:.3} | {:.3} | {:.3} | {:.1}%",
            self.correctness_pct, self.median_speedup, self.p75_speedup, self.mean_speedup, self.fast1_pct
        )
    }
}

pub const SUITE_TABLE_HEADER: &str = "Method | Correct | Median | 75% | Perf | Fast1";

/// Overall row under `label`, then one row per level.
pub fn render_suite_table(label: &str, summary: &SuiteSummary) -> String {
    let mut out = String::from(SUITE_TABLE_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{label} | {}", summary.overall.table_row());
    for (level, s) in &summary.per_level {
        let _ = writeln!(out, "Level {level} | {}", s.table_row());
    }
    out
}

/// Spend and time of one ledger, in table units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub api_dollars: f64,
    pub minutes: f64,
    pub phase_minutes: BTreeMap<Phase, f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub fn report_cost(ledger: &CostLedger) -> CostReport {
    CostReport {
        api_dollars: ledger.api_dollars,
        minutes: ledger.total_seconds() / 60.0,
        phase_minutes: Phase::ALL.iter().map(|p| (*p, ledger.phase_seconds(*p) / 60.0)).collect(),
        prompt_tokens: ledger.prompt_tokens,
        completion_tokens: ledger.completion_tokens,
    }
}

impl CostReport {
    pub fn summary_line(&self) -> String {
        format!("API Cost ${:.2}, Time {:.1} min", self.api_dollars, self.minutes)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("Phase | Time (min) | API Cost ($)\n");
        for (phase, minutes) in &self.phase_minutes {
            let _ = writeln!(out, "{} | {:.1} |", phase.as_str(), minutes);
        }
        let _ = writeln!(out, "total | {:.1} | {:.2}", self.minutes, self.api_dollars);
        let _ = writeln!(out, "tokens | prompt {} | completion {}", self.prompt_tokens, self.completion_tokens);
        out
    }
}

type Column = fn(&CostReport) -> f64;

/// Per-task averages of spend and time, overall and by level.
pub fn render_cost_table(results: &[WorkflowResult]) -> String {
    let avg = |rs: &[&WorkflowResult], f: Column| -> Option<f64> {
        if rs.is_empty() {
            return None;
        }
        Some(rs.iter().map(|r| f(&report_cost(&r.cost))).sum::<f64>() / rs.len() as f64)
    };
    let all: Vec<&WorkflowResult> = results.iter().collect();
    let levels: Vec<Vec<&WorkflowResult>> =
        (1..=3u8).map(|l| results.iter().filter(|r| r.level == l).collect()).collect();
    let cell = |v: Option<f64>, prec: usize| match v {
        Some(v) => format!("{v:.prec$}"),
        None => String::from("---"),
    };
    let mut out = String::from("Metric | Average | Level 1 | Level 2 | Level 3\n");
    let rows: [(&str, Column, usize); 2] = [("API Cost ($)", |c| c.api_dollars, 2), ("Time (min)", |c| c.minutes, 1)];
    for (label, f, prec) in rows {
        let _ = write!(out, "{label} | {}", cell(avg(&all, f), prec));
        for l in &levels {
            let _ = write!(out, " | {}", cell(avg(l, f), prec));
        }
        out.push('\n');
    }
    out
}
