//! API spend and wall-clock accounting.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Generate,
    Judge,
    Compile,
    Execute,
    Profile,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Generate, Phase::Judge, Phase::Compile, Phase::Execute, Phase::Profile];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Generate => "generate",
            Phase::Judge => "judge",
            Phase::Compile => "compile",
            Phase::Execute => "execute",
            Phase::Profile => "profile",
        }
    }
}

/// A single accounted event: one model call or one harness invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub phase: Phase,
    #[serde(default)]
    pub dollars: f64,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    pub seconds: f64,
}

/// Per-call entries plus running totals. Totals always equal the entry sums.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub api_dollars: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_clock_s: BTreeMap<Phase, f64>,
    #[serde(default)]
    pub entries: Vec<CostEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Negative or non-finite amounts are clamped to zero.
    pub fn record(&mut self, mut entry: CostEntry) {
        let clean = |v: f64| if v.is_finite() && v > 0.0 { v } else { 0.0 };
        entry.dollars = clean(entry.dollars);
        entry.seconds = clean(entry.seconds);
        self.api_dollars += entry.dollars;
        self.prompt_tokens += entry.prompt_tokens;
        self.completion_tokens += entry.completion_tokens;
        *self.wall_clock_s.entry(entry.phase).or_insert(0.0) += entry.seconds;
        self.entries.push(entry);
    }

    pub fn record_time(&mut self, phase: Phase, seconds: f64) {
        self.record(CostEntry { phase, dollars: 0.0, prompt_tokens: 0, completion_tokens: 0, seconds });
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for e in &other.entries {
            self.record(e.clone());
        }
    }

    pub fn phase_seconds(&self, phase: Phase) -> f64 {
        self.wall_clock_s.get(&phase).copied().unwrap_or(0.0)
    }

    pub fn total_seconds(&self) -> f64 {
        self.wall_clock_s.values().fold(0.0, |a, b| a + b)
    }

    /// True when the cached totals agree with the entries (1e-9 relative).
    pub fn is_consistent(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        let dollars: f64 = self.entries.iter().map(|e| e.dollars).sum();
        let prompt: u64 = self.entries.iter().map(|e| e.prompt_tokens).sum();
        let completion: u64 = self.entries.iter().map(|e| e.completion_tokens).sum();
        let phases_ok = Phase::ALL.iter().all(|&p| {
            let s: f64 = self.entries.iter().filter(|e| e.phase == p).map(|e| e.seconds).sum();
            close(s, self.phase_seconds(p))
        });
        close(dollars, self.api_dollars)
            && prompt == self.prompt_tokens
            && completion == self.completion_tokens
            && phases_ok
            && self.entries.iter().all(|e| e.dollars >= 0.0 && e.seconds >= 0.0)
    }
}

/// Dollar prices per thousand tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl PriceTable {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 * self.prompt_per_1k / 1000.0 + completion_tokens as f64 * self.completion_per_1k / 1000.0
    }
}
