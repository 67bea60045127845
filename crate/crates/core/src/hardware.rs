//! Profiler metric catalog, subset filtering and Judge-facing formatting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{GpuSpec, MetricValue, NcuProfile};

/// The shipped 24-metric key subset, one name per line.
pub const KEY_METRICS_ASSET: &str = include_str!("../assets/key_metrics.txt");

/// Ordered, duplicate-free list of profiler metric names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCatalog {
    names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("metric `{0}` is listed twice")]
    Duplicate(String),
    #[error("catalog is empty")]
    Empty,
}

impl MetricCatalog {
    pub fn new(names: Vec<String>) -> Result<Self, CatalogError> {
        if names.is_empty() {
            return Err(CatalogError::Empty);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(CatalogError::Duplicate(n.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Parses one name per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(ToString::to_string)
            .collect();
        Self::new(names)
    }

    pub fn key_subset() -> Self {
        Self::parse(KEY_METRICS_ASSET).expect("shipped catalog is valid")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.names {
            s.push_str(n);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilerRow {
    pub metric_name: String,
    #[serde(default)]
    pub unit: String,
    pub value: f64,
}

/// Metric rows of one profiled kernel launch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfilerExport {
    #[serde(default)]
    pub kernel_id: String,
    pub rows: Vec<ProfilerRow>,
}

impl ProfilerExport {
    pub fn get(&self, name: &str) -> Option<&ProfilerRow> {
        self.rows.iter().find(|r| r.metric_name == name)
    }
}

impl NcuProfile {
    pub fn to_export(&self) -> ProfilerExport {
        ProfilerExport {
            kernel_id: self.kernel_id.clone(),
            rows: self
                .metrics
                .iter()
                .map(|m| ProfilerRow {
                    metric_name: m.name.clone(),
                    unit: m.unit.clone().unwrap_or_default(),
                    value: m.value,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredProfile {
    pub profile: NcuProfile,
    /// Catalog metrics absent from the export.
    pub missing: Vec<String>,
}

/// Keeps only catalog metrics, in catalog order.
pub fn filter_to_subset(export: &ProfilerExport, catalog: &MetricCatalog) -> FilteredProfile {
    let mut metrics = Vec::new();
    let mut missing = Vec::new();
    for name in catalog.names() {
        match export.get(name) {
            Some(row) => metrics.push(MetricValue {
                name: name.clone(),
                value: row.value,
                unit: (!row.unit.is_empty()).then(|| row.unit.clone()),
            }),
            None => missing.push(name.clone()),
        }
    }
    FilteredProfile { profile: NcuProfile { kernel_id: export.kernel_id.clone(), metrics }, missing }
}

/// Text blocks substituted into the optimization prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareFeedback {
    pub gpu_name: String,
    pub gpu_arch: String,
    pub gpu_items: String,
    pub ncu_metrics: String,
}

fn with_unit(mut line: String, unit: &str) -> String {
    if !unit.is_empty() {
        line.push(' ');
        line.push_str(unit);
    }
    line
}

/// `key: value unit` per GPU detail.
pub fn format_gpu_items(gpu: &GpuSpec) -> String {
    gpu.details.iter().map(|d| with_unit(format!("{}: {}", d.name, d.value), &d.unit)).collect::<Vec<_>>().join("\n")
}

/// `name = value unit` per metric. Values print at full round-trip precision.
pub fn format_metrics(profile: &NcuProfile) -> String {
    let mut out = String::new();
    for (i, m) in profile.metrics.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{} = {}", m.name, m.value);
        if let Some(u) = m.unit.as_deref().filter(|u| !u.is_empty()) {
            out.push(' ');
            out.push_str(u);
        }
    }
    out
}

pub fn format_hardware_feedback(gpu: &GpuSpec, profile: &NcuProfile) -> HardwareFeedback {
    HardwareFeedback {
        gpu_name: gpu.name.clone(),
        gpu_arch: gpu.architecture.clone(),
        gpu_items: format_gpu_items(gpu),
        ncu_metrics: format_metrics(profile),
    }
}
