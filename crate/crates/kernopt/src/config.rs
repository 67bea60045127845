//! TOML configuration file and its merge with command-line flags.
//!
//! Every run flag has a key of the same name (dashes become underscores);
//! backend and harness settings live in `[backend]` and `[harness]` tables.
//! A flag given on the command line always wins over the file. Relative
//! paths in the file are taken relative to the file's directory.
//!
//! ```toml
//! manifest = "suite/manifest.toml"
//! suite = "level1"
//! max_rounds = 10
//! gpu = "rtx6000-ada"
//! jobs = 2
//! out = "runs/o3"
//!
//! [timing]
//! warmup = 3
//! reps = 20
//!
//! [backend]
//! model = "o3"
//! prompt_per_1k = 0.002
//! completion_per_1k = 0.008
//!
//! [harness]
//! command = ["python3", "-m", "kernopt_harness"]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use kernopt_core::exec::Timing;
use kernopt_core::{MetricCatalog, PriceTable, WorkflowConfig};
use serde::Deserialize;

use crate::http::HttpSettings;
use crate::registry::{GpuRegistry, DEFAULT_GPU};

pub const MOCK_BACKEND: &str = "mock";
pub const DEFAULT_MANIFEST: &str = "suite.toml";
pub const DEFAULT_OUT: &str = "kernopt-out";

pub fn default_harness_command() -> Vec<String> {
    ["python3", "-m", "kernopt_harness"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub model: Option<String>,
    pub judge_model: Option<String>,
    pub mock: Option<PathBuf>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub prompt_per_1k: Option<f64>,
    pub completion_per_1k: Option<f64>,
    pub temperature: Option<f64>,
    pub request_timeout_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    pub command: Option<Vec<String>>,
    pub grace_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub task: Option<String>,
    pub suite: Option<String>,
    pub max_rounds: Option<u32>,
    pub tolerance: Option<f64>,
    pub gpu: Option<String>,
    pub gpu_registry: Option<PathBuf>,
    pub budget: Option<f64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub resume: Option<bool>,
    pub timeout_s: Option<f64>,
    pub metrics: Option<PathBuf>,
    pub self_refine: Option<bool>,
    pub timing: Option<Timing>,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub harness: HarnessSection,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.gpu_registry, &mut self.out, &mut self.metrics, &mut self.backend.mock]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Run flags as given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub task: Option<String>,
    pub suite: Option<String>,
    pub max_rounds: Option<u32>,
    pub tolerance: Option<f64>,
    pub gpu: Option<String>,
    pub backend: Option<String>,
    pub mock: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub budget: Option<f64>,
    pub out: Option<PathBuf>,
    pub resume: bool,
    pub metrics: Option<PathBuf>,
    pub self_refine: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Mock { dir: PathBuf, prices: PriceTable },
    Live { coder: HttpSettings, judge: HttpSettings },
}

/// Everything a run needs, after merging file and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub manifest: PathBuf,
    pub selector: String,
    pub workflow: WorkflowConfig,
    pub backend: BackendChoice,
    pub harness_command: Vec<String>,
    pub harness_grace_s: f64,
    pub jobs: usize,
    pub out: PathBuf,
    pub resume: bool,
    /// Explicit metric list, when one was configured.
    pub metrics: Option<MetricCatalog>,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Settings, ConfigError> {
    let err = |m: String| Err(ConfigError(m));

    let mut registry = GpuRegistry::builtin();
    if let Some(dir) = &file.gpu_registry {
        registry.load_dir(dir).map_err(|e| ConfigError(e.to_string()))?;
    }
    let gpu_key = pick(flags.gpu.clone(), file.gpu.clone()).unwrap_or_else(|| DEFAULT_GPU.into());
    let gpu = registry.get(&gpu_key).map_err(|e| ConfigError(e.to_string()))?.clone();

    let metrics = match pick(flags.metrics.clone(), file.metrics.clone()) {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            Some(MetricCatalog::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };

    let mut workflow = WorkflowConfig::new(gpu);
    if let Some(n) = pick(flags.max_rounds, file.max_rounds) {
        workflow.max_rounds = n;
    }
    if let Some(t) = pick(flags.tolerance, file.tolerance) {
        workflow.tolerance = t;
    }
    if let Some(t) = file.timing {
        workflow.timing = t;
    }
    if let Some(t) = file.timeout_s {
        workflow.timeout_s = t;
    }
    if let Some(m) = &metrics {
        workflow.metric_subset = m.clone();
    }
    workflow.budget_cap_dollars = pick(flags.budget, file.budget);
    if let Some(b) = workflow.budget_cap_dollars {
        if !(b.is_finite() && b >= 0.0) {
            return err(format!("budget must be a nonnegative amount, got {b}"));
        }
    }
    workflow.self_refine = flags.self_refine || file.self_refine.unwrap_or(false);
    workflow.validate().map_err(|e| ConfigError(e.to_string()))?;

    let b = &file.backend;
    let prices = PriceTable {
        prompt_per_1k: b.prompt_per_1k.unwrap_or(0.0),
        completion_per_1k: b.completion_per_1k.unwrap_or(0.0),
    };
    let model = pick(flags.backend.clone(), b.model.clone());
    let mock = pick(flags.mock.clone(), b.mock.clone());
    let backend = match (model.as_deref(), mock) {
        (None | Some(MOCK_BACKEND), Some(dir)) => BackendChoice::Mock { dir, prices },
        (Some(MOCK_BACKEND), None) => return err("the mock backend needs a transcript directory (--mock DIR)".into()),
        (Some(model), Some(_)) => {
            return err(format!("both a live model ({model}) and a mock transcript were given; pick one"))
        }
        (Some(model), None) => {
            let settings = |m: &str| {
                let mut s = HttpSettings::new(m);
                if let Some(u) = &b.base_url {
                    s.base_url = u.clone();
                }
                if let Some(k) = &b.api_key_env {
                    s.api_key_env = k.clone();
                }
                if let Some(t) = b.request_timeout_s {
                    s.timeout_s = t;
                }
                s.prices = prices;
                s.temperature = b.temperature;
                s
            };
            BackendChoice::Live { coder: settings(model), judge: settings(b.judge_model.as_deref().unwrap_or(model)) }
        }
        (None, None) => return err("no backend configured: pass --backend MODEL or --mock DIR".into()),
    };

    let selector = [&flags.task, &flags.suite, &file.task, &file.suite]
        .into_iter()
        .find_map(Clone::clone)
        .unwrap_or_else(|| "all".into());

    let jobs = pick(flags.jobs, file.jobs).unwrap_or(1);
    if jobs == 0 {
        return err("jobs must be at least 1".into());
    }
    Ok(Settings {
        manifest: pick(flags.manifest.clone(), file.manifest.clone()).unwrap_or_else(|| DEFAULT_MANIFEST.into()),
        selector,
        workflow,
        backend,
        harness_command: file.harness.command.clone().unwrap_or_else(default_harness_command),
        harness_grace_s: file.harness.grace_s.unwrap_or(5.0),
        jobs,
        out: pick(flags.out.clone(), file.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
        resume: flags.resume || file.resume.unwrap_or(false),
        metrics,
    })
}
