//! Suite manifests and task files.
//!
//! A manifest lists task files relative to itself:
//!
//! ```toml
//! tasks = ["level1/95_cross_entropy.toml", "level2/17_conv_relu.toml"]
//! ```
//!
//! Each task file carries `id`, `level`, `description`, either
//! `reference_source` or `reference_file` (relative to the task file),
//! `[[inputs]]` tables and an optional `init_spec` array.

use std::fs;
use std::path::{Path, PathBuf};

use kernopt_core::domain::{validate_suite, InputSpec, RawTask, TaskError};
use kernopt_core::Task;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Task { path: PathBuf, source: TaskError },
    #[error(transparent)]
    Suite(#[from] TaskError),
    #[error("selector `{0}` matches no task")]
    NoMatch(String),
}

#[derive(Debug, Deserialize)]
struct Manifest {
    tasks: Vec<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    id: Option<String>,
    level: Option<i64>,
    description: Option<String>,
    reference_source: Option<String>,
    reference_file: Option<PathBuf>,
    #[serde(default)]
    inputs: Vec<InputSpec>,
    #[serde(default)]
    init_spec: Vec<toml::Value>,
}

fn read(path: &Path) -> Result<String, SuiteError> {
    fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.to_path_buf(), source })
}

fn parse_err(path: &Path, e: impl ToString) -> SuiteError {
    SuiteError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

pub fn load_task_file(path: &Path) -> Result<RawTask, SuiteError> {
    let file: TaskFile = toml::from_str(&read(path)?).map_err(|e| parse_err(path, e))?;
    let reference_source = match (file.reference_source, file.reference_file) {
        (Some(s), None) => Some(s),
        (None, Some(rel)) => Some(read(&path.parent().unwrap_or(Path::new(".")).join(rel))?),
        (None, None) => None,
        (Some(_), Some(_)) => return Err(parse_err(path, "set only one of reference_source and reference_file")),
    };
    let init_spec = file
        .init_spec
        .into_iter()
        .map(serde_json::to_value)
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(path, e))?;
    Ok(RawTask {
        id: file.id,
        level: file.level,
        description: file.description,
        reference_source,
        input_spec: file.inputs,
        init_spec,
    })
}

/// Loads and validates every task listed in a manifest.
pub fn load_suite(manifest: &Path) -> Result<Vec<Task>, SuiteError> {
    let m: Manifest = toml::from_str(&read(manifest)?).map_err(|e| parse_err(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut raws = Vec::with_capacity(m.tasks.len());
    for rel in &m.tasks {
        let path = base.join(rel);
        let raw = load_task_file(&path)?;
        kernopt_core::domain::validate_task(raw.clone()).map_err(|source| SuiteError::Task { path, source })?;
        raws.push(raw);
    }
    Ok(validate_suite(raws)?)
}

/// `all`, `levelN`, or one task id.
pub fn select<'a>(tasks: &'a [Task], selector: &str) -> Result<Vec<&'a Task>, SuiteError> {
    let picked: Vec<&Task> = match selector {
        "all" => tasks.iter().collect(),
        s => match s.strip_prefix("level").and_then(|n| n.parse::<u8>().ok()) {
            Some(level) => tasks.iter().filter(|t| t.level == level).collect(),
            None => tasks.iter().filter(|t| t.id == s).collect(),
        },
    };
    if picked.is_empty() {
        return Err(SuiteError::NoMatch(selector.to_string()));
    }
    Ok(picked)
}
