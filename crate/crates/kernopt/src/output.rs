//! Result files and the event log of a run directory.
//!
//! ```text
//! <out>/results/<task_id>.json   one pretty-printed WorkflowResult per task
//! <out>/events.jsonl             one WorkflowEvent per line
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use kernopt_core::workflow::{EventSink, WorkflowEvent};
use kernopt_core::WorkflowResult;

pub const RESULTS_DIR: &str = "results";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

pub fn result_path(out: &Path, task_id: &str) -> PathBuf {
    out.join(RESULTS_DIR).join(format!("{task_id}.json"))
}

/// Serialized form of a result, as written to disk.
pub fn result_json(result: &WorkflowResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("results serialize");
    s.push('\n');
    s
}

/// Writes the result file through a temporary name so a crash never leaves
/// a truncated file behind for `--resume` to trust.
pub fn write_result(out: &Path, result: &WorkflowResult) -> Result<PathBuf, OutputError> {
    let path = result_path(out, &result.task_id);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, result_json(result)).map_err(io(&tmp))?;
    fs::rename(&tmp, &path).map_err(io(&path))?;
    Ok(path)
}

/// Loads every result file under `dir`, ordered by task id.
pub fn load_results(dir: &Path) -> Result<Vec<WorkflowResult>, OutputError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir) {
        let entry = entry.map_err(|e| OutputError::Io { path: dir.to_path_buf(), source: e.into() })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|x| x == "json") {
            let text = fs::read_to_string(path).map_err(io(path))?;
            let r: WorkflowResult = serde_json::from_str(&text)
                .map_err(|source| OutputError::Parse { path: path.to_path_buf(), source })?;
            out.push(r);
        }
    }
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(out)
}

/// Appends events as JSON lines. Clones share the file.
#[derive(Debug, Clone)]
pub struct JsonlSink {
    writer: Arc<Mutex<BufWriter<File>>>,
}

impl JsonlSink {
    pub fn append(path: &Path) -> Result<Self, OutputError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
        Ok(Self { writer: Arc::new(Mutex::new(BufWriter::new(file))) })
    }

    pub fn flush(&self) {
        if let Ok(mut w) = self.writer.lock() {
            let _ = w.flush();
        }
    }
}

impl EventSink for JsonlSink {
    fn emit(&mut self, event: &WorkflowEvent) {
        log::debug!("{event:?}");
        let line = serde_json::to_string(event).expect("events serialize");
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(w, "{line}") {
            log::warn!("event log write failed: {e}");
        }
    }
}

impl Drop for JsonlSink {
    fn drop(&mut self) {
        if Arc::strong_count(&self.writer) == 1 {
            self.flush();
        }
    }
}
