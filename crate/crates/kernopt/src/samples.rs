//! On-disk layout of profiled kernel samples used for metric mining.
//!
//! ```text
//! <dir>/<task_id>/runtimes.csv        kernel_id,runtime_ms
//! <dir>/<task_id>/<kernel_id>.ncu.csv one profiler export per kernel
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use kernopt_core::miner::KernelSample;
use serde::{Deserialize, Serialize};

use crate::profiler_csv::{parse_profiler_csv, write_profiler_csv, CsvError};

pub const RUNTIMES_FILE: &str = "runtimes.csv";

#[derive(Debug, thiserror::Error)]
pub enum SamplesError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Runtimes { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Profile { path: PathBuf, source: CsvError },
    #[error("no {RUNTIMES_FILE} found under {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Serialize, Deserialize)]
struct RuntimeRow {
    kernel_id: String,
    runtime_ms: f64,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SamplesError + '_ {
    move |source| SamplesError::Io { path: path.to_path_buf(), source }
}

fn task_id(dir: &Path, task_dir: &Path) -> String {
    task_dir
        .strip_prefix(dir)
        .unwrap_or(task_dir)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn load_task(dir: &Path, runtimes: &Path) -> Result<Vec<KernelSample>, SamplesError> {
    let task_dir = runtimes.parent().unwrap_or(dir);
    let task = task_id(dir, task_dir);
    let mut rdr = csv::Reader::from_path(runtimes)
        .map_err(|source| SamplesError::Runtimes { path: runtimes.to_path_buf(), source })?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<RuntimeRow>() {
        let row = row.map_err(|source| SamplesError::Runtimes { path: runtimes.to_path_buf(), source })?;
        let path = task_dir.join(format!("{}.ncu.csv", row.kernel_id));
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let mut profile =
            parse_profiler_csv(&text).map_err(|source| SamplesError::Profile { path: path.clone(), source })?;
        profile.kernel_id = row.kernel_id.clone();
        out.push(KernelSample { task_id: task.clone(), kernel_id: row.kernel_id, runtime_ms: row.runtime_ms, profile });
    }
    Ok(out)
}

/// Loads every task directory under `dir`, in path order.
pub fn load_samples(dir: &Path) -> Result<Vec<KernelSample>, SamplesError> {
    let mut out = Vec::new();
    let mut found = false;
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| SamplesError::Io { path: dir.to_path_buf(), source: e.into() })?;
        if entry.file_type().is_file() && entry.file_name() == RUNTIMES_FILE {
            found = true;
            out.extend(load_task(dir, entry.path())?);
        }
    }
    if !found {
        return Err(SamplesError::Empty(dir.to_path_buf()));
    }
    Ok(out)
}

/// Writes one task's samples, replacing its runtimes file.
pub fn write_task_samples(dir: &Path, task_id: &str, samples: &[KernelSample]) -> Result<(), SamplesError> {
    let task_dir = dir.join(task_id);
    fs::create_dir_all(&task_dir).map_err(io(&task_dir))?;
    let runtimes = task_dir.join(RUNTIMES_FILE);
    let mut w = csv::Writer::from_path(&runtimes)
        .map_err(|source| SamplesError::Runtimes { path: runtimes.clone(), source })?;
    for s in samples {
        w.serialize(RuntimeRow { kernel_id: s.kernel_id.clone(), runtime_ms: s.runtime_ms })
            .map_err(|source| SamplesError::Runtimes { path: runtimes.clone(), source })?;
        let path = task_dir.join(format!("{}.ncu.csv", s.kernel_id));
        fs::write(&path, write_profiler_csv(&s.profile)).map_err(io(&path))?;
    }
    w.flush().map_err(io(&runtimes))?;
    Ok(())
}
