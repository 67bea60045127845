//! GPU spec registry: one TOML file per device, keyed by file stem.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kernopt_core::GpuSpec;

pub const DEFAULT_GPU: &str = "rtx6000-ada";

const BUILTIN: &[(&str, &str)] = &[
    ("a100-80gb", include_str!("../assets/gpus/a100-80gb.toml")),
    ("h200", include_str!("../assets/gpus/h200.toml")),
    ("quadro-rtx6000", include_str!("../assets/gpus/quadro-rtx6000.toml")),
    ("rtx3090", include_str!("../assets/gpus/rtx3090.toml")),
    ("rtx4090", include_str!("../assets/gpus/rtx4090.toml")),
    ("rtx6000-ada", include_str!("../assets/gpus/rtx6000-ada.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("gpu spec `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown gpu `{0}` (known: {1})")]
    Unknown(String, String),
}

#[derive(Debug, Clone, Default)]
pub struct GpuRegistry {
    specs: BTreeMap<String, GpuSpec>,
}

fn parse(key: &str, text: &str) -> Result<GpuSpec, RegistryError> {
    let invalid = |message: String| RegistryError::Invalid { key: key.to_string(), message };
    let spec: GpuSpec = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    spec.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(spec)
}

impl GpuRegistry {
    pub fn builtin() -> Self {
        let specs =
            BUILTIN.iter().map(|(k, t)| (k.to_string(), parse(k, t).expect("shipped gpu specs are valid"))).collect();
        Self { specs }
    }

    /// Adds every `*.toml` in `dir`, replacing built-in entries of the same key.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), RegistryError> {
        let io = |source| RegistryError::Io { path: dir.to_path_buf(), source };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let key = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(&path).map_err(|source| RegistryError::Io { path: path.clone(), source })?;
            let spec = parse(&key, &text)?;
            self.specs.insert(key, spec);
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&GpuSpec, RegistryError> {
        self.specs
            .get(key)
            .ok_or_else(|| RegistryError::Unknown(key.to_string(), self.keys().collect::<Vec<_>>().join(", ")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}
