use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub mesh: PathBuf,
    /// Per-face or per-vertex class ids. Defaults to labels stored in the mesh.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_category")]
    pub category: String,
    /// Detection record used when the replay detector is selected.
    #[serde(default)]
    pub detections: Option<PathBuf>,
}

fn default_category() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartEntry {
    pub class_id: i32,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub shapes: Vec<ShapeEntry>,
    pub parts: Vec<PartEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| EvalError::Manifest(e.to_string()))?;
        let mut ids: Vec<i32> = m.parts.iter().map(|p| p.class_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::Manifest("duplicate class_id".into()));
        }
        if m.parts.iter().any(|p| p.prompt.trim().is_empty()) {
            return Err(EvalError::Manifest("empty prompt".into()));
        }
        Ok(m)
    }

    /// Reads a manifest; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut m.shapes {
            s.mesh = base.join(&s.mesh);
            s.labels = s.labels.as_ref().map(|p| base.join(p));
            s.detections = s.detections.as_ref().map(|p| base.join(p));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Label file: a JSON integer array, or integers separated by whitespace.
pub fn load_labels(path: &Path) -> Result<Vec<i32>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: String| EvalError::Labels {
        path: path.to_path_buf(),
        reason,
    };
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| bad(e.to_string()));
    }
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| tok.parse().map_err(|_| bad(format!("entry {i}: {tok:?} is not an integer"))))
        .collect()
}
