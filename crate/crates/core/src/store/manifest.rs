use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{read_labels, read_matrix};
use super::{check_disjoint, ClassId, PhaseDataset};
use crate::error::{DsalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest row. Paths are relative to the manifest's directory unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    pub classes: Vec<ClassId>,
}

/// JSON control file listing the phases of one split.
///
/// ```json
/// {
///   "split": "train",
///   "base_phase_index": 0,
///   "phases": [
///     { "embeddings": "phase_000.train.emb", "labels": "phase_000.train.lbl", "classes": [0, 1] }
///   ]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseManifest {
    pub split: Split,
    #[serde(default)]
    pub base_phase_index: usize,
    pub phases: Vec<PhaseEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl PhaseManifest {
    pub fn new(split: Split, phases: Vec<PhaseEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        let m = PhaseManifest {
            split,
            base_phase_index: 0,
            phases,
            root: root.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(DsalError::Manifest("no phases".into()));
        }
        if self.base_phase_index != 0 {
            return Err(DsalError::Manifest(format!(
                "base_phase_index must be 0, got {}",
                self.base_phase_index
            )));
        }
        check_disjoint(self.phases.iter().map(|p| p.classes.as_slice()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DsalError::io(path, e))?;
        let mut m: PhaseManifest = serde_json::from_str(&text)
            .map_err(|e| DsalError::format(path, format!("manifest JSON: {e}")))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| DsalError::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Directory that relative entry paths resolve against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Loads and validates phase `k`.
    pub fn load_phase(&self, k: usize) -> Result<PhaseDataset> {
        let entry = self.phases.get(k).ok_or_else(|| {
            DsalError::Manifest(format!("phase {k} out of range (manifest has {})", self.len()))
        })?;
        let emb_path = self.resolve(&entry.embeddings);
        let embeddings = read_matrix(&emb_path)?;
        let labels = read_labels(&self.resolve(&entry.labels))?;
        if embeddings.nrows() != labels.len() {
            return Err(DsalError::dim(format!(
                "{}: {} rows but label file has {}",
                emb_path.display(),
                embeddings.nrows(),
                labels.len()
            )));
        }
        PhaseDataset::new(k, embeddings, labels, entry.classes.clone())
    }

    pub fn load_all(&self) -> Result<Vec<PhaseDataset>> {
        (0..self.len()).map(|k| self.load_phase(k)).collect()
    }
}
