//! Deterministic Gaussian-cluster data for desk-scale runs and tests.
//!
//! Every class gets a center drawn from `N(0, center_scale^2 I)`; its samples
//! are `center + spread * N(0, I)`. All draws come from one ChaCha stream in a
//! fixed order (centers, then train samples, then test samples, class by
//! class), so the samples do not depend on how classes are split into phases.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::format::{write_labels, write_matrix, Precision};
use super::{ClassId, PhaseDataset, PhaseEntry, PhaseManifest, Split};
use crate::error::{DsalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub center_scale: f64,
    /// Incremental phases after the base phase.
    pub phases: usize,
    /// Classes in the base phase; `None` means half of them, rounded down.
    pub base_classes: Option<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 20,
            per_class: 30,
            test_per_class: 30,
            dim: 16,
            spread: 0.2,
            center_scale: 1.0,
            phases: 5,
            base_classes: None,
            seed: 0,
        }
    }
}

/// Splits `classes` class ids into a base phase followed by `phases` equal
/// incremental phases.
pub fn phase_plan(classes: usize, phases: usize, base_classes: Option<usize>) -> Result<Vec<Vec<ClassId>>> {
    if classes == 0 {
        return Err(DsalError::Config("class count must be positive".into()));
    }
    let ids: Vec<ClassId> = (0..classes as ClassId).collect();
    if phases == 0 {
        return Ok(vec![ids]);
    }
    let base = base_classes.unwrap_or(classes / 2);
    if base == 0 || base >= classes {
        return Err(DsalError::Config(format!(
            "base phase must hold between 1 and {} classes, got {base}",
            classes - 1
        )));
    }
    let rest = classes - base;
    if !rest.is_multiple_of(phases) {
        return Err(DsalError::Config(format!(
            "{rest} incremental classes cannot be split evenly over {phases} phases"
        )));
    }
    let step = rest / phases;
    let mut plan = vec![ids[..base].to_vec()];
    plan.extend(ids[base..].chunks(step).map(<[ClassId]>::to_vec));
    Ok(plan)
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub train: Vec<PhaseDataset>,
    pub test: Vec<PhaseDataset>,
}

impl SyntheticTask {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(DsalError::Config("dimension must be positive".into()));
        }
        if !(spec.spread >= 0.0 && spec.spread.is_finite()) || !spec.center_scale.is_finite() {
            return Err(DsalError::Config("spread and center scale must be finite, spread >= 0".into()));
        }
        let plan = phase_plan(spec.classes, spec.phases, spec.base_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let centers = DMatrix::from_fn(spec.classes, spec.dim, |_, _| {
            spec.center_scale * rng.sample::<f64, _>(StandardNormal)
        });
        let mut draw = |n: usize| -> Vec<DMatrix<f64>> {
            (0..spec.classes)
                .map(|c| {
                    DMatrix::from_fn(n, spec.dim, |_, j| {
                        centers[(c, j)] + spec.spread * rng.sample::<f64, _>(StandardNormal)
                    })
                })
                .collect()
        };
        let train_samples = draw(spec.per_class);
        let test_samples = draw(spec.test_per_class);
        let assemble = |samples: &[DMatrix<f64>], n: usize| -> Result<Vec<PhaseDataset>> {
            plan.iter()
                .enumerate()
                .map(|(k, classes)| {
                    let mut x = DMatrix::zeros(classes.len() * n, spec.dim);
                    let mut labels = Vec::with_capacity(classes.len() * n);
                    for (slot, &c) in classes.iter().enumerate() {
                        x.rows_mut(slot * n, n).copy_from(&samples[c as usize]);
                        labels.extend(std::iter::repeat_n(c, n));
                    }
                    // Round through f32 so in-memory data equals what the files hold.
                    x.apply(|v| *v = *v as f32 as f64);
                    PhaseDataset::new(k, x, labels, classes.clone())
                })
                .collect()
        };
        Ok(SyntheticTask {
            train: assemble(&train_samples, spec.per_class)?,
            test: assemble(&test_samples, spec.test_per_class)?,
        })
    }

    /// Writes both splits plus `train.json` / `test.json` manifests into `dir`.
    /// Returns the manifest paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| DsalError::io(dir, e))?;
        let train = write_split(dir, Split::Train, &self.train)?;
        let test = write_split(dir, Split::Test, &self.test)?;
        Ok((train, test))
    }
}

fn write_split(dir: &Path, split: Split, phases: &[PhaseDataset]) -> Result<PathBuf> {
    let tag = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let mut entries = Vec::with_capacity(phases.len());
    for p in phases {
        let emb = PathBuf::from(format!("phase_{:03}.{tag}.emb", p.phase_index));
        let lbl = PathBuf::from(format!("phase_{:03}.{tag}.lbl", p.phase_index));
        write_matrix(&dir.join(&emb), &p.embeddings, Precision::F32)?;
        write_labels(&dir.join(&lbl), &p.labels)?;
        entries.push(PhaseEntry {
            embeddings: emb,
            labels: lbl,
            classes: p.classes.clone(),
        });
    }
    let manifest = PhaseManifest::new(split, entries, dir)?;
    let path = dir.join(format!("{tag}.json"));
    manifest.save(&path)?;
    Ok(path)
}

/// Generates a task and writes it under `dir`; returns `(train, test)`
/// manifest paths.
pub fn generate_synthetic(spec: &SynthSpec, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    SyntheticTask::generate(spec)?.write(dir)
}
