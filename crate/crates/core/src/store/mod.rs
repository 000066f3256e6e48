//! On-disk embedding store: binary matrix/label files, JSON phase manifests,
//! validated phase datasets and the synthetic data generator.

pub mod format;
mod manifest;
pub mod synth;

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{DsalError, Result};

pub use manifest::{PhaseEntry, PhaseManifest, Split};

/// Global class identifier as stored in label files.
pub type ClassId = u32;

/// One phase of data: embeddings, per-row labels and the declared class set.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDataset {
    pub phase_index: usize,
    /// `N_k x d_cnn`, promoted to `f64`.
    pub embeddings: DMatrix<f64>,
    pub labels: Vec<ClassId>,
    /// Classes introduced by this phase, in column order.
    pub classes: Vec<ClassId>,
}

impl PhaseDataset {
    /// Builds a dataset and checks every invariant that does not need the
    /// other phases.
    pub fn new(
        phase_index: usize,
        embeddings: DMatrix<f64>,
        labels: Vec<ClassId>,
        classes: Vec<ClassId>,
    ) -> Result<Self> {
        if embeddings.nrows() != labels.len() {
            return Err(DsalError::dim(format!(
                "phase {phase_index}: {} embedding rows but {} labels",
                embeddings.nrows(),
                labels.len()
            )));
        }
        if embeddings.ncols() == 0 {
            return Err(DsalError::dim(format!(
                "phase {phase_index}: embeddings have zero columns"
            )));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(DsalError::NonFinite("embeddings"));
        }
        let mut declared = HashSet::with_capacity(classes.len());
        for &c in &classes {
            if !declared.insert(c) {
                return Err(DsalError::ClassOverlap(c));
            }
        }
        if let Some(&bad) = labels.iter().find(|l| !declared.contains(l)) {
            return Err(DsalError::UnknownLabel(bad));
        }
        Ok(PhaseDataset {
            phase_index,
            embeddings,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Stacks several phases into one dataset (used for joint fits and
    /// cumulative test sets). The result's class set is the union in order.
    pub fn concat<'a>(phases: impl IntoIterator<Item = &'a PhaseDataset>) -> Result<PhaseDataset> {
        let phases: Vec<&PhaseDataset> = phases.into_iter().collect();
        let first = phases
            .first()
            .ok_or_else(|| DsalError::Manifest("no phases to concatenate".into()))?;
        let dim = first.dim();
        let rows: usize = phases.iter().map(|p| p.len()).sum();
        let mut embeddings = DMatrix::zeros(rows, dim);
        let mut labels = Vec::with_capacity(rows);
        let mut classes = Vec::new();
        let mut at = 0;
        for p in &phases {
            if p.dim() != dim {
                return Err(DsalError::dim(format!(
                    "phase {} has {} columns, expected {dim}",
                    p.phase_index,
                    p.dim()
                )));
            }
            embeddings.rows_mut(at, p.len()).copy_from(&p.embeddings);
            at += p.len();
            labels.extend_from_slice(&p.labels);
            classes.extend_from_slice(&p.classes);
        }
        PhaseDataset::new(first.phase_index, embeddings, labels, classes)
    }
}

/// Checks that no class is declared by more than one phase.
pub fn check_disjoint<'a>(class_sets: impl IntoIterator<Item = &'a [ClassId]>) -> Result<()> {
    let mut seen = HashSet::new();
    for set in class_sets {
        for &c in set {
            if !seen.insert(c) {
                return Err(DsalError::ClassOverlap(c));
            }
        }
    }
    Ok(())
}

/// One-hot label matrix `N x |layout|`; row `i` has a single 1.0 in the
/// column holding `labels[i]`.
pub fn one_hot(labels: &[ClassId], layout: &[ClassId]) -> Result<DMatrix<f64>> {
    let index: std::collections::HashMap<ClassId, usize> =
        layout.iter().enumerate().map(|(j, &c)| (c, j)).collect();
    let mut y = DMatrix::zeros(labels.len(), layout.len());
    for (i, l) in labels.iter().enumerate() {
        let j = *index.get(l).ok_or(DsalError::UnknownLabel(*l))?;
        y[(i, j)] = 1.0;
    }
    Ok(y)
}
