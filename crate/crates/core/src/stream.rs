//! Concatenated recursive least squares.
//!
//! A [`StreamState`] holds a ridge classifier `W` (`d_B x C`) together with
//! its inverted auto-correlation matrix `R = (X^T X + gamma I)^-1` over every
//! row seen so far. New classes append zero columns to `W`; new rows update
//! `R` by the Woodbury identity and then correct `W` with the updated `R`:
//!
//! ```text
//! R_k = R - R X^T (I + X R X^T)^-1 X R
//! W_k = [W 0] + R_k X^T (Y - X [W 0])
//! ```
//!
//! The result equals the ridge solution over the concatenation of all phases
//! with block-diagonal labels, no matter how the rows were split.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{DsalError, Result};
use crate::linalg::symmetrize;
use crate::store::ClassId;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    weights: DMatrix<f64>,
    iacm: DMatrix<f64>,
    layout: Vec<ClassId>,
    gamma: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(DsalError::Config(format!("gamma must be positive and finite, got {gamma}")))
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DsalError::NonFinite(what))
    }
}

fn spd_factor(mut a: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    symmetrize(&mut a);
    Cholesky::new(a).ok_or(DsalError::Factorization(what))
}

impl StreamState {
    /// A stream that has seen no rows and no classes: `W` is `d_B x 0` and
    /// `R = I / gamma`.
    pub fn empty(d_b: usize, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(StreamState {
            weights: DMatrix::zeros(d_b, 0),
            iacm: DMatrix::identity(d_b, d_b) / gamma,
            layout: Vec::new(),
            gamma,
        })
    }

    /// Ridge fit `W = (X^T X + gamma I)^-1 X^T Y`, keeping the inverse as `R`.
    ///
    /// `layout` names the columns of `targets`. Targets need not be one-hot
    /// (the compensation stream fits residues).
    pub fn fit_base(
        activations: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        layout: Vec<ClassId>,
        gamma: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if activations.nrows() != targets.nrows() {
            return Err(DsalError::dim(format!(
                "{} activation rows but {} target rows",
                activations.nrows(),
                targets.nrows()
            )));
        }
        if targets.ncols() != layout.len() {
            return Err(DsalError::dim(format!(
                "{} target columns but layout has {} classes",
                targets.ncols(),
                layout.len()
            )));
        }
        if activations.ncols() == 0 {
            return Err(DsalError::dim("activations have zero columns"));
        }
        check_duplicates(&layout, &[])?;
        check_finite(activations, "activations")?;
        check_finite(targets, "targets")?;

        let d = activations.ncols();
        let mut gram = activations.tr_mul(activations);
        for i in 0..d {
            gram[(i, i)] += gamma;
        }
        let chol = spd_factor(gram, "regularized Gram matrix")?;
        let weights = chol.solve(&activations.tr_mul(targets));
        let mut iacm = chol.inverse();
        symmetrize(&mut iacm);
        Ok(StreamState {
            weights,
            iacm,
            layout,
            gamma,
        })
    }

    /// Reassembles a state from stored parts, checking shapes and symmetry.
    pub fn from_parts(
        weights: DMatrix<f64>,
        iacm: DMatrix<f64>,
        layout: Vec<ClassId>,
        gamma: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        let d = iacm.nrows();
        if iacm.ncols() != d || weights.nrows() != d || weights.ncols() != layout.len() {
            return Err(DsalError::dim(format!(
                "weights {:?}, iacm {:?}, layout of {}",
                weights.shape(),
                iacm.shape(),
                layout.len()
            )));
        }
        check_finite(&weights, "weights")?;
        check_finite(&iacm, "iacm")?;
        check_duplicates(&layout, &[])?;
        if crate::linalg::asymmetry(&iacm) > 1e-8 {
            return Err(DsalError::Factorization("stored iacm is not symmetric"));
        }
        Ok(StreamState {
            weights,
            iacm,
            layout,
            gamma,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn iacm(&self) -> &DMatrix<f64> {
        &self.iacm
    }

    pub fn layout(&self) -> &[ClassId] {
        &self.layout
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.iacm.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layout.len()
    }

    /// Appends one zero weight column per new class. `R` is untouched.
    pub fn expand_classes(&mut self, new_classes: &[ClassId]) -> Result<()> {
        if new_classes.is_empty() {
            return Ok(());
        }
        check_duplicates(&self.layout, new_classes)?;
        let old = self.weights.ncols();
        let weights = std::mem::replace(&mut self.weights, DMatrix::zeros(0, 0));
        self.weights = weights.resize_horizontally(old + new_classes.len(), 0.0);
        self.layout.extend_from_slice(new_classes);
        Ok(())
    }

    /// One recursive step over the rows of `activations`.
    ///
    /// `targets` must already be laid out in the current columns (i.e. call
    /// [`expand_classes`](Self::expand_classes) first). On error the state is
    /// left as it was.
    pub fn rls_update(&mut self, activations: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
        self.check_update(activations, targets)?;
        if activations.nrows() == 0 {
            return Ok(());
        }
        let (iacm, weights) = self.step(activations, targets)?;
        self.iacm = iacm;
        self.weights = weights;
        Ok(())
    }

    /// Same as [`rls_update`](Self::rls_update) but feeds at most
    /// `chunk_rows` rows per recursive step, bounding the inner
    /// `N x N` system.
    pub fn rls_update_chunked(
        &mut self,
        activations: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        chunk_rows: usize,
    ) -> Result<()> {
        if chunk_rows == 0 {
            return Err(DsalError::Config("chunk_rows must be at least 1".into()));
        }
        let n = activations.nrows();
        if chunk_rows >= n {
            return self.rls_update(activations, targets);
        }
        self.check_update(activations, targets)?;
        let mut iacm = self.iacm.clone();
        let mut weights = self.weights.clone();
        let mut start = 0;
        while start < n {
            let len = chunk_rows.min(n - start);
            let x = activations.rows(start, len).clone_owned();
            let y = targets.rows(start, len).clone_owned();
            (iacm, weights) = step(&iacm, &weights, &x, &y)?;
            start += len;
        }
        self.iacm = iacm;
        self.weights = weights;
        Ok(())
    }

    /// Scores `activations * W`.
    pub fn predict(&self, activations: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if activations.ncols() != self.dim() {
            return Err(DsalError::dim(format!(
                "activations have {} columns, stream expects {}",
                activations.ncols(),
                self.dim()
            )));
        }
        Ok(activations * &self.weights)
    }

    fn check_update(&self, activations: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
        if activations.ncols() != self.dim() {
            return Err(DsalError::dim(format!(
                "activations have {} columns, stream expects {}",
                activations.ncols(),
                self.dim()
            )));
        }
        if targets.shape() != (activations.nrows(), self.num_classes()) {
            return Err(DsalError::dim(format!(
                "targets are {:?}, expected ({}, {})",
                targets.shape(),
                activations.nrows(),
                self.num_classes()
            )));
        }
        check_finite(activations, "activations")?;
        check_finite(targets, "targets")
    }

    fn step(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        step(&self.iacm, &self.weights, x, y)
    }
}

fn step(
    iacm: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    // gain = R X^T; R is symmetric so X R = gain^T.
    let gain = iacm * x.transpose();
    let mut inner = x * &gain;
    for i in 0..n {
        inner[(i, i)] += 1.0;
    }
    let inner = spd_factor(inner, "I + X R X^T")?;
    let correction = inner.solve(&gain.transpose());
    let mut next_iacm = iacm - &gain * correction;
    symmetrize(&mut next_iacm);
    debug_assert!(
        Cholesky::new(next_iacm.clone()).is_some(),
        "iacm lost positive definiteness"
    );

    let residual = y - x * weights;
    let next_weights = weights + &next_iacm * x.tr_mul(&residual);
    if next_weights.iter().any(|v| !v.is_finite()) {
        return Err(DsalError::NonFinite("updated weights"));
    }
    Ok((next_iacm, next_weights))
}

fn check_duplicates(existing: &[ClassId], new: &[ClassId]) -> Result<()> {
    let mut seen: std::collections::HashSet<ClassId> = std::collections::HashSet::new();
    for &c in existing.iter().chain(new) {
        if !seen.insert(c) {
            return Err(DsalError::ClassOverlap(c));
        }
    }
    Ok(())
}
