//! Brute-force reference solutions.
//!
//! Nothing here calls a matrix kernel from `nalgebra`: products, transposes
//! and inverses are written out as plain loops over row-major buffers, so a
//! bug in the recursive path cannot be mirrored here. `DMatrix` is used only
//! for element storage at the interface. Everything is O(n^3) and meant for
//! verification, not speed.

use nalgebra::DMatrix;

use crate::error::{DsalError, Result};
use crate::store::ClassId;

/// Row-major dense matrix used internally by the oracle.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut d = Dense::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                d.data[i * cols + j] = m[(i, j)];
            }
        }
        d
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `self^T * other`, accumulating row by row.
    fn t_mul(&self, other: &Dense) -> Dense {
        assert_eq!(self.rows, other.rows);
        let mut out = Dense::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a = &self.data[r * self.cols..(r + 1) * self.cols];
            let b = &other.data[r * other.cols..(r + 1) * other.cols];
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &bj) in row.iter_mut().zip(b) {
                    *o += ai * bj;
                }
            }
        }
        out
    }

    fn mul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for t in 0..self.cols {
                let a = self.at(i, t);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.at(t, j);
                }
            }
        }
        out
    }

    /// Gauss-Jordan inversion with partial pivoting.
    fn inverse(&self) -> Option<Dense> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Dense::zeros(n, n);
        for i in 0..n {
            inv.data[i * n + i] = 1.0;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a.at(p, col).abs().total_cmp(&a.at(q, col).abs()))
                .unwrap();
            let pv = a.at(pivot, col);
            if pv == 0.0 || !pv.is_finite() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            for j in 0..n {
                a.data[col * n + j] /= pv;
                inv.data[col * n + j] /= pv;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.at(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a.data[r * n + j] -= f * a.data[col * n + j];
                    inv.data[r * n + j] -= f * inv.data[col * n + j];
                }
            }
        }
        Some(inv)
    }

    fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += v;
        }
    }
}

/// Triple-loop product `a * b`.
pub fn naive_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows(), "naive_matmul shape mismatch");
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut acc = 0.0;
            for t in 0..a.ncols() {
                acc += a[(i, t)] * b[(t, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Explicit `(X^T X + gamma I)^-1` by Gauss-Jordan inversion.
pub fn direct_iacm(activations: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    try_direct_iacm(activations, gamma).expect("regularized Gram matrix is invertible for gamma > 0")
}

pub fn try_direct_iacm(activations: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if gamma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(DsalError::Config(format!("gamma must be positive, got {gamma}")));
    }
    let x = Dense::from_matrix(activations);
    let mut gram = x.t_mul(&x);
    gram.add_diagonal(gamma);
    gram.inverse()
        .map(|m| m.to_matrix())
        .ok_or(DsalError::Factorization("oracle Gram inverse"))
}

/// Dense-inverse ridge solve `(X^T X + gamma I)^-1 X^T Y`.
pub fn ridge_solve(activations: &DMatrix<f64>, targets: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let x = Dense::from_matrix(activations);
    let y = Dense::from_matrix(targets);
    let mut gram = x.t_mul(&x);
    gram.add_diagonal(gamma);
    let inv = gram.inverse().expect("regularized Gram matrix is invertible for gamma > 0");
    inv.mul(&x.t_mul(&y)).to_matrix()
}

/// Joint (non-incremental) ridge problem over every phase at once.
#[derive(Debug, Clone)]
pub struct JointProblem {
    /// Stacked activations of all phases.
    pub activations: DMatrix<f64>,
    /// Block-diagonal labels; columns follow `layout`.
    pub targets: DMatrix<f64>,
    pub layout: Vec<ClassId>,
    pub gamma: f64,
}

impl JointProblem {
    /// Stacks phases of `(activations, labels, declared classes)`. Column
    /// order is the concatenation of the class sets, which gives the
    /// block-diagonal label structure because class sets are disjoint.
    pub fn from_phases<'a>(
        phases: impl IntoIterator<Item = (&'a DMatrix<f64>, &'a [ClassId], &'a [ClassId])>,
        gamma: f64,
    ) -> Result<Self> {
        let phases: Vec<_> = phases.into_iter().collect();
        let d = phases
            .first()
            .map(|(x, _, _)| x.ncols())
            .ok_or_else(|| DsalError::Manifest("joint problem needs at least one phase".into()))?;
        let layout: Vec<ClassId> = phases.iter().flat_map(|(_, _, c)| c.iter().copied()).collect();
        crate::store::check_disjoint(phases.iter().map(|(_, _, c)| *c))?;
        let rows: usize = phases.iter().map(|(x, _, _)| x.nrows()).sum();
        let mut activations = DMatrix::zeros(rows, d);
        let mut targets = DMatrix::zeros(rows, layout.len());
        let mut row = 0;
        for (x, labels, _) in &phases {
            if x.ncols() != d || x.nrows() != labels.len() {
                return Err(DsalError::dim("inconsistent phase in joint problem"));
            }
            for i in 0..x.nrows() {
                for j in 0..d {
                    activations[(row, j)] = x[(i, j)];
                }
                let col = layout
                    .iter()
                    .position(|c| *c == labels[i])
                    .ok_or(DsalError::UnknownLabel(labels[i]))?;
                targets[(row, col)] = 1.0;
                row += 1;
            }
        }
        Ok(JointProblem { activations, targets, layout, gamma })
    }

    /// Direct solve with no recursion.
    pub fn solve(&self) -> Result<DMatrix<f64>> {
        if self.gamma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(DsalError::Factorization("singular joint system (gamma <= 0)"));
        }
        Ok(ridge_solve(&self.activations, &self.targets, self.gamma))
    }
}

/// Relative Frobenius discrepancy computed without matrix kernels.
pub fn discrepancy(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), reference.shape());
    let mut diff = 0.0;
    let mut base = 0.0;
    for (x, y) in a.iter().zip(reference.iter()) {
        diff += (x - y) * (x - y);
        base += y * y;
    }
    if base > 0.0 {
        (diff / base).sqrt()
    } else {
        diff.sqrt()
    }
}
