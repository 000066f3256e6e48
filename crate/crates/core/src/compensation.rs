//! Dual-activation compensation.
//!
//! After the main stream has absorbed phase `k`, whatever it still gets wrong
//! on the phase's own rows becomes the target of a second ridge stream fed
//! with a differently activated copy of the buffer output. Previous label
//! cleansing zeroes the residue columns of earlier classes so the
//! compensation stream is never told to push old-class scores of new samples
//! anywhere.

use nalgebra::DMatrix;

use crate::error::{DsalError, Result};
use crate::stream::StreamState;

/// Residue targets for one phase, laid out over all classes seen so far.
/// The last `new_class_count` columns belong to the phase's own classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueLabels {
    pub targets: DMatrix<f64>,
    pub new_class_count: usize,
}

impl ResidueLabels {
    pub fn old_class_count(&self) -> usize {
        self.targets.ncols() - self.new_class_count
    }
}

/// `Y_k - X_M W_M`, where `labels_one_hot` already spans every column of the
/// (post-update) main stream, old-class columns being zero.
pub fn compute_residue(
    main: &StreamState,
    main_activations: &DMatrix<f64>,
    labels_one_hot: &DMatrix<f64>,
    new_class_count: usize,
) -> Result<ResidueLabels> {
    let scores = main.predict(main_activations)?;
    if labels_one_hot.shape() != scores.shape() {
        return Err(DsalError::dim(format!(
            "labels are {:?} but main-stream scores are {:?}",
            labels_one_hot.shape(),
            scores.shape()
        )));
    }
    if new_class_count > scores.ncols() {
        return Err(DsalError::dim(format!(
            "{new_class_count} new classes but only {} columns",
            scores.ncols()
        )));
    }
    Ok(ResidueLabels {
        targets: labels_one_hot - scores,
        new_class_count,
    })
}

/// Previous label cleansing. Phase 0 is left alone; later phases keep only
/// their own classes' columns.
pub fn apply_plc(mut residue: ResidueLabels, phase_index: usize) -> ResidueLabels {
    if phase_index > 0 {
        let old = residue.old_class_count();
        residue.targets.columns_mut(0, old).fill(0.0);
    }
    residue
}

/// Base fit of the compensation stream on the phase-0 residue.
pub fn fit_base_comp(
    comp_activations: &DMatrix<f64>,
    residue: &ResidueLabels,
    layout: Vec<crate::store::ClassId>,
    gamma: f64,
) -> Result<StreamState> {
    StreamState::fit_base(comp_activations, &residue.targets, layout, gamma)
}

/// Recursive compensation update; `comp` must already be expanded with the
/// phase's classes.
pub fn dac_update(
    comp: &mut StreamState,
    comp_activations: &DMatrix<f64>,
    residue: &ResidueLabels,
    chunk_rows: usize,
) -> Result<()> {
    comp.rls_update_chunked(comp_activations, &residue.targets, chunk_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_frobenius;
    use crate::oracle;

    fn pseudo(rows: usize, cols: usize, salt: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| ((i * cols + j) as f64 * 0.913 + salt).sin())
    }

    fn hot(rows: usize, cols: usize, first: usize, span: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| if j == first + i % span { 1.0 } else { 0.0 })
    }

    #[test]
    fn plc_examples() {
        let r = ResidueLabels {
            targets: DMatrix::from_row_slice(1, 3, &[0.3, -0.2, 0.9]),
            new_class_count: 1,
        };
        assert_eq!(apply_plc(r.clone(), 0), r);
        let once = apply_plc(r.clone(), 1);
        assert_eq!(once.targets, DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.9]));
        assert_eq!(apply_plc(once.clone(), 1), once);
    }

    #[test]
    fn residue_of_zero_weights_is_the_labels() {
        let mut s = StreamState::empty(4, 1.0).unwrap();
        s.expand_classes(&[0, 1, 2]).unwrap();
        let y = hot(5, 3, 1, 2);
        let r = compute_residue(&s, &pseudo(5, 4, 0.0), &y, 2).unwrap();
        assert_eq!(r.targets, y);
        assert_eq!(r.old_class_count(), 1);
    }

    #[test]
    fn exact_fit_leaves_near_zero_residue() {
        // Square, full-rank activations with tiny gamma interpolate the labels.
        let x = pseudo(6, 6, 0.2) + DMatrix::identity(6, 6) * 3.0;
        let y = hot(6, 3, 0, 3);
        let s = StreamState::fit_base(&x, &y, vec![0, 1, 2], 1e-12).unwrap();
        let r = compute_residue(&s, &x, &y, 3).unwrap();
        assert!(r.targets.amax() < 1e-9);
    }

    #[test]
    fn residue_matches_elementwise_oracle() {
        let x = pseudo(9, 5, 0.0);
        let s = StreamState::fit_base(&x, &hot(9, 3, 0, 3), vec![0, 1, 2], 1.0).unwrap();
        let q = pseudo(4, 5, 7.0);
        let y = hot(4, 3, 0, 3);
        let r = compute_residue(&s, &q, &y, 3).unwrap();
        let scores = oracle::naive_matmul(&q, s.weights());
        for i in 0..4 {
            for j in 0..3 {
                assert!((r.targets[(i, j)] - (y[(i, j)] - scores[(i, j)])).abs() < 1e-12);
            }
        }
        assert!(compute_residue(&s, &q, &hot(4, 2, 0, 2), 2).is_err());
    }

    #[test]
    fn comp_base_fit_examples() {
        let x = pseudo(20, 6, 1.0);
        let zero = ResidueLabels { targets: DMatrix::zeros(20, 3), new_class_count: 3 };
        let s = fit_base_comp(&x, &zero, vec![0, 1, 2], 1.0).unwrap();
        assert!(s.weights().iter().all(|&v| v == 0.0));

        let y = hot(20, 3, 0, 3);
        let main = StreamState::fit_base(&x, &y, vec![0, 1, 2], 1.0).unwrap();
        let comp = fit_base_comp(&x, &ResidueLabels { targets: y.clone(), new_class_count: 3 }, vec![0, 1, 2], 1.0)
            .unwrap();
        assert_eq!(comp, main);

        let r = ResidueLabels { targets: pseudo(20, 3, 4.0), new_class_count: 3 };
        let s = fit_base_comp(&x, &r, vec![0, 1, 2], 3.0).unwrap();
        assert!(rel_frobenius(s.weights(), &oracle::ridge_solve(&x, &r.targets, 3.0)) < 1e-10);
    }

    #[test]
    fn zero_targets_keep_weights_zero_but_update_iacm() {
        let mut s = StreamState::empty(4, 1.0).unwrap();
        s.expand_classes(&[0, 1]).unwrap();
        let before = s.iacm().clone();
        let x = pseudo(6, 4, 0.3);
        let r = ResidueLabels { targets: DMatrix::zeros(6, 2), new_class_count: 2 };
        dac_update(&mut s, &x, &r, 1024).unwrap();
        assert!(s.weights().iter().all(|&v| v == 0.0));
        assert_ne!(s.iacm(), &before);
        assert!(rel_frobenius(s.iacm(), &oracle::direct_iacm(&x, 1.0)) < 1e-10);
    }

    #[test]
    fn single_dac_update_equals_base_fit() {
        let x = pseudo(30, 6, 0.8);
        let r = ResidueLabels { targets: pseudo(30, 2, 5.0), new_class_count: 2 };
        let base = fit_base_comp(&x, &r, vec![0, 1], 1.0).unwrap();
        let mut s = StreamState::empty(6, 1.0).unwrap();
        s.expand_classes(&[0, 1]).unwrap();
        dac_update(&mut s, &x, &r, usize::MAX).unwrap();
        assert!(rel_frobenius(s.weights(), base.weights()) < 1e-9);
    }

    #[test]
    fn recursion_over_fixed_residues_equals_joint_solve() {
        let xs = [pseudo(15, 6, 0.0), pseudo(10, 6, 3.0), pseudo(12, 6, 6.0)];
        let widths = [2usize, 2, 1];
        let total: usize = widths.iter().sum();
        let mut s = None::<StreamState>;
        let mut stacked_x = DMatrix::zeros(0, 6);
        let mut stacked_y = DMatrix::zeros(0, total);
        let mut seen = 0;
        for (k, (x, w)) in xs.iter().zip(widths).enumerate() {
            seen += w;
            let raw = ResidueLabels { targets: pseudo(x.nrows(), seen, 10.0 + k as f64), new_class_count: w };
            let r = apply_plc(raw, k);
            let layout: Vec<u32> = (0..seen as u32).collect();
            match s.as_mut() {
                None => s = Some(fit_base_comp(x, &r, layout, 1.5).unwrap()),
                Some(st) => {
                    st.expand_classes(&layout[seen - w..]).unwrap();
                    dac_update(st, x, &r, 4).unwrap();
                }
            }
            let padded = r.targets.resize_horizontally(total, 0.0);
            let n0 = stacked_x.nrows();
            stacked_x = stacked_x.resize_vertically(n0 + x.nrows(), 0.0);
            stacked_x.rows_mut(n0, x.nrows()).copy_from(x);
            stacked_y = stacked_y.resize_vertically(n0 + x.nrows(), 0.0);
            stacked_y.rows_mut(n0, x.nrows()).copy_from(&padded);
        }
        let joint = oracle::ridge_solve(&stacked_x, &stacked_y, 1.5);
        assert!(rel_frobenius(s.unwrap().weights(), &joint) < 1e-8);
    }
}
