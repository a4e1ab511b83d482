//! Euclidean projections onto the PSD cone and onto its intersection with
//! the cone of matrices whose `(α, β)` block is entrywise nonnegative.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::lifted::SelectionSet;
use crate::linalg;

/// Default cap on alternation sweeps for a cold-started projection.
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

/// Clamp negative eigenvalues to zero.
pub fn project_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = linalg::sym_eigen(s)?;
    Ok(linalg::recompose(&eig, |w| w.max(0.0)))
}

/// Clamp the leading `k×k` block to be nonnegative, in place.
fn clamp_leading_block(m: &mut DMatrix<f64>, k: usize) {
    for j in 0..k {
        for i in 0..k {
            if m[(i, j)] < 0.0 {
                m[(i, j)] = 0.0;
            }
        }
    }
}

/// Dykstra correction terms, kept between calls so that a sequence of
/// nearby projections can be warm-started.
///
/// `psd` lies in the negative semidefinite cone and `slab` is nonpositive on
/// the `(α, β)` block and zero elsewhere; for the projection `x` of `a`,
/// `a − x = psd + slab`.
#[derive(Debug, Clone)]
pub struct DykstraState {
    pub psd: DMatrix<f64>,
    pub slab: DMatrix<f64>,
    /// Sweeps used by the last projection.
    pub sweeps: usize,
    /// Whether the last projection met its tolerance.
    pub converged: bool,
}

impl DykstraState {
    pub fn new(p: usize) -> Self {
        Self {
            psd: DMatrix::zeros(p, p),
            slab: DMatrix::zeros(p, p),
            sweeps: 0,
            converged: true,
        }
    }
}

/// Project `a` onto `{Λ ⪰ 0 : Λ_ab ≥ 0 on the leading block of size k}`
/// by Dykstra's alternating projections, warm-started from `state`.
///
/// Stops once the slab point and the PSD point of a sweep are within `tol`
/// in Frobenius norm, so the returned (PSD) point has every leading-block
/// entry above `−tol`.
pub fn dykstra_project(
    a: &DMatrix<f64>,
    k: usize,
    state: &mut DykstraState,
    tol: f64,
    max_sweeps: usize,
) -> Result<DMatrix<f64>> {
    let mut x_psd = DMatrix::zeros(0, 0);
    state.converged = false;
    for sweep in 1..=max_sweeps.max(1) {
        // Slab step on a − psd.
        let b = a - &state.psd;
        let mut x_slab = b.clone();
        clamp_leading_block(&mut x_slab, k);
        state.slab = &b - &x_slab;

        // PSD step on a − slab.
        let c = a - &state.slab;
        x_psd = project_psd(&c)?;
        state.psd = c - &x_psd;

        state.sweeps = sweep;
        if (&x_psd - &x_slab).norm() < tol {
            state.converged = true;
            break;
        }
    }
    Ok(x_psd)
}

/// Cold-started projection onto the doubly nonnegative slab set.
pub fn project_dnn_slab(s: &DMatrix<f64>, sel: &SelectionSet, inner_tol: f64) -> Result<DMatrix<f64>> {
    if inner_tol.is_nan() || inner_tol <= 0.0 {
        return Err(crate::error::Error::InvalidParameter {
            name: "inner_tol",
            reason: "must be positive".into(),
        });
    }
    if s.nrows() != sel.p() || s.ncols() != sel.p() {
        return Err(crate::error::mismatch("project_dnn_slab", sel.p(), s.nrows()));
    }
    let mut state = DykstraState::new(sel.p());
    dykstra_project(s, 2 * sel.n(), &mut state, inner_tol, DEFAULT_MAX_SWEEPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_clamps_negative_eigenvalue() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let out = project_psd(&s).unwrap();
        assert!((out - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).amax() < 1e-15);
    }

    #[test]
    fn psd_fixed_point_and_negative_identity() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 1.0, 0.0, 0.3, 2.0]);
        let s = &b * b.transpose();
        let out = project_psd(&s).unwrap();
        assert!((&out - &s).norm() <= 1e-12 * s.norm());
        let neg = -DMatrix::<f64>::identity(3, 3);
        assert_eq!(project_psd(&neg).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn dnn_projection_of_negative_identity_is_zero() {
        let sel = SelectionSet::new(2, 1, 1).unwrap();
        let s = -DMatrix::<f64>::identity(6, 6);
        let out = project_dnn_slab(&s, &sel, 1e-10).unwrap();
        assert!(out.amax() < 1e-12);
    }

    #[test]
    fn dnn_projection_fixes_feasible_point() {
        let sel = SelectionSet::new(2, 1, 1).unwrap();
        let f = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) % 5) as f64 * 0.3 + 0.1);
        let s = &f * f.transpose();
        let out = project_dnn_slab(&s, &sel, 1e-10).unwrap();
        assert!((out - s).norm() < 1e-9);
    }

    #[test]
    fn dnn_projection_repairs_negative_entry() {
        let sel = SelectionSet::new(2, 1, 1).unwrap();
        // PSD with a negative (α, β) entry.
        let f = DMatrix::from_row_slice(6, 2, &[1.0, 0.2, -0.8, 0.5, 0.3, 1.0, 0.4, 0.4, 1.0, -1.0, 0.2, 0.7]);
        let s = &f * f.transpose();
        assert!(s[(0, 1)] < 0.0);
        let tol = 1e-8;
        let out = project_dnn_slab(&s, &sel, tol).unwrap();
        let min_eig = linalg::min_eigenvalue(&out).unwrap();
        let min_nonneg = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|ij| out[ij]).fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -tol, "min eig {min_eig}");
        assert!(min_nonneg >= -tol, "min nonneg {min_nonneg}");
    }

    #[test]
    fn invalid_tolerance_rejected() {
        let sel = SelectionSet::new(1, 1, 1).unwrap();
        assert!(project_dnn_slab(&DMatrix::zeros(4, 4), &sel, 0.0).is_err());
    }
}
