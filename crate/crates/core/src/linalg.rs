//! Small dense linear-algebra helpers shared by the solver, rounding and
//! evaluation code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition `S = Q diag(w) Qᵀ`.
///
/// Eigenvalues come back in the order nalgebra produces them (unsorted).
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let max_iter = 100 * s.nrows().max(10);
    SymmetricEigen::try_new(s.clone(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::Eigen(format!("no convergence for {}x{} matrix", s.nrows(), s.ncols())))
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> Result<f64> {
    if s.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = sym_eigen(s)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(s: &DMatrix<f64>) -> Result<f64> {
    if s.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = sym_eigen(s)?;
    Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// `max |S_ij - S_ji|`.
pub fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

/// Frobenius inner product `⟨A, B⟩ = Σ A_ij B_ij`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Rebuild `Q diag(f(w)) Qᵀ` from an eigendecomposition.
pub fn recompose(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let w = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&v| f(v)));
    let mut scaled = q.clone();
    for (mut col, &wj) in scaled.column_iter_mut().zip(w.iter()) {
        col *= wj;
    }
    let mut out = &scaled * q.transpose();
    // Exact symmetry for downstream eigendecompositions.
    let n = out.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = m;
            out[(j, i)] = m;
        }
    }
    out
}

pub fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// SHA-256 over the shapes and little-endian bytes of a sequence of matrices.
pub fn hash_matrices(mats: &[&DMatrix<f64>]) -> String {
    let mut hasher = Sha256::new();
    for m in mats {
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        // Row-major so the digest matches the on-disk matrix layout.
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                hasher.update(m[(i, j)].to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `y += a·x`, elementwise.
pub fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
