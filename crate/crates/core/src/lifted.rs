//! The lifted problem over `Λ ∈ ℝ^{p×p}`.
//!
//! Every neuron `(u_j, v_j)` of a two-layer ReLU network maps to a lifted
//! vector `λ_j = [α_j; β_j; u_j; v_j]` with `α_j = (X u_j)₊` and
//! `β_j = α_j − X u_j`. Summing the outer products `λ_j λ_jᵀ` gives a matrix
//! `Λ` on which the training loss is a convex quadratic, and the ReLU
//! structure turns into the linear constraint `⟨A0, Λ⟩ = 0` plus cone
//! membership. Relaxing the completely positive requirement on the
//! `(α, β)` block to entrywise nonnegativity gives the problem solved by
//! [`crate::solver`].

use std::borrow::Cow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg;
use crate::network::NetworkWeights;

/// Asymmetry above which a caller-supplied `Λ` triggers a warning before it
/// is symmetrized.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// Row-selection matrices over the block layout `[α | β | u | v]`.
///
/// Each selector is stored as a row → column index map; `P Λ Qᵀ` products are
/// gathers over those indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSet {
    n: usize,
    d: usize,
    c: usize,
    alpha: Vec<usize>,
    beta: Vec<usize>,
    u: Vec<usize>,
    v: Vec<usize>,
}

impl SelectionSet {
    pub fn new(n: usize, d: usize, c: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDimension("n"));
        }
        if d == 0 {
            return Err(Error::EmptyDimension("d"));
        }
        if c == 0 {
            return Err(Error::EmptyDimension("c"));
        }
        Ok(Self {
            n,
            d,
            c,
            alpha: (0..n).collect(),
            beta: (n..2 * n).collect(),
            u: (2 * n..2 * n + d).collect(),
            v: (2 * n + d..2 * n + d + c).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Lifted dimension `p = 2n + d + c`.
    pub fn p(&self) -> usize {
        2 * self.n + self.d + self.c
    }

    pub fn alpha(&self) -> &[usize] {
        &self.alpha
    }

    pub fn beta(&self) -> &[usize] {
        &self.beta
    }

    pub fn u(&self) -> &[usize] {
        &self.u
    }

    pub fn v(&self) -> &[usize] {
        &self.v
    }

    /// Columns selected by `P_αβ` (α rows followed by β rows).
    pub fn ab(&self) -> Vec<usize> {
        self.alpha.iter().chain(self.beta.iter()).copied().collect()
    }

    /// Whether lifted index `k` lies in the `(α, β)` block.
    pub fn in_ab(&self, k: usize) -> bool {
        k < 2 * self.n
    }

    /// Dense 0/1 matrix for a selector; used by exports and tests.
    pub fn dense(&self, which: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(which.len(), self.p());
        for (row, &col) in which.iter().enumerate() {
            m[(row, col)] = 1.0;
        }
        m
    }

    /// `P_rows Λ P_colsᵀ`.
    pub fn block(&self, lam: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| lam[(rows[i], cols[j])])
    }

    /// `P λ` for a factor matrix `λ` with `p` rows.
    pub fn rows_of(&self, factor: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), factor.ncols(), |i, j| factor[(rows[i], j)])
    }
}

/// Lifted problem data for `(X, Y, γ)`.
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    sel: SelectionSet,
    m: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    gamma: f64,
    bias: bool,
    a0: DMatrix<f64>,
    dataset_hash: String,
}

/// Serializable summary of a [`LiftedProblem`] for experiment manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub p: usize,
    pub gamma: f64,
    pub bias: bool,
    pub dataset_hash: String,
}

impl LiftedProblem {
    /// Assemble the problem. With `bias` set, a column of ones is appended
    /// to a copy of `x` before anything else is built.
    pub fn build(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64, bias: bool) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(mismatch("build_problem rows", x.nrows(), y.nrows()));
        }
        if !linalg::all_finite(x) {
            return Err(Error::NonFinite("X"));
        }
        if !linalg::all_finite(y) {
            return Err(Error::NonFinite("Y"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be finite and nonnegative, got {gamma}"),
            });
        }
        let dataset_hash = linalg::hash_matrices(&[x, y]);
        let x = if bias { with_ones_column(x) } else { x.clone() };
        let (n, d, c) = (x.nrows(), x.ncols(), y.ncols());
        let sel = SelectionSet::new(n, d, c)?;
        let p = sel.p();

        let mut m = DMatrix::zeros(n, p);
        for i in 0..n {
            m[(i, sel.alpha[i])] = -1.0;
            m[(i, sel.beta[i])] = 1.0;
            for k in 0..d {
                m[(i, sel.u[k])] = x[(i, k)];
            }
        }

        let mut a0 = m.transpose() * &m;
        for i in 0..n {
            a0[(sel.alpha[i], sel.beta[i])] += 0.5;
            a0[(sel.beta[i], sel.alpha[i])] += 0.5;
        }
        // Gram products can differ in the last bit across the diagonal.
        for j in 0..p {
            for i in (j + 1)..p {
                a0[(j, i)] = a0[(i, j)];
            }
        }

        Ok(Self {
            sel,
            m,
            x,
            y: y.clone(),
            gamma,
            bias,
            a0,
            dataset_hash,
        })
    }

    pub fn sel(&self) -> &SelectionSet {
        &self.sel
    }

    /// `M = −P_α + P_β + X P_u` (n×p).
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Data matrix as used in the lift (includes the ones column under bias).
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn bias(&self) -> bool {
        self.bias
    }

    /// Equality-constraint matrix `A0 = sym(P_αᵀ P_β) + MᵀM`.
    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn p(&self) -> usize {
        self.sel.p()
    }

    pub fn meta(&self) -> ProblemMeta {
        ProblemMeta {
            n: self.sel.n,
            d: self.sel.d,
            c: self.sel.c,
            p: self.sel.p(),
            gamma: self.gamma,
            bias: self.bias,
            dataset_hash: self.dataset_hash.clone(),
        }
    }

    fn check_dims(&self, lam: &DMatrix<f64>) -> Result<()> {
        let p = self.p();
        if lam.nrows() != p || lam.ncols() != p {
            return Err(mismatch(
                "lifted matrix",
                format!("{p}x{p}"),
                format!("{}x{}", lam.nrows(), lam.ncols()),
            ));
        }
        Ok(())
    }

    /// `‖P_α Λ P_vᵀ − Y‖²_F + (γ/2)(tr(P_u Λ P_uᵀ) + tr(P_v Λ P_vᵀ))`.
    pub fn objective(&self, lam: &DMatrix<f64>) -> Result<f64> {
        self.check_dims(lam)?;
        let lam = symmetric_view(lam);
        Ok(self.objective_unchecked(&lam))
    }

    /// Objective for a matrix already known to be symmetric and of size p.
    pub(crate) fn objective_unchecked(&self, lam: &DMatrix<f64>) -> f64 {
        let sel = &self.sel;
        let mut fit = 0.0;
        for (i, &a) in sel.alpha.iter().enumerate() {
            for (k, &v) in sel.v.iter().enumerate() {
                let r = lam[(a, v)] - self.y[(i, k)];
                fit += r * r;
            }
        }
        let trace: f64 = sel.u.iter().chain(sel.v.iter()).map(|&j| lam[(j, j)]).sum();
        fit + 0.5 * self.gamma * trace
    }

    /// Feasibility residuals of `Λ`.
    pub fn residuals(&self, lam: &DMatrix<f64>) -> Result<Residuals> {
        self.check_dims(lam)?;
        if !linalg::all_finite(lam) {
            return Err(Error::Eigen("lifted matrix has non-finite entries".into()));
        }
        let lam = symmetric_view(lam);
        Ok(Residuals {
            eq_residual: linalg::frob_inner(&self.a0, &lam),
            min_eig: linalg::min_eigenvalue(&lam)?,
            min_nonneg: self.min_nonneg(&lam),
        })
    }

    /// Smallest entry of `P_αβ Λ P_αβᵀ`.
    pub fn min_nonneg(&self, lam: &DMatrix<f64>) -> f64 {
        let k = 2 * self.sel.n;
        let mut worst = f64::INFINITY;
        for j in 0..k {
            for i in 0..k {
                worst = worst.min(lam[(i, j)]);
            }
        }
        worst
    }

    /// Lifted factor `[λ_1 … λ_m]` (p×m) of a network on this problem's data.
    pub fn lift_factor(&self, w: &NetworkWeights) -> Result<DMatrix<f64>> {
        if w.d() != self.sel.d || w.c() != self.sel.c {
            return Err(mismatch(
                "lift_factor weights",
                format!("d={}, c={}", self.sel.d, self.sel.c),
                format!("d={}, c={}", w.d(), w.c()),
            ));
        }
        let sel = &self.sel;
        let pre = &self.x * w.u();
        let mut lam = DMatrix::zeros(self.p(), w.width());
        for j in 0..w.width() {
            for i in 0..sel.n {
                let z = pre[(i, j)];
                let a = z.max(0.0);
                lam[(sel.alpha[i], j)] = a;
                lam[(sel.beta[i], j)] = a - z;
            }
            for k in 0..sel.d {
                lam[(sel.u[k], j)] = w.u()[(k, j)];
            }
            for k in 0..sel.c {
                lam[(sel.v[k], j)] = w.v()[(k, j)];
            }
        }
        Ok(lam)
    }

    /// Exact lift `Σ_j λ_j λ_jᵀ` of a network.
    pub fn exact_lift(&self, w: &NetworkWeights) -> Result<DMatrix<f64>> {
        let f = self.lift_factor(w)?;
        Ok(&f * f.transpose())
    }
}

/// Feasibility residuals of a lifted matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `⟨A0, Λ⟩`; zero on the feasible set.
    pub eq_residual: f64,
    /// Smallest eigenvalue of `Λ`.
    pub min_eig: f64,
    /// Smallest entry of the `(α, β)` block.
    pub min_nonneg: f64,
}

/// Upper bound on the width beyond which wider networks cannot lower the
/// training objective: `max{p, 2n² + n − 1}`.
pub fn critical_width(n: usize, d: usize, c: usize) -> Result<usize> {
    let sel = SelectionSet::new(n, d, c)?;
    Ok(sel.p().max(2 * n * n + n - 1))
}

pub fn with_ones_column(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone().resize_horizontally(x.ncols() + 1, 1.0);
    out.column_mut(x.ncols()).fill(1.0);
    out
}

/// Symmetrize on entry, warning when the input was noticeably asymmetric.
pub fn symmetric_view(lam: &DMatrix<f64>) -> Cow<'_, DMatrix<f64>> {
    let asym = linalg::asymmetry(lam);
    if asym == 0.0 {
        return Cow::Borrowed(lam);
    }
    if asym > ASYMMETRY_WARN {
        log::warn!("symmetrizing lifted matrix with asymmetry {asym:.3e}");
    }
    Cow::Owned(linalg::symmetrize(lam))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_block_layout() {
        let sel = SelectionSet::new(1, 1, 1).unwrap();
        assert_eq!(sel.p(), 4);
        assert_eq!(sel.dense(sel.alpha()), DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(sel.dense(sel.beta()), DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(sel.dense(sel.u()), DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(sel.dense(sel.v()), DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn random_dataset_dimensions() {
        let sel = SelectionSet::new(25, 2, 5).unwrap();
        assert_eq!(sel.p(), 57);
        assert_eq!(sel.p() * sel.p(), 3249);
        let pu = sel.dense(sel.u());
        assert_eq!(pu.shape(), (2, 57));
        // 1-based columns 51 and 52.
        assert_eq!(pu[(0, 50)], 1.0);
        assert_eq!(pu[(1, 51)], 1.0);
        assert_eq!(pu.sum(), 2.0);
    }

    #[test]
    fn spiral_variable_count() {
        let sel = SelectionSet::new(60, 2, 3).unwrap();
        assert_eq!(sel.p(), 125);
        assert_eq!(sel.p() * sel.p(), 15625);
    }

    #[test]
    fn empty_dimensions_rejected() {
        assert!(matches!(SelectionSet::new(0, 1, 1), Err(Error::EmptyDimension("n"))));
        assert!(matches!(SelectionSet::new(1, 0, 1), Err(Error::EmptyDimension("d"))));
        assert!(matches!(SelectionSet::new(1, 1, 0), Err(Error::EmptyDimension("c"))));
    }

    #[test]
    fn zero_data_gives_pure_selector_m() {
        let x = DMatrix::zeros(3, 2);
        let y = DMatrix::from_element(3, 2, 1.0);
        let prob = LiftedProblem::build(&x, &y, 0.1, false).unwrap();
        let sel = prob.sel();
        let expected = sel.dense(sel.beta()) - sel.dense(sel.alpha());
        assert_eq!(prob.m(), &expected);
    }

    #[test]
    fn bias_flag_appends_column_without_touching_input() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let prob = LiftedProblem::build(&x, &y, 0.0, true).unwrap();
        assert_eq!(prob.sel().d(), 2);
        assert_eq!(prob.p(), 2 * 2 + 2 + 1);
        assert_eq!(prob.x().column(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert_eq!(x.ncols(), 1);
        assert!(prob.meta().bias);
    }

    #[test]
    fn build_rejects_bad_input() {
        let x = DMatrix::zeros(3, 2);
        let y = DMatrix::zeros(2, 2);
        assert!(matches!(LiftedProblem::build(&x, &y, 0.1, false), Err(Error::DimensionMismatch { .. })));
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 0)] = f64::INFINITY;
        assert!(matches!(LiftedProblem::build(&x, &y, 0.1, false), Err(Error::NonFinite("X"))));
        let x = DMatrix::zeros(2, 2);
        assert!(matches!(
            LiftedProblem::build(&x, &y, -1.0, false),
            Err(Error::InvalidParameter { name: "gamma", .. })
        ));
    }

    #[test]
    fn zero_lambda_objective_is_label_energy() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let prob = LiftedProblem::build(&x, &y, 0.3, false).unwrap();
        let zero = DMatrix::zeros(prob.p(), prob.p());
        assert_eq!(prob.objective(&zero).unwrap(), y.norm_squared());
        let r = prob.residuals(&zero).unwrap();
        assert_eq!((r.eq_residual, r.min_eig, r.min_nonneg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_lambda_residual_is_trace_mmt() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 0.0, 1.5]);
        let y = DMatrix::zeros(3, 1);
        let prob = LiftedProblem::build(&x, &y, 0.0, false).unwrap();
        let eye = DMatrix::identity(prob.p(), prob.p());
        let r = prob.residuals(&eye).unwrap();
        let expected = (prob.m() * prob.m().transpose()).trace();
        assert!((r.eq_residual - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_objective_is_zero() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DMatrix::from_row_slice(1, 1, &[2.0]);
        let prob = LiftedProblem::build(&x, &y, 0.0, false).unwrap();
        let mut lam = DMatrix::zeros(4, 4);
        lam[(0, 3)] = 2.0;
        lam[(3, 0)] = 2.0;
        assert_eq!(prob.objective(&lam).unwrap(), 0.0);
    }

    #[test]
    fn critical_width_examples() {
        assert_eq!(critical_width(25, 2, 5).unwrap(), 1274);
        assert_eq!(critical_width(60, 2, 3).unwrap(), 7259);
        assert_eq!(critical_width(1, 100, 100).unwrap(), 202);
        assert!(critical_width(0, 1, 1).is_err());
    }

    #[test]
    fn objective_rejects_wrong_size() {
        let x = DMatrix::zeros(2, 1);
        let y = DMatrix::zeros(2, 1);
        let prob = LiftedProblem::build(&x, &y, 0.0, false).unwrap();
        assert!(prob.objective(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let x = DMatrix::zeros(1, 1);
        let y = DMatrix::from_element(1, 1, 1.0);
        let prob = LiftedProblem::build(&x, &y, 0.0, false).unwrap();
        let mut lam = DMatrix::zeros(4, 4);
        lam[(0, 3)] = 1.0;
        // (Λ + Λᵀ)/2 has 0.5 at (α, v).
        assert!((prob.objective(&lam).unwrap() - 0.25).abs() < 1e-15);
    }
}
