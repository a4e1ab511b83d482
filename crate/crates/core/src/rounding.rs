//! Rounding a lifted solution back to network weights.
//!
//! Looks for `λ ∈ ℝ^{p×R}` with `λλᵀ ≈ Λ⋆`, every column split-feasible
//! (`𝒟₁`: nonnegative `α`/`β` rows with `α ⊙ β = 0`) and in `null(M)`
//! (`𝒟₂`), by three-operator splitting on
//! `φ(λ) = ‖Λ⋆ − λλᵀ‖²_F`:
//!
//! ```text
//! λᵏ   = proj_𝒟₁(λ̄ᵏ)
//! λ̂ᵏ   = proj_𝒟₂(2λᵏ − λ̄ᵏ − η ∇φ(λᵏ))
//! λ̄ᵏ⁺¹ = λ̄ᵏ − λᵏ + λ̂ᵏ
//! ```

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::lifted::{LiftedProblem, SelectionSet};
use crate::linalg;
use crate::network::{row_major, NetworkWeights};

/// Columns whose `u` and `v` parts are both below this norm are dropped by
/// [`extract_weights`].
pub const PRUNE_TOL: f64 = 1e-10;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-12;

/// `p×R` factor whose columns are lifted neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    lam: DMatrix<f64>,
}

impl FactorMatrix {
    pub fn new(lam: DMatrix<f64>) -> Result<Self> {
        if !linalg::all_finite(&lam) {
            return Err(Error::NonFinite("factor matrix"));
        }
        Ok(Self { lam })
    }

    pub fn lam(&self) -> &DMatrix<f64> {
        &self.lam
    }

    pub fn p(&self) -> usize {
        self.lam.nrows()
    }

    pub fn r(&self) -> usize {
        self.lam.ncols()
    }

    pub fn to_json(&self, provenance: Option<String>) -> FactorJson {
        FactorJson {
            p: self.p(),
            r: self.r(),
            lam: row_major(&self.lam),
            provenance,
        }
    }

    pub fn from_json(j: &FactorJson) -> Result<Self> {
        if j.lam.len() != j.p * j.r {
            return Err(mismatch("factor json", j.p * j.r, j.lam.len()));
        }
        Self::new(DMatrix::from_row_slice(j.p, j.r, &j.lam))
    }
}

/// On-disk factor matrix: row-major `lam` (p×r) and the SHA-256 of the
/// lifted matrix it was rounded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorJson {
    pub p: usize,
    pub r: usize,
    pub lam: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// What `proj_d1` does when `α_i = β_i > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Zero the `β` entry, so the output is always in `𝒟₁`.
    #[default]
    KeepAlpha,
    /// Keep both entries, as the strict comparisons of the case formula do.
    PaperLiteral,
}

/// Step size `η` of the gradient term.
///
/// Near an exact factorization `λ` of `Λ⋆` the Hessian of `φ` reaches
/// `8‖Λ⋆‖₂` along `λ`, and the linearized recursion multiplies that
/// direction by `1 − 8η‖Λ⋆‖₂`. `Scaled(1.0)` (`η = 1/‖Λ⋆‖₂`) therefore
/// repels iterates from exact factorizations by a factor of 7 per step;
/// the default `Scaled(0.125)` cancels that mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    /// `η = factor / ‖Λ⋆‖₂`.
    Scaled(f64),
    Fixed(f64),
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Scaled(0.125)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingOptions {
    /// Rounding width `R`.
    pub r: usize,
    pub iters: usize,
    pub step: StepSize,
    /// Seeds the rotations of restarts past the first.
    pub seed: u64,
    /// Independent runs; run `k > 0` starts from the square-root factor
    /// times a random orthogonal matrix. The lowest `φ` wins.
    #[serde(default = "one")]
    pub restarts: usize,
    pub tie_break: TieBreak,
}

impl Default for RoundingOptions {
    fn default() -> Self {
        Self {
            r: 300,
            iters: 1000,
            step: StepSize::default(),
            seed: 0,
            restarts: 1,
            tie_break: TieBreak::KeepAlpha,
        }
    }
}

fn one() -> usize {
    1
}

impl RoundingOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter {
                name: "restarts",
                reason: "must be at least 1".into(),
            });
        }
        if self.r == 0 {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: "must be at least 1".into(),
            });
        }
        if self.iters == 0 {
            return Err(Error::InvalidParameter {
                name: "iters",
                reason: "must be at least 1".into(),
            });
        }
        let (StepSize::Fixed(eta) | StepSize::Scaled(eta)) = self.step;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("must be positive, got {eta}"),
            });
        }
        Ok(())
    }
}

/// Projection onto `𝒟₁`, column by column. Rows past `2n` pass through.
pub fn proj_d1(lam: &DMatrix<f64>, sel: &SelectionSet, tie: TieBreak) -> Result<DMatrix<f64>> {
    if lam.nrows() != sel.p() {
        return Err(mismatch("proj_d1 rows", sel.p(), lam.nrows()));
    }
    let mut out = lam.clone();
    for j in 0..lam.ncols() {
        for (&a, &b) in sel.alpha().iter().zip(sel.beta()) {
            let (x, y) = (lam[(a, j)], lam[(b, j)]);
            let xa = if x < 0.0 || y > x { 0.0 } else { x };
            let mut xb = if y < 0.0 || x > y { 0.0 } else { y };
            if tie == TieBreak::KeepAlpha && xa > 0.0 && xb > 0.0 {
                xb = 0.0;
            }
            out[(a, j)] = xa;
            out[(b, j)] = xb;
        }
    }
    Ok(out)
}

/// Orthogonal projector onto `null(M)`, stored as an orthonormal basis of
/// the row space of `M`.
#[derive(Debug, Clone)]
pub struct NullspaceProjector {
    row_basis: DMatrix<f64>,
    p: usize,
}

impl NullspaceProjector {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let p = m.ncols();
        if m.nrows() == 0 || p == 0 || m.norm() == 0.0 {
            return Ok(Self {
                row_basis: DMatrix::zeros(p, 0),
                p,
            });
        }
        if !linalg::all_finite(m) {
            return Err(Error::NonFinite("M"));
        }
        let svd = m
            .clone()
            .try_svd(false, true, f64::EPSILON, 100 * p.max(10))
            .ok_or_else(|| Error::NumericalFailure("SVD of M did not converge".into()))?;
        let v_t = svd.v_t.expect("requested right singular vectors");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > RANK_RTOL * smax)
            .collect();
        let row_basis = v_t.select_rows(&keep).transpose();
        Ok(Self { row_basis, p })
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }

    /// `(I − M⁺M) lam`.
    pub fn apply(&self, lam: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if lam.nrows() != self.p {
            return Err(mismatch("proj_d2 rows", self.p, lam.nrows()));
        }
        if self.rank() == 0 {
            return Ok(lam.clone());
        }
        let coef = self.row_basis.transpose() * lam;
        Ok(lam - &self.row_basis * coef)
    }
}

/// Projection onto `𝒟₂ = null(M)`.
pub fn proj_d2(lam: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    NullspaceProjector::new(m)?.apply(lam)
}

fn check_pair(lam: &DMatrix<f64>, lstar: &DMatrix<f64>) -> Result<()> {
    if lstar.nrows() != lstar.ncols() {
        return Err(mismatch("lifted matrix shape", "square", format!("{}x{}", lstar.nrows(), lstar.ncols())));
    }
    if lam.nrows() != lstar.nrows() {
        return Err(mismatch("factor rows", lstar.nrows(), lam.nrows()));
    }
    Ok(())
}

/// `φ(λ) = ‖Λ⋆ − λλᵀ‖²_F`.
pub fn phi(lam: &DMatrix<f64>, lstar: &DMatrix<f64>) -> Result<f64> {
    check_pair(lam, lstar)?;
    Ok((lam * lam.transpose() - lstar).norm_squared())
}

/// `∇φ(λ) = 4(λλᵀ − Λ⋆)λ`.
pub fn grad_phi(lam: &DMatrix<f64>, lstar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pair(lam, lstar)?;
    let resid = lam * lam.transpose() - lstar;
    Ok(resid * lam * 4.0)
}

/// Rounding result.
#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    /// `proj_𝒟₁` image of the best iterate, p×R.
    pub factor: FactorMatrix,
    /// `φ(λᵏ)` for every iteration, `λᵏ = proj_𝒟₁(λ̄ᵏ)`.
    pub history: Vec<f64>,
    /// Index into `history` of the returned iterate.
    pub best_iter: usize,
    pub step: f64,
}

impl RoundingOutcome {
    pub fn best_phi(&self) -> f64 {
        self.history[self.best_iter]
    }

    pub fn write_history_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iter,phi,best_so_far")?;
        let mut best = f64::INFINITY;
        for (k, &v) in self.history.iter().enumerate() {
            best = best.min(v);
            writeln!(w, "{k},{v:.17e},{best:.17e}")?;
        }
        Ok(())
    }
}

/// Square-root factor of a PSD matrix: columns `√w_j q_j` by decreasing
/// eigenvalue, truncated or zero-padded to `r`. Each column's sign is chosen
/// so that its `(α, β)` rows sum to a nonnegative value.
pub fn sqrt_factor(lstar: &DMatrix<f64>, sel: &SelectionSet, r: usize) -> Result<DMatrix<f64>> {
    let eig = linalg::sym_eigen(lstar)?;
    let p = lstar.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut f = DMatrix::zeros(p, r);
    let k = 2 * sel.n();
    for (col, &j) in order.iter().take(r).enumerate() {
        let w = eig.eigenvalues[j].max(0.0);
        if w == 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(j);
        let sign = if q.rows(0, k).sum() < 0.0 { -1.0 } else { 1.0 };
        f.set_column(col, &(q * (sign * w.sqrt())));
    }
    Ok(f)
}

/// Round `lstar` (symmetrized and clamped to PSD on entry) by
/// three-operator splitting, returning the best iterate by `φ`.
pub fn tos_round(lstar: &DMatrix<f64>, prob: &LiftedProblem, opts: &RoundingOptions) -> Result<RoundingOutcome> {
    opts.validate()?;
    let p = prob.p();
    if lstar.nrows() != p || lstar.ncols() != p {
        return Err(mismatch("tos_round lifted matrix", format!("{p}x{p}"), format!("{}x{}", lstar.nrows(), lstar.ncols())));
    }
    if !linalg::all_finite(lstar) {
        return Err(Error::NonFinite("lifted matrix"));
    }
    let sel = prob.sel();
    let lstar = crate::solver::project_psd(&linalg::symmetrize(lstar))?;
    let norm2 = linalg::spectral_norm_sym(&lstar)?;
    let eta = match opts.step {
        StepSize::Fixed(e) => e,
        StepSize::Scaled(f) if norm2 > 0.0 => f / norm2,
        StepSize::Scaled(f) => f,
    };
    let d2 = NullspaceProjector::new(prob.m())?;

    // Columns past p start at zero and stay there: every map in the
    // recursion sends a zero column to zero.
    let active = opts.r.min(p);
    let start = sqrt_factor(&lstar, sel, active)?;
    let exact = (1e-12 * lstar.norm()).powi(2);
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut winner: Option<Run> = None;
    for restart in 0..opts.restarts {
        let bar = if restart == 0 { start.clone() } else { &start * random_orthogonal(active, &mut rng) };
        let run = run_tos(bar, &lstar, sel, &d2, eta, opts)?;
        log::debug!("rounding restart {restart}: best phi {:.3e} at {}", run.best_phi, run.best_iter);
        if winner.as_ref().is_none_or(|w| run.best_phi < w.best_phi) {
            winner = Some(run);
        }
        if winner.as_ref().is_some_and(|w| w.best_phi <= exact) {
            break;
        }
    }
    let run = winner.expect("at least one restart ran");
    let mut full = DMatrix::zeros(p, opts.r);
    full.columns_mut(0, active).copy_from(&run.lam);
    Ok(RoundingOutcome {
        factor: FactorMatrix::new(full)?,
        history: run.history,
        best_iter: run.best_iter,
        step: eta,
    })
}

struct Run {
    lam: DMatrix<f64>,
    history: Vec<f64>,
    best_iter: usize,
    best_phi: f64,
}

/// Haar-distributed orthogonal matrix from the QR factors of a Gaussian one.
fn random_orthogonal(n: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let signs = qr.r().diagonal().map(|d| if d < 0.0 { -1.0 } else { 1.0 });
    let mut q = qr.q();
    for (j, s) in signs.iter().enumerate() {
        q.column_mut(j).scale_mut(*s);
    }
    q
}

fn run_tos(
    mut bar: DMatrix<f64>,
    lstar: &DMatrix<f64>,
    sel: &SelectionSet,
    d2: &NullspaceProjector,
    eta: f64,
    opts: &RoundingOptions,
) -> Result<Run> {
    let mut history = Vec::with_capacity(opts.iters);
    let mut best: Option<(usize, DMatrix<f64>)> = None;
    let mut best_phi = f64::INFINITY;

    for k in 0..opts.iters {
        let lam = proj_d1(&bar, sel, opts.tie_break)?;
        let resid = &lam * lam.transpose() - lstar;
        let value = resid.norm_squared();
        if !value.is_finite() {
            return Err(Error::RoundingDiverged {
                iteration: k,
                last_finite: Box::new(bar),
            });
        }
        history.push(value);
        if value < best_phi {
            best_phi = value;
            best = Some((k, lam.clone()));
        }
        let grad = resid * &lam * 4.0;
        let mut arg = &lam * 2.0 - &bar;
        linalg::axpy(&mut arg, -eta, &grad);
        let hat = d2.apply(&arg)?;
        let next = bar - &lam + hat;
        if !linalg::all_finite(&next) {
            return Err(Error::RoundingDiverged {
                iteration: k + 1,
                last_finite: Box::new(lam),
            });
        }
        bar = next;
    }
    let (best_iter, lam) = best.expect("at least one iteration ran");
    Ok(Run { lam, history, best_iter, best_phi })
}

/// Read `U = P_u λ`, `V = P_v λ` off a factor and drop empty neurons.
pub fn extract_weights(fm: &FactorMatrix, sel: &SelectionSet) -> Result<NetworkWeights> {
    if fm.p() != sel.p() {
        return Err(mismatch("extract_weights rows", sel.p(), fm.p()));
    }
    let u = sel.rows_of(fm.lam(), sel.u());
    let v = sel.rows_of(fm.lam(), sel.v());
    Ok(NetworkWeights::new(u, v)?.pruned(PRUNE_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sel1() -> SelectionSet {
        SelectionSet::new(1, 1, 1).unwrap()
    }

    fn col(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_column_slice(4, 1, &[a, b, 7.0, -2.0])
    }

    #[test]
    fn d1_cases() {
        let s = sel1();
        let out = proj_d1(&col(3.0, 5.0), &s, TieBreak::KeepAlpha).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 5.0, 7.0, -2.0]);
        let out = proj_d1(&col(-1.0, 2.0), &s, TieBreak::KeepAlpha).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 2.0, 7.0, -2.0]);
        let out = proj_d1(&col(2.0, 2.0), &s, TieBreak::KeepAlpha).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 0.0, 7.0, -2.0]);
        let out = proj_d1(&col(2.0, 2.0), &s, TieBreak::PaperLiteral).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0, 7.0, -2.0]);
    }

    #[test]
    fn d2_zero_m_is_identity() {
        let lam = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let out = proj_d2(&lam, &DMatrix::zeros(2, 5)).unwrap();
        assert_eq!(out, lam);
    }

    #[test]
    fn gradient_vanishes_at_exact_factor() {
        let lam = DMatrix::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let lstar = &lam * lam.transpose();
        assert!(grad_phi(&lam, &lstar).unwrap().norm() < 1e-12);
        assert_eq!(grad_phi(&DMatrix::zeros(4, 2), &lstar).unwrap().norm(), 0.0);
    }

    #[test]
    fn zero_input_rounds_to_zero() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let prob = LiftedProblem::build(&x, &y, 0.1, false).unwrap();
        let opts = RoundingOptions { r: 3, iters: 5, ..Default::default() };
        let out = tos_round(&DMatrix::zeros(prob.p(), prob.p()), &prob, &opts).unwrap();
        assert!(out.history.iter().all(|&v| v == 0.0));
        assert_eq!(out.factor.lam().norm(), 0.0);
        let w = extract_weights(&out.factor, prob.sel()).unwrap();
        assert_eq!(w.width(), 0);
    }
}
