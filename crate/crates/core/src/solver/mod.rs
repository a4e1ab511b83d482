//! Operator-splitting solver for the doubly nonnegative relaxation
//!
//! ```text
//! minimize    f(Λ) = ‖P_α Λ P_vᵀ − Y‖²_F + (γ/2)(tr P_u Λ P_uᵀ + tr P_v Λ P_vᵀ)
//! subject to  ⟨A0, Λ⟩ = 0,  Λ ⪰ 0,  P_αβ Λ P_αβᵀ ≥ 0.
//! ```
//!
//! Both parts of `A0 = sym(P_αᵀP_β) + MᵀM` are nonnegative on the cone, so
//! the equality holds exactly when `MΛ = 0` and `Λ_{α_i β_i} = 0` for every
//! `i`. With `N` an orthonormal basis of `null(M)`, the PSD part becomes
//! `Λ = N G Nᵀ` with `G ⪰ 0`.
//!
//! ADMM runs over the split `L = N G Nᵀ`. The `L` block carries `f`, the
//! entrywise sign constraints and the pinned zeros, all separable by entry,
//! so its proximal step is closed form. The `G` block is an exact PSD
//! projection of size `p − n`.

mod anderson;
pub mod projection;

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::LiftedProblem;
use crate::linalg;

pub use projection::{project_dnn_slab, project_psd};

const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;
/// Normalized residual ratios that trigger a penalty change. Lowering the
/// penalty is made deliberately harder than raising it.
const RHO_INCREASE_RATIO: f64 = 10.0;
const RHO_DECREASE_RATIO: f64 = 100.0;
/// An extrapolated point is kept only if its fixed-point residual does not
/// grow by more than this factor.
const SAFEGUARD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Initial ADMM penalty; `None` starts from `γ` clamped to
    /// `[1e-3, 1]`.
    pub rho: Option<f64>,
    pub adaptive_rho: bool,
    /// Iterations between penalty ratio tests.
    pub rho_interval: usize,
    pub over_relaxation: f64,
    /// Anderson acceleration memory; 0 runs plain ADMM.
    #[serde(default)]
    pub anderson_memory: usize,
    /// Emit a progress line (and evaluate the dual bound) every `log_every`
    /// iterations; 0 disables.
    pub log_every: usize,
    /// Known upper bound on the optimal value (for example the training
    /// loss of any network). Only used to tighten `dual_bound`.
    pub upper_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            rho: None,
            adaptive_rho: true,
            rho_interval: 25,
            over_relaxation: 1.6,
            anderson_memory: 10,
            log_every: 100,
            upper_bound: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if self.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if self.eps_abs.is_nan() || self.eps_abs <= 0.0 {
            return bad("eps_abs", "must be positive");
        }
        if self.eps_rel.is_nan() || self.eps_rel <= 0.0 {
            return bad("eps_rel", "must be positive");
        }
        if matches!(self.rho, Some(r) if !(r > 0.0 && r.is_finite())) {
            return bad("rho", "must be positive");
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return bad("over_relaxation", "must lie in [1.0, 1.9]");
        }
        if matches!(self.upper_bound, Some(b) if !(b >= 0.0 && b.is_finite())) {
            return bad("upper_bound", "must be finite and nonnegative");
        }
        if self.rho_interval == 0 {
            return bad("rho_interval", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

/// One solver iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
    pub eq_residual: f64,
    pub rho: f64,
    /// Lagrangian lower bound, evaluated on logged iterations only.
    pub dual_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub seconds: f64,
}

impl SolverTrace {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iter,primal_res,dual_res,objective,eq_residual,rho,dual_bound")?;
        for r in &self.records {
            let bound = r.dual_bound.map(|b| format!("{b:.17e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.iter, r.primal_res, r.dual_res, r.objective, r.eq_residual, r.rho, bound
            )?;
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub lambda: DMatrix<f64>,
    pub objective: f64,
    pub eq_residual: f64,
    pub min_eig: f64,
    pub min_nonneg: f64,
    /// Certified lower bound on the optimal value, or `-inf`.
    pub dual_bound: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

/// Orthonormal basis (p×(p−n)) of `null(M)`.
///
/// `M Mᵀ = 2I + X Xᵀ`, so the nonzero eigenvalues of `MᵀM` are at least 2
/// and the null space is separated by a fixed gap.
pub fn nullspace_basis(prob: &LiftedProblem) -> Result<DMatrix<f64>> {
    let m = prob.m();
    let gram = linalg::symmetrize(&(m.transpose() * m));
    let eig = linalg::sym_eigen(&gram)?;
    let cols: Vec<usize> = (0..gram.nrows()).filter(|&j| eig.eigenvalues[j] < 1.0).collect();
    let q = prob.p() - prob.sel().n();
    if cols.len() != q {
        return Err(Error::NumericalFailure(format!(
            "null space of M has dimension {}, expected {q}",
            cols.len()
        )));
    }
    Ok(eig.eigenvectors.select_columns(&cols))
}

/// Entrywise proximal step of the `L` block: `f`, the `(α, β)` sign
/// constraints and the pinned `Λ_{α_i β_i} = 0` entries.
fn prox_entries(prob: &LiftedProblem, t: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let sel = prob.sel();
    let mut l = linalg::symmetrize(t);
    for (i, &a) in sel.alpha().iter().enumerate() {
        for (k, &v) in sel.v().iter().enumerate() {
            let val = (prob.y()[(i, k)] + rho * l[(a, v)]) / (1.0 + rho);
            l[(a, v)] = val;
            l[(v, a)] = val;
        }
    }
    let shift = 0.5 * prob.gamma() / rho;
    for &j in sel.u().iter().chain(sel.v()) {
        l[(j, j)] -= shift;
    }
    let k = 2 * sel.n();
    for j in 0..k {
        for i in 0..k {
            if l[(i, j)] < 0.0 {
                l[(i, j)] = 0.0;
            }
        }
    }
    for (&a, &b) in sel.alpha().iter().zip(sel.beta()) {
        l[(a, b)] = 0.0;
        l[(b, a)] = 0.0;
    }
    l
}

/// `N Π_PSD(Nᵀ W N) Nᵀ` together with the reduced PSD factor.
fn project_reduced(basis: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = linalg::symmetrize(&(basis.transpose() * w * basis));
    let g = project_psd(&a)?;
    let z = linalg::symmetrize(&(basis * &g * basis.transpose()));
    Ok((g, z))
}

/// A-priori bound on `tr Λ` over feasible points with `f(Λ) ≤ f_ub`, where
/// `f_ub` is `f(0) = ‖Y‖²` or a smaller caller-supplied upper bound.
///
/// There `tr Λ_uu + tr Λ_vv ≤ 2 f_ub/γ`, and `MΛ = 0` with the pinned zeros
/// gives `tr Λ_αα + tr Λ_ββ = ⟨XᵀX, Λ_uu⟩ ≤ ‖X‖₂² tr Λ_uu`.
fn trace_bound(prob: &LiftedProblem, upper: Option<f64>) -> Result<f64> {
    if prob.gamma() <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let x = prob.x();
    let xtx = linalg::symmetrize(&(x.transpose() * x));
    let norm_sq = linalg::spectral_norm_sym(&xtx)?;
    let f_ub = upper.map_or(prob.y().norm_squared(), |b| b.min(prob.y().norm_squared()));
    Ok(2.0 * (1.0 + norm_sq) * f_ub / prob.gamma())
}

/// Lagrangian lower bound at the `L`-block iterate.
///
/// `L` minimizes `f + ⟨S, ·⟩` over the entrywise constraint set when
/// `S = ρ(L − T)` for the proximal input `T`, so that part of the dual
/// function is exact. Any positive curvature left in `Nᵀ S N` is charged
/// against the trace bound `tau`.
fn lagrangian_bound(
    prob: &LiftedProblem,
    basis: &DMatrix<f64>,
    l: &DMatrix<f64>,
    t: &DMatrix<f64>,
    rho: f64,
    tau: f64,
) -> Result<f64> {
    let s = (l - t) * rho;
    let value = prob.objective_unchecked(l) + linalg::frob_inner(&s, l);
    let reduced = linalg::symmetrize(&(basis.transpose() * &s * basis));
    let lmax = -linalg::min_eigenvalue(&(-reduced))?;
    log::debug!("lagrangian={value:.8e} lmax={lmax:.3e} tau={tau:.3e}");
    if lmax <= 0.0 {
        Ok(value)
    } else if tau.is_finite() {
        Ok(value - lmax * tau)
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

fn pack(z: &DMatrix<f64>, u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(z.len() + u.len(), z.iter().chain(u.iter()).copied())
}

fn unpack(x: &DVector<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = p * p;
    (
        DMatrix::from_column_slice(p, p, &x.as_slice()[..n]),
        DMatrix::from_column_slice(p, p, &x.as_slice()[n..]),
    )
}

/// Solve the relaxation.
///
/// An eigendecomposition failure or a non-finite residual ends the run with
/// `status = NumericalFailure` and the last finite iterate.
pub fn solve(prob: &LiftedProblem, opts: &SolverOptions) -> Result<(LiftedSolution, SolverTrace)> {
    opts.validate()?;
    let start = Instant::now();
    let p = prob.p();
    let basis = nullspace_basis(prob)?;
    let tau = trace_bound(prob, opts.upper_bound)?;

    let mut rho = opts.rho.unwrap_or_else(|| prob.gamma().clamp(1e-3, 1.0));
    let mut z = DMatrix::<f64>::zeros(p, p);
    let mut u = DMatrix::<f64>::zeros(p, p);
    let mut trace = SolverTrace::default();
    let mut status = SolverStatus::MaxIterations;
    let mut best_bound = f64::NEG_INFINITY;
    let mut iterations = 0;
    let alpha = opts.over_relaxation;
    let mut accel = (opts.anderson_memory > 0).then(|| anderson::Anderson::new(opts.anderson_memory));
    let mut fallback: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut extrapolated = false;
    let mut last_fixed_point_res = f64::INFINITY;
    let mut last_z = z.clone();
    let (mut accepted, mut rejected_count, mut rho_changes) = (0usize, 0usize, 0usize);

    for iter in 1..=opts.max_iters {
        iterations = iter;
        let t = &z - &u;
        let l = prox_entries(prob, &t, rho);
        let l_hat = &l * alpha + &z * (1.0 - alpha);
        let w = &l_hat + &u;
        let z_new = match project_reduced(&basis, &w) {
            Ok((_, zn)) => zn,
            Err(e) => {
                log::error!("projection failed at iteration {iter}: {e}");
                status = SolverStatus::NumericalFailure;
                break;
            }
        };
        let u_new = w - &z_new;

        let rho_used = rho;
        let primal_res = (&l - &z_new).norm();
        let dual_res = rho * (&z_new - &z).norm();
        let eq_residual = linalg::frob_inner(prob.a0(), &z_new);
        let objective = prob.objective_unchecked(&z_new);
        if ![primal_res, dual_res, eq_residual, objective].iter().all(|v| v.is_finite()) {
            log::error!("non-finite residuals at iteration {iter}");
            status = SolverStatus::NumericalFailure;
            break;
        }

        let scale_primal = l.norm().max(z_new.norm());
        let scale_dual = rho * u_new.norm();
        let primal_tol = opts.eps_abs + opts.eps_rel * scale_primal;
        let dual_tol = opts.eps_abs + opts.eps_rel * scale_dual;
        let eq_tol = opts.eps_abs + opts.eps_rel * scale_primal;
        let converged = primal_res <= primal_tol && dual_res <= dual_tol && eq_residual.abs() <= eq_tol;

        let logged = opts.log_every > 0 && iter % opts.log_every == 0;
        let dual_bound = if logged || converged {
            match lagrangian_bound(prob, &basis, &l, &t, rho_used, tau) {
                Ok(b) => {
                    best_bound = best_bound.max(b);
                    Some(b)
                }
                Err(_) => None,
            }
        } else {
            None
        };
        trace.records.push(IterRecord {
            iter,
            primal_res,
            dual_res,
            objective,
            eq_residual,
            rho,
            dual_bound,
        });
        if logged {
            log::info!(
                "iter={iter} obj={objective:.8e} pres={primal_res:.3e} dres={dual_res:.3e} eq={eq_residual:.3e} rho={rho:.3e} bound={:.8e}",
                dual_bound.unwrap_or(f64::NEG_INFINITY)
            );
        }
        if converged {
            status = SolverStatus::Optimal;
            z = z_new;
            break;
        }

        let fixed_point_res = ((&z - &z_new).norm_squared() + (&u - &u_new).norm_squared()).sqrt();
        let rejected = extrapolated && fixed_point_res > SAFEGUARD * last_fixed_point_res;
        match (accel.as_mut(), fallback.take()) {
            (Some(aa), Some((fz, fu))) if rejected => {
                aa.reset();
                rejected_count += 1;
                extrapolated = false;
                z = fz;
                u = fu;
            }
            (Some(aa), _) => {
                last_fixed_point_res = fixed_point_res;
                let x = pack(&z, &u);
                let fx = pack(&z_new, &u_new);
                match aa.step(x, &fx) {
                    Some(next) => {
                        (z, u) = unpack(&next, p);
                        fallback = Some((z_new.clone(), u_new));
                        extrapolated = true;
                        accepted += 1;
                    }
                    None => {
                        z = z_new.clone();
                        u = u_new;
                        extrapolated = false;
                    }
                }
            }
            (None, _) => {
                z = z_new.clone();
                u = u_new;
            }
        }
        last_z = z_new;

        if opts.adaptive_rho && iter % opts.rho_interval == 0 {
            let pr = primal_res / scale_primal.max(f64::MIN_POSITIVE);
            let dr = dual_res / scale_dual.max(f64::MIN_POSITIVE);
            let new_rho = if pr > RHO_INCREASE_RATIO * dr {
                (rho * 2.0).min(RHO_MAX)
            } else if dr > RHO_DECREASE_RATIO * pr {
                (rho / 2.0).max(RHO_MIN)
            } else {
                rho
            };
            if new_rho != rho {
                u *= rho / new_rho;
                rho = new_rho;
                rho_changes += 1;
                if let Some(aa) = accel.as_mut() {
                    aa.reset();
                }
                fallback = None;
                extrapolated = false;
            }
        }
    }

    log::info!("extrapolations={accepted} rejected={rejected_count} rho_changes={rho_changes}");
    // Extrapolated points may leave the cone; report the last projected one.
    if status != SolverStatus::Optimal {
        z = last_z;
    }
    let objective = prob.objective_unchecked(&z);
    let eq_residual = linalg::frob_inner(prob.a0(), &z);
    let min_eig = linalg::min_eigenvalue(&z).unwrap_or(f64::NAN);
    let min_nonneg = prob.min_nonneg(&z);
    trace.seconds = start.elapsed().as_secs_f64();
    Ok((
        LiftedSolution {
            lambda: z,
            objective,
            eq_residual,
            min_eig,
            min_nonneg,
            dual_bound: best_bound,
            status,
            iterations,
        },
        trace,
    ))
}
