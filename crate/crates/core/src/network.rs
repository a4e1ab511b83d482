//! Reference two-layer ReLU network `ψ(x) = Σ_j (xᵀu_j)₊ v_jᵀ`, its
//! regularized squared-error loss, and a plain gradient-descent baseline.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg;

/// First-layer weights `U` (d×m) and second-layer weights `V` (c×m); column
/// `j` holds neuron `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl NetworkWeights {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(mismatch("network width", u.ncols(), v.ncols()));
        }
        if !linalg::all_finite(&u) || !linalg::all_finite(&v) {
            return Err(Error::NonFinite("network weights"));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(d: usize, c: usize, m: usize) -> Self {
        Self {
            u: DMatrix::zeros(d, m),
            v: DMatrix::zeros(c, m),
        }
    }

    /// Entries i.i.d. standard normal times `scale`; `U` is drawn before `V`,
    /// each in column-major order.
    pub fn random(d: usize, c: usize, m: usize, scale: f64, rng: &mut impl rand::Rng) -> Self {
        let mut draw = |r: usize, k: usize| {
            DMatrix::from_iterator(
                r,
                k,
                (0..r * k).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng)),
            )
        };
        let u = draw(d, m);
        let v = draw(c, m);
        Self { u, v }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn d(&self) -> usize {
        self.u.nrows()
    }

    pub fn c(&self) -> usize {
        self.v.nrows()
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    /// Scale the first layer by `t`.
    pub fn scale_first_layer(&self, t: f64) -> Self {
        Self {
            u: &self.u * t,
            v: self.v.clone(),
        }
    }

    /// Drop neurons whose first- and second-layer weights are both below
    /// `tol` in norm.
    pub fn pruned(&self, tol: f64) -> Self {
        let keep: Vec<usize> = (0..self.width())
            .filter(|&j| self.u.column(j).norm() >= tol || self.v.column(j).norm() >= tol)
            .collect();
        Self {
            u: self.u.select_columns(&keep),
            v: self.v.select_columns(&keep),
        }
    }

    pub fn to_json(&self, provenance: Option<String>) -> WeightsJson {
        WeightsJson {
            d: self.d(),
            c: self.c(),
            width: self.width(),
            u: row_major(&self.u),
            v: row_major(&self.v),
            provenance,
        }
    }

    pub fn from_json(j: &WeightsJson) -> Result<Self> {
        if j.u.len() != j.d * j.width || j.v.len() != j.c * j.width {
            return Err(mismatch(
                "weights json",
                format!("{}+{} entries", j.d * j.width, j.c * j.width),
                format!("{}+{}", j.u.len(), j.v.len()),
            ));
        }
        Self::new(
            DMatrix::from_row_slice(j.d, j.width, &j.u),
            DMatrix::from_row_slice(j.c, j.width, &j.v),
        )
    }
}

/// On-disk network weights: row-major `u` (d×width) and `v` (c×width), plus
/// an optional provenance string (for rounded networks, the SHA-256 of the
/// lifted matrix they came from).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub d: usize,
    pub c: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `(X U)₊ Vᵀ`.
pub fn forward(x: &DMatrix<f64>, w: &NetworkWeights) -> Result<DMatrix<f64>> {
    if x.ncols() != w.d() {
        return Err(mismatch("forward input columns", w.d(), x.ncols()));
    }
    let act = linalg::relu(&(x * &w.u));
    Ok(act * w.v.transpose())
}

/// `‖ψ(X) − Y‖²_F + (γ/2) Σ_j (‖u_j‖² + ‖v_j‖²)`.
pub fn training_loss(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &NetworkWeights, gamma: f64) -> Result<f64> {
    check_shapes(x, y, w)?;
    let r = forward(x, w)? - y;
    Ok(r.norm_squared() + 0.5 * gamma * (w.u.norm_squared() + w.v.norm_squared()))
}

/// Loss and its gradient with respect to `(U, V)`. The ReLU derivative at
/// zero is taken as 0.
pub fn loss_and_grad(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w: &NetworkWeights,
    gamma: f64,
) -> Result<(f64, NetworkWeights)> {
    check_shapes(x, y, w)?;
    let z = x * &w.u;
    let a = linalg::relu(&z);
    let r = &a * w.v.transpose() - y;
    let loss = r.norm_squared() + 0.5 * gamma * (w.u.norm_squared() + w.v.norm_squared());
    let gv = (r.transpose() * &a) * 2.0 + &w.v * gamma;
    let mut dz = (&r * &w.v) * 2.0;
    dz.zip_apply(&z, |g, zz| {
        if zz <= 0.0 {
            *g = 0.0
        }
    });
    let gu = x.transpose() * dz + &w.u * gamma;
    Ok((loss, NetworkWeights { u: gu, v: gv }))
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &NetworkWeights) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(mismatch("training rows", x.nrows(), y.nrows()));
    }
    if x.ncols() != w.d() {
        return Err(mismatch("input dimension", w.d(), x.ncols()));
    }
    if y.ncols() != w.c() {
        return Err(mismatch("output dimension", w.c(), y.ncols()));
    }
    Ok(())
}

/// Split `Xu` into its positive part `α = (Xu)₊` and `β = α − Xu`.
pub fn relu_split(xu: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let alpha = xu.map(|v| v.max(0.0));
    let beta = xu.map(|v| (-v).max(0.0));
    (alpha, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batch {
    Full,
    Mini(usize),
}

/// Gradient-descent baseline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub iters: usize,
    pub batch: Batch,
    pub seed: u64,
    pub init_scale: f64,
    pub restarts: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            iters: 1000,
            batch: Batch::Full,
            seed: 0,
            init_scale: 1.0,
            restarts: 5,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if self.iters == 0 {
            return bad("iters", "must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1");
        }
        if let Batch::Mini(0) = self.batch {
            return bad("batch", "mini-batch size must be at least 1");
        }
        if !(self.init_scale.is_finite()) {
            return bad("init_scale", "must be finite");
        }
        Ok(())
    }
}

/// Result of [`sgd_train`].
#[derive(Debug, Clone)]
pub struct SgdOutcome {
    pub weights: NetworkWeights,
    pub final_loss: f64,
    /// Loss recorded every `max(1, iters/1000)` steps of the winning restart,
    /// followed by the final loss.
    pub loss_curve: Vec<f64>,
    /// Final loss per restart; `None` marks a diverged restart.
    pub restart_losses: Vec<Option<f64>>,
    pub best_restart: usize,
}

/// Train a width-`m` network by gradient descent from several random
/// initializations and keep the one with the lowest final loss.
///
/// Restart `r` draws its initialization from ChaCha20 seeded with
/// `cfg.seed` on stream `r`.
pub fn sgd_train(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64, m: usize, cfg: &SgdConfig) -> Result<SgdOutcome> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: "must be at least 1".into(),
        });
    }
    if x.nrows() != y.nrows() {
        return Err(mismatch("training rows", x.nrows(), y.nrows()));
    }
    let mut best: Option<(usize, NetworkWeights, f64, Vec<f64>)> = None;
    let mut restart_losses = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let init = NetworkWeights::random(x.ncols(), y.ncols(), m, cfg.init_scale, &mut rng);
        match run_descent(x, y, gamma, init, cfg, &mut rng) {
            Some((w, loss, curve)) => {
                restart_losses.push(Some(loss));
                if best.as_ref().is_none_or(|b| loss < b.2) {
                    best = Some((r, w, loss, curve));
                }
            }
            None => {
                log::warn!("gradient descent restart {r} diverged");
                restart_losses.push(None);
            }
        }
    }
    let (best_restart, weights, final_loss, loss_curve) = best.ok_or(Error::AllRestartsDiverged(cfg.restarts))?;
    Ok(SgdOutcome {
        weights,
        final_loss,
        loss_curve,
        restart_losses,
        best_restart,
    })
}

/// One gradient-descent run. Returns `None` if the loss stops being finite.
fn run_descent(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    gamma: f64,
    init: NetworkWeights,
    cfg: &SgdConfig,
    rng: &mut ChaCha20Rng,
) -> Option<(NetworkWeights, f64, Vec<f64>)> {
    let n = x.nrows();
    let every = (cfg.iters / 1000).max(1);
    let mut ws = Workspace::new(x, y, init);
    let mut curve = Vec::with_capacity(cfg.iters / every + 2);
    let batch = match cfg.batch {
        Batch::Mini(b) if b < n => Some(b),
        _ => None,
    };
    for step in 0..cfg.iters {
        if step % every == 0 {
            let loss = ws.full_loss(gamma);
            if !loss.is_finite() {
                return None;
            }
            curve.push(loss);
        }
        match batch {
            None => ws.full_step(gamma, cfg.lr),
            Some(b) => {
                let rows = sample(rng, n, b).into_vec();
                ws.batch_step(&rows, gamma, cfg.lr);
            }
        }
        if !ws.finite() {
            return None;
        }
    }
    let loss = ws.full_loss(gamma);
    if !loss.is_finite() {
        return None;
    }
    curve.push(loss);
    Some((ws.into_weights(), loss, curve))
}

/// Preallocated buffers for full-batch steps.
struct Workspace<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: DMatrix<f64>,
    r: DMatrix<f64>,
    dz: DMatrix<f64>,
    gu: DMatrix<f64>,
    gv: DMatrix<f64>,
}

impl<'a> Workspace<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DMatrix<f64>, w: NetworkWeights) -> Self {
        let (n, m, c, d) = (x.nrows(), w.width(), y.ncols(), x.ncols());
        Self {
            x,
            y,
            u: w.u,
            v: w.v,
            pre: DMatrix::zeros(n, m),
            act: DMatrix::zeros(n, m),
            r: DMatrix::zeros(n, c),
            dz: DMatrix::zeros(n, m),
            gu: DMatrix::zeros(d, m),
            gv: DMatrix::zeros(c, m),
        }
    }

    fn finite(&self) -> bool {
        linalg::all_finite(&self.u) && linalg::all_finite(&self.v)
    }

    fn full_loss(&mut self, gamma: f64) -> f64 {
        self.forward_into();
        self.r.norm_squared() + 0.5 * gamma * (self.u.norm_squared() + self.v.norm_squared())
    }

    /// `pre ← X U`, `act ← pre₊`, `r ← act Vᵀ − Y`.
    fn forward_into(&mut self) {
        self.pre.gemm(1.0, self.x, &self.u, 0.0);
        self.act.copy_from(&self.pre);
        self.act.apply(|v| *v = v.max(0.0));
        self.r.copy_from(self.y);
        self.r.gemm(1.0, &self.act, &self.v.transpose(), -1.0);
    }

    fn full_step(&mut self, gamma: f64, lr: f64) {
        self.forward_into();
        self.gv.copy_from(&self.v);
        self.gv.gemm_tr(2.0, &self.r, &self.act, gamma);
        self.dz.gemm(2.0, &self.r, &self.v, 0.0);
        self.dz.zip_apply(&self.pre, |g, p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        self.gu.copy_from(&self.u);
        self.gu.gemm_tr(1.0, self.x, &self.dz, gamma);
        linalg::axpy(&mut self.u, -lr, &self.gu);
        linalg::axpy(&mut self.v, -lr, &self.gv);
    }

    /// Step on a row subset with the data term rescaled by `n / |rows|`.
    fn batch_step(&mut self, rows: &[usize], gamma: f64, lr: f64) {
        let xb = self.x.select_rows(rows);
        let yb = self.y.select_rows(rows);
        let w = NetworkWeights {
            u: self.u.clone(),
            v: self.v.clone(),
        };
        let scale = self.x.nrows() as f64 / rows.len() as f64;
        // Data-term gradient only, then the regularizer separately.
        let (_, g) = loss_and_grad(&xb, &yb, &w, 0.0).expect("shapes checked at entry");
        linalg::axpy(&mut self.u, -lr * scale, &g.u);
        linalg::axpy(&mut self.u, -lr * gamma, &w.u);
        linalg::axpy(&mut self.v, -lr * scale, &g.v);
        linalg::axpy(&mut self.v, -lr * gamma, &w.v);
    }

    fn into_weights(self) -> NetworkWeights {
        NetworkWeights { u: self.u, v: self.v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(u: &[f64], v: &[f64], d: usize, c: usize, m: usize) -> NetworkWeights {
        NetworkWeights::new(DMatrix::from_row_slice(d, m, u), DMatrix::from_row_slice(c, m, v)).unwrap()
    }

    #[test]
    fn identity_network_passes_identity() {
        let x = DMatrix::<f64>::identity(2, 2);
        let net = NetworkWeights::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(forward(&x, &net).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn negative_preactivation_is_killed() {
        let x = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let net = w(&[1.0], &[1.0], 1, 1, 1);
        assert_eq!(forward(&x, &net).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn forward_matches_per_neuron_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = NetworkWeights::random(4, 1, 3, 1.0, &mut rng).u().clone(); // 4x3 data
        let net = NetworkWeights::random(3, 2, 5, 1.0, &mut rng);
        let out = forward(&x, &net).unwrap();
        let mut expected = DMatrix::zeros(4, 2);
        for j in 0..5 {
            let a = (&x * net.u().column(j)).map(|v| v.max(0.0));
            expected += &a * net.v().column(j).transpose();
        }
        assert!((out - expected).amax() < 1e-14);
    }

    #[test]
    fn zero_network_loss_is_label_energy() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.5, 2.0]);
        let net = NetworkWeights::zeros(1, 1, 3);
        assert_eq!(training_loss(&x, &y, &net, 0.7).unwrap(), 4.25);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert_eq!(training_loss(&x, &y, &w(&[1.0], &[1.0], 1, 1, 1), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn relu_split_examples() {
        let (a, b) = relu_split(&DVector::from_vec(vec![2.0, -3.0]));
        assert_eq!(a.as_slice(), &[2.0, 0.0]);
        assert_eq!(b.as_slice(), &[0.0, 3.0]);
        let (a, b) = relu_split(&DVector::zeros(3));
        assert_eq!(a, DVector::zeros(3));
        assert_eq!(b, DVector::zeros(3));
    }

    #[test]
    fn shape_errors() {
        let x = DMatrix::zeros(2, 3);
        let net = NetworkWeights::zeros(2, 1, 1);
        assert!(forward(&x, &net).is_err());
        assert!(NetworkWeights::new(DMatrix::zeros(2, 2), DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn pruning_drops_dead_neurons() {
        let net = w(&[1.0, 0.0, 0.0], &[0.0, 0.0, 2.0], 1, 1, 3);
        let p = net.pruned(1e-10);
        assert_eq!(p.width(), 2);
    }

    #[test]
    fn json_round_trip() {
        let net = w(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], 2, 1, 2);
        let j = net.to_json(Some("abc".into()));
        assert_eq!(j.u, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(NetworkWeights::from_json(&j).unwrap(), net);
    }

    #[test]
    fn single_point_fit_converges() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DMatrix::from_row_slice(1, 1, &[1.0]);
        let cfg = SgdConfig {
            lr: 0.1,
            iters: 2000,
            ..SgdConfig::default()
        };
        let out = sgd_train(&x, &y, 0.0, 1, &cfg).unwrap();
        assert!(out.final_loss <= 1e-3, "final loss {}", out.final_loss);
        assert_eq!(out.restart_losses.len(), 5);
    }

    #[test]
    fn divergence_is_reported() {
        let x = DMatrix::from_row_slice(2, 1, &[10.0, 20.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let cfg = SgdConfig {
            lr: 10.0,
            iters: 200,
            restarts: 2,
            ..SgdConfig::default()
        };
        // Weight decay alone multiplies the weights by -9 per step.
        match sgd_train(&x, &y, 1.0, 4, &cfg) {
            Err(Error::AllRestartsDiverged(2)) => {}
            Ok(o) => assert!(o.restart_losses.iter().any(|l| l.is_none())),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn full_step_matches_reference_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = NetworkWeights::random(6, 1, 3, 1.0, &mut rng).u().clone();
        let y = NetworkWeights::random(6, 1, 2, 1.0, &mut rng).u().clone();
        let net = NetworkWeights::random(3, 2, 4, 1.0, &mut rng);
        let (_, g) = loss_and_grad(&x, &y, &net, 0.3).unwrap();
        let mut ws = Workspace::new(&x, &y, net.clone());
        ws.full_step(0.3, 1e-2);
        let stepped = ws.into_weights();
        assert!((stepped.u() - (net.u() - g.u() * 1e-2)).amax() < 1e-13);
        assert!((stepped.v() - (net.v() - g.v() * 1e-2)).amax() < 1e-13);
    }

    #[test]
    fn minibatch_training_runs() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = NetworkWeights::random(10, 1, 2, 1.0, &mut rng).u().clone();
        let y = NetworkWeights::random(10, 1, 1, 1.0, &mut rng).u().clone();
        let cfg = SgdConfig {
            lr: 1e-3,
            iters: 300,
            batch: Batch::Mini(4),
            restarts: 1,
            ..SgdConfig::default()
        };
        let out = sgd_train(&x, &y, 0.1, 3, &cfg).unwrap();
        assert!(out.loss_curve.iter().all(|l| l.is_finite()));
        assert!(out.final_loss < out.loss_curve[0]);
    }
}
