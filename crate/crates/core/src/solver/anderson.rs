//! Type-II Anderson extrapolation for a fixed-point map `x ↦ T(x)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Relative Tikhonov weight in the least-squares subproblem.
const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct Anderson {
    memory: usize,
    dx: VecDeque<DVector<f64>>,
    dg: VecDeque<DVector<f64>>,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    /// Cached `⟨dg_i, dg_j⟩`.
    gram: DMatrix<f64>,
}

impl Anderson {
    pub(crate) fn new(memory: usize) -> Self {
        Self {
            memory,
            dx: VecDeque::with_capacity(memory),
            dg: VecDeque::with_capacity(memory),
            prev: None,
            gram: DMatrix::zeros(memory, memory),
        }
    }

    pub(crate) fn reset(&mut self) {
        self.dx.clear();
        self.dg.clear();
        self.prev = None;
    }

    /// Given `x` and `fx = T(x)`, return the extrapolated next point, or
    /// `None` while there is no history or when the subproblem is
    /// degenerate.
    pub(crate) fn step(&mut self, x: DVector<f64>, fx: &DVector<f64>) -> Option<DVector<f64>> {
        let g = &x - fx;
        if let Some((px, pg)) = self.prev.take() {
            if self.dx.len() == self.memory {
                self.dx.pop_front();
                self.dg.pop_front();
                let k = self.memory;
                let kept = self.gram.view((1, 1), (k - 1, k - 1)).clone_owned();
                self.gram.view_mut((0, 0), (k - 1, k - 1)).copy_from(&kept);
            }
            let dg = &g - pg;
            let last = self.dx.len();
            for (i, other) in self.dg.iter().enumerate() {
                let v = other.dot(&dg);
                self.gram[(i, last)] = v;
                self.gram[(last, i)] = v;
            }
            self.gram[(last, last)] = dg.norm_squared();
            self.dx.push_back(&x - px);
            self.dg.push_back(dg);
        }
        let k = self.dx.len();
        let out = if k == 0 {
            None
        } else {
            let mut gram = self.gram.view((0, 0), (k, k)).clone_owned();
            let rhs = DVector::from_iterator(k, self.dg.iter().map(|d| d.dot(&g)));
            let reg = REGULARIZATION * gram.trace().max(f64::MIN_POSITIVE);
            for i in 0..k {
                gram[(i, i)] += reg;
            }
            gram.cholesky().map(|c| c.solve(&rhs)).and_then(|gamma| {
                let mut next = fx.clone();
                for i in 0..k {
                    next.axpy(-gamma[i], &self.dx[i], 1.0);
                    next.axpy(gamma[i], &self.dg[i], 1.0);
                }
                next.iter().all(|v| v.is_finite()).then_some(next)
            })
        };
        self.prev = Some((x, g));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// On an affine contraction the extrapolation reaches the fixed point
    /// after as many steps as the dimension.
    #[test]
    fn solves_affine_maps() {
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.05, 0.0, 0.0, 0.8, 0.1, 0.02, 0.0, 0.95]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let fixed = (DMatrix::identity(3, 3) - &a).lu().solve(&b).unwrap();
        let mut aa = Anderson::new(5);
        let mut x = DVector::zeros(3);
        for _ in 0..6 {
            let fx = &a * &x + &b;
            x = aa.step(x, &fx).unwrap_or(fx);
        }
        assert!((&x - &fixed).norm() < 1e-6, "{}", (&x - &fixed).norm());
    }

    #[test]
    fn first_call_has_no_history() {
        let mut aa = Anderson::new(3);
        assert!(aa.step(DVector::zeros(2), &DVector::from_element(2, 1.0)).is_none());
        aa.reset();
        assert!(aa.prev.is_none());
    }
}
