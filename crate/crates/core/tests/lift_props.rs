use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sdpnn::lifted::LiftedProblem;
use sdpnn::network::{self, relu_split, NetworkWeights};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// `(X, Y, U, V, γ)` with n ≤ 8, d ≤ 4, c ≤ 3, m ≤ 6.
fn instance() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, NetworkWeights, f64)> {
    (1usize..=8, 1usize..=4, 1usize..=3, 1usize..=6, 0.0f64..1.0).prop_flat_map(|(n, d, c, m, g)| {
        (matrix(n, d), matrix(n, c), matrix(d, m), matrix(c, m), Just(g))
            .prop_map(|(x, y, u, v, g)| (x, y, NetworkWeights::new(u, v).unwrap(), g))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_lift_reproduces_the_training_loss((x, y, w, g) in instance()) {
        let prob = LiftedProblem::build(&x, &y, g, false).unwrap();
        let lam = prob.exact_lift(&w).unwrap();
        let lifted = prob.objective(&lam).unwrap();
        let direct = network::training_loss(&x, &y, &w, g).unwrap();
        prop_assert!((lifted - direct).abs() <= 1e-8 * direct.abs().max(1.0), "{lifted} vs {direct}");
    }

    #[test]
    fn exact_lift_is_feasible((x, y, w, g) in instance()) {
        let prob = LiftedProblem::build(&x, &y, g, false).unwrap();
        let lam = prob.exact_lift(&w).unwrap();
        let scale = lam.norm().max(1.0);
        let r = prob.residuals(&lam).unwrap();
        prop_assert!(r.eq_residual.abs() <= 1e-8 * scale, "eq {}", r.eq_residual);
        prop_assert!(r.min_eig >= -1e-8 * scale, "eig {}", r.min_eig);
        prop_assert!(r.min_nonneg >= -1e-8 * scale, "nonneg {}", r.min_nonneg);
    }

    #[test]
    fn lift_factor_lies_in_the_null_space((x, y, w, g) in instance()) {
        let prob = LiftedProblem::build(&x, &y, g, false).unwrap();
        let f = prob.lift_factor(&w).unwrap();
        let mf = prob.m() * &f;
        prop_assert!(mf.amax() <= 1e-12 * (1.0 + f.amax()));
    }

    #[test]
    fn bias_flag_matches_explicit_column((x, y, _w, g) in instance()) {
        let with_flag = LiftedProblem::build(&x, &y, g, true).unwrap();
        let explicit = LiftedProblem::build(&sdpnn::lifted::with_ones_column(&x), &y, g, false).unwrap();
        prop_assert_eq!(with_flag.m(), explicit.m());
        prop_assert_eq!(with_flag.a0(), explicit.a0());
        prop_assert_eq!(with_flag.p(), x.ncols() + 1 + y.ncols() + 2 * x.nrows());
    }

    #[test]
    fn a0_is_symmetric((x, y, _w, g) in instance()) {
        let prob = LiftedProblem::build(&x, &y, g, false).unwrap();
        let a0 = prob.a0();
        prop_assert_eq!(a0, &a0.transpose());
    }

    #[test]
    fn first_layer_homogeneity((x, _y, w, _g) in instance(), t in 0.0f64..4.0) {
        let scaled = network::forward(&x, &w.scale_first_layer(t)).unwrap();
        let base = network::forward(&x, &w).unwrap() * t;
        prop_assert!((scaled - &base).amax() <= 1e-12 * (1.0 + base.amax()));
    }

    #[test]
    fn relu_split_properties(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let xu = DVector::from_vec(v);
        let (a, b) = relu_split(&xu);
        prop_assert!(a.iter().all(|&t| t >= 0.0) && b.iter().all(|&t| t >= 0.0));
        prop_assert_eq!(&a - &b, xu);
        prop_assert_eq!(a.dot(&b), 0.0);
    }
}

/// Every nonnegative complementary pair `(α, β)` with `α − β = z` is the
/// split of `z`: entrywise there is exactly one such pair.
#[test]
fn relu_split_is_the_only_complementary_decomposition() {
    let values = [-2.0, -1.5, 0.0, 1.0, 1.5, 2.0, 3.5];
    for n in 1..=6usize {
        for pattern in 0..3usize.pow(n as u32) {
            let mut code = pattern;
            let z = DVector::from_fn(n, |_, _| {
                let s = code % 3;
                code /= 3;
                [-1.5, 0.0, 2.0][s]
            });
            let (a, b) = relu_split(&z);
            for i in 0..n {
                let mut found = 0;
                for &alpha in &values {
                    for &beta in &values {
                        let admissible = alpha >= 0.0 && beta >= 0.0 && alpha * beta == 0.0 && alpha - beta == z[i];
                        if admissible {
                            assert_eq!((alpha, beta), (a[i], b[i]), "z={}", z[i]);
                            found += 1;
                        }
                    }
                }
                assert_eq!(found, 1, "z={}", z[i]);
            }
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 20 {
        let (n, d, c, m) = (5, 3, 2, 4);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0));
        let w = NetworkWeights::random(d, c, m, 1.0, &mut rng);
        if (&x * w.u()).iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let g = 0.3;
        let (_, grad) = network::loss_and_grad(&x, &y, &w, g).unwrap();
        let h = 1e-6;
        for (k, analytic) in grad.u().iter().enumerate() {
            let bump = |s: f64| {
                let mut u = w.u().clone();
                u[k] += s;
                network::training_loss(&x, &y, &NetworkWeights::new(u, w.v().clone()).unwrap(), g).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "u[{k}]: {fd} vs {analytic}");
        }
        for (k, analytic) in grad.v().iter().enumerate() {
            let bump = |s: f64| {
                let mut v = w.v().clone();
                v[k] += s;
                network::training_loss(&x, &y, &NetworkWeights::new(w.u().clone(), v).unwrap(), g).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "v[{k}]: {fd} vs {analytic}");
        }
        checked += 1;
    }
}
