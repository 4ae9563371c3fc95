mod common;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use varopt_core::bregman::MirrorMap;
use varopt_core::diagnostics::qv_accumulate;
use varopt_core::gradient_models::{kalman_discrete_step, stationary_covariance, KalmanState};
use varopt_core::linalg::{self, matrix_exp};
use varopt_core::optimizers::{mirror_descent_step, momentum_from_nu, nu_from_momentum};

use common::to_na;

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..20.0, n)
}

fn real(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

fn maps() -> Vec<MirrorMap<f64>> {
    vec![
        MirrorMap::euclidean(),
        MirrorMap::quadratic_diagonal(Array1::from(vec![0.5, 1.0, 4.0])).unwrap(),
        MirrorMap::entropy(0.01, 100.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn divergence_is_nonnegative_and_zero_on_diagonal(x in positive(3), y in positive(3)) {
        let (x, y) = (Array1::from(x), Array1::from(y));
        for m in maps() {
            prop_assert!(m.divergence(y.view(), x.view()).unwrap() >= 0.0);
            prop_assert_eq!(m.divergence(x.view(), x.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn duality_of_divergences(x in positive(3), y in positive(3)) {
        let (x, y) = (Array1::from(x), Array1::from(y));
        for m in maps() {
            let scale = 1.0 + m.divergence(x.view(), y.view()).unwrap().abs();
            prop_assert!(m.dual_divergence_check(x.view(), y.view()).unwrap() <= 1e-9 * scale);
        }
    }

    #[test]
    fn momentum_round_trip(x in positive(3), p in real(3), a in -1.0f64..1.0, g in -1.0f64..1.0) {
        let (x, p) = (Array1::from(x), Array1::from(p).mapv(|v| v * 0.1));
        for m in maps() {
            let nu = nu_from_momentum(&m, x.view(), p.view(), a, g).unwrap();
            let back = momentum_from_nu(&m, x.view(), nu.view(), a, g).unwrap();
            for i in 0..3 {
                prop_assert!((back[i] - p[i]).abs() <= 1e-9 * (1.0 + p[i].abs()));
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_identity(x in positive(3), g in real(3)) {
        let (x, g) = (Array1::from(x), Array1::from(g));
        for m in maps() {
            let out = mirror_descent_step(&m, x.view(), g.view(), 0.0).unwrap();
            for i in 0..3 {
                prop_assert!((out[i] - x[i]).abs() <= 1e-12 * x[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn self_bracket_never_decreases(prev in -5.0f64..5.0, d in real(4)) {
        let d = Array1::from(d);
        prop_assert!(qv_accumulate(prev, d.view(), d.view()) >= prev);
    }

    #[test]
    fn matrix_exponential_matches_nalgebra(v in prop::collection::vec(-3.0f64..3.0, 9)) {
        let m = Array2::from_shape_vec((3, 3), v).unwrap();
        let ours = matrix_exp(m.view()).unwrap();
        let theirs = to_na(&m).exp();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((ours[[i, j]] - theirs[(i, j)]).abs() <= 1e-10 * (1.0 + theirs[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn filter_covariance_stays_symmetric_psd(
        a in prop::collection::vec(-0.9f64..0.9, 4),
        l in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-2.0f64..2.0, 2),
        sigma in 0.05f64..2.0,
        obs in prop::collection::vec(-5.0f64..5.0, 12),
    ) {
        let a = Array2::from_shape_vec((2, 2), a).unwrap();
        let l = Array2::from_shape_vec((2, 2), l).unwrap();
        let b = Array1::from(b);
        let mut s = KalmanState::new(1, Array2::eye(2)).unwrap();
        for g in obs {
            s = kalman_discrete_step(&s, Array1::from(vec![g]).view(), a.view(), l.view(), b.view(), sigma).unwrap();
            prop_assert_eq!(linalg::asymmetry(s.p.view()), 0.0);
            prop_assert!(linalg::sym_eigenvalues(s.p.view())[0] >= -1e-12);
        }
    }

    #[test]
    fn stationary_covariance_solves_lyapunov(
        // Row sums stay below 0.9, so the spectral radius is below one.
        a in prop::collection::vec(-0.45f64..0.45, 4),
        l in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = Array2::from_shape_vec((2, 2), a).unwrap();
        let l = Array2::from_shape_vec((2, 2), l).unwrap();
        let ours = stationary_covariance(a.view(), l.view()).unwrap();
        // Oracle: (I − Ã⊗Ã) vec Σ = vec(L̃L̃ᵀ).
        let an = to_na(&a);
        let q = to_na(&l) * to_na(&l).transpose();
        let kron = an.kronecker(&an);
        let lhs = DMatrix::<f64>::identity(4, 4) - kron;
        let rhs = nalgebra::DVector::from_iterator(4, q.iter().copied());
        let sol = lhs.lu().solve(&rhs).unwrap();
        let sigma = DMatrix::from_column_slice(2, 2, sol.as_slice());
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((ours[[i, j]] - sigma[(i, j)]).abs() <= 1e-9 * (1.0 + sigma[(i, j)].abs()));
            }
        }
    }
}
