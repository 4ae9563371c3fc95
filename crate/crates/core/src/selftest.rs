//! Fast invariant checks behind `varopt selftest`.

use ndarray::{array, Array1, Array2};
use rand::Rng as _;

use crate::bregman::MirrorMap;
use crate::diagnostics::{hamiltonian, lagrangian};
use crate::gradient_models::{kalman_bucy_step, kalman_steady_gain, KalmanState, StateSpaceGradientModel};
use crate::harness::problem::{generate_problem, ProblemKind};
use crate::linalg::norm2;
use crate::optimizers::{mirror_descent_step, nu_from_momentum};
use crate::rng::{component_rng, standard_normal, Stream};
use crate::schedules::{LearningRatePath, Schedule, Terminal};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    Check {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

fn round_trip() -> Check {
    let mut rng = component_rng(1, Stream::Problem);
    let maps = [
        MirrorMap::euclidean(),
        MirrorMap::quadratic_diagonal(array![0.5, 2.0, 4.0]).expect("valid diagonal"),
        MirrorMap::entropy(0.1, 10.0).expect("valid box"),
    ];
    let mut worst = 0.0f64;
    for map in &maps {
        for _ in 0..200 {
            let x: Array1<f64> = match map.name() {
                "entropy" => (0..3).map(|_| rng.random_range(0.1..10.0)).collect(),
                _ => (0..3).map(|_| standard_normal::<f64>(&mut rng) * 3.0).collect(),
            };
            let back = match map.grad(x.view()).and_then(|z| map.grad_dual(z.view())) {
                Ok(b) => b,
                Err(e) => return failed("mirror round trip", e),
            };
            worst = worst.max(norm2((&back - &x).view()) / (1.0 + norm2(x.view())));
        }
    }
    check("mirror round trip", worst, 1e-8)
}

fn sgd_reduction() -> Check {
    let mut rng = component_rng(2, Stream::Problem);
    let map = MirrorMap::euclidean();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x: Array1<f64> = (0..4).map(|_| standard_normal::<f64>(&mut rng)).collect();
        let g: Array1<f64> = (0..4).map(|_| standard_normal::<f64>(&mut rng)).collect();
        let phi = rng.random_range(0.0..2.0);
        match mirror_descent_step(&map, x.view(), g.view(), phi) {
            Ok(y) => worst = worst.max(norm2((&y - &(&x - &g.mapv(|v| v * phi))).view())),
            Err(e) => return failed("sgd reduction", e),
        }
    }
    check("sgd reduction", worst, 1e-12)
}

fn steady_gain() -> Check {
    let one = Array2::from_elem((1, 1), 1.0);
    let b = array![1.0];
    let k0 = kalman_steady_gain::<f64>(Array2::zeros((1, 1)).view(), one.view(), b.view(), 1.0);
    let k1 = kalman_steady_gain::<f64>(one.view(), one.view(), b.view(), 1.0);
    match (k0, k1) {
        (Ok(k0), Ok(k1)) => {
            let golden = (5.0f64.sqrt() - 1.0) / 2.0;
            check("steady gain", (k0[0] - 0.5).abs().max((k1[0] - golden).abs()), 1e-9)
        }
        (Err(e), _) | (_, Err(e)) => failed("steady gain", e),
    }
}

fn riccati_equilibrium() -> Check {
    let one = Array2::from_elem((1, 1), 1.0);
    let model = match StateSpaceGradientModel::new(one.clone(), one.clone(), array![1.0], 1.0, 1) {
        Ok(m) => m,
        Err(e) => return failed("riccati equilibrium", e),
    };
    let mut state = match KalmanState::new(1, Array2::zeros((1, 1))) {
        Ok(s) => s,
        Err(e) => return failed("riccati equilibrium", e),
    };
    let g = array![0.0];
    for _ in 0..20_000 {
        state = match kalman_bucy_step(&state, g.view(), 1e-3, &model) {
            Ok(s) => s,
            Err(e) => return failed("riccati equilibrium", e),
        };
    }
    check("riccati equilibrium", (state.p[[0, 0]] - (2.0f64.sqrt() - 1.0)).abs(), 1e-3)
}

fn terminal_learning_rate() -> Check {
    let s = match Schedule::constant(0.2, -0.1, 0.4, Terminal::Exponent(0.3), 2.0) {
        Ok(s) => s,
        Err(e) => return failed("learning-rate terminal value", e),
    };
    match LearningRatePath::new(s.clone()).value(2.0) {
        Ok(v) => check("learning-rate terminal value", (v - (0.3f64 - s.gamma(2.0)).exp()).abs(), 1e-9),
        Err(e) => failed("learning-rate terminal value", e),
    }
}

fn legendre() -> Check {
    let mut rng = component_rng(3, Stream::Problem);
    let maps = [MirrorMap::euclidean(), MirrorMap::entropy(1e-3, 1e3).expect("valid box")];
    let mut worst = 0.0f64;
    for map in &maps {
        for _ in 0..100 {
            let (a, b, g) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = match Schedule::constant(a, b, g, Terminal::Exponent(0.0), 1.0) {
                Ok(s) => s,
                Err(e) => return failed("legendre identity", e),
            };
            let x: Array1<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
            let p: Array1<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let f = rng.random_range(0.0..1.0);
            let res = nu_from_momentum(map, x.view(), p.view(), a, g).and_then(|nu| {
                let h = hamiltonian(map, f, &s, 0.0, x.view(), p.view())?;
                let l = lagrangian(map, f, &s, 0.0, x.view(), nu.view())?;
                Ok((h + l - p.dot(&nu)).abs())
            });
            match res {
                Ok(r) => worst = worst.max(r),
                Err(e) => return failed("legendre identity", e),
            }
        }
    }
    check("legendre identity", worst, 1e-8)
}

fn full_batch() -> Check {
    let mut rng = component_rng(4, Stream::Problem);
    let p = match generate_problem::<f64>(ProblemKind::Quadratic, 3, 30, 0.0, &mut rng) {
        Ok(p) => p,
        Err(e) => return failed("full-batch gradient", e),
    };
    let x = array![0.3, -0.1, 2.0];
    match p.sample_minibatch_gradient(x.view(), 30, &mut rng) {
        Ok(g) => check("full-batch gradient", norm2((&g - &p.full_gradient(x.view())).view()), 0.0),
        Err(e) => failed("full-batch gradient", e),
    }
}

/// Runs every check; takes well under a second.
pub fn run_selftest() -> Vec<Check> {
    vec![
        round_trip(),
        sgd_reduction(),
        steady_gain(),
        riccati_equilibrium(),
        terminal_learning_rate(),
        legendre(),
        full_batch(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
