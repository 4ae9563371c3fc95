use ndarray::{array, Array1};
use varopt_core::bregman::MirrorMap;
use varopt_core::diagnostics::{action_estimate, energy, energy_path, ensemble_report, qv_accumulate, rate_bound_check, Trajectory};
use varopt_core::rng::{component_rng, standard_normal, Stream};
use varopt_core::schedules::{Schedule, Terminal};

fn flat(horizon: f64) -> Schedule<f64> {
    Schedule::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), horizon).unwrap()
}

/// Harmonic potential `f(x) = ½‖x‖²` sampled along `path` on `n` panels of [0, 1].
fn oscillator(path: impl Fn(f64) -> Array1<f64>, n: usize) -> Trajectory<f64> {
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let xs: Vec<Array1<f64>> = times.iter().map(|&t| path(t)).collect();
    let gaps = xs.iter().map(|x| 0.5 * x.dot(x)).collect();
    Trajectory::from_states(times, xs, gaps, &MirrorMap::euclidean(), &flat(1.0)).unwrap()
}

#[test]
fn stationary_path_has_smaller_action() {
    // L = ½‖ν‖² − ½‖x‖² is stationary on (cos t, sin t); perturbations vanish at both ends.
    let map = MirrorMap::euclidean();
    let s = flat(1.0);
    let n = 2000;
    let base = |t: f64| array![t.cos(), t.sin()];
    let a0 = action_estimate(&map, &s, &[oscillator(base, n)]).unwrap();
    for eps in [-0.1, -0.05, 0.05, 0.1] {
        let bumped = move |t: f64| {
            let bump = eps * (std::f64::consts::PI * t).sin();
            array![t.cos() + bump, t.sin() - bump]
        };
        let a1 = action_estimate(&map, &s, &[oscillator(bumped, n)]).unwrap();
        assert!(a1 > a0, "eps = {eps}: {a1} <= {a0}");
    }
}

#[test]
fn action_duplication_and_terminal_linearity() {
    let map = MirrorMap::euclidean();
    let s = Schedule::constant(0.2, 0.1, 0.3, Terminal::Exponent(0.7), 1.0).unwrap();
    let t = oscillator(|t| array![1.0 - t, t * t], 50);
    let one = action_estimate(&map, &s, std::slice::from_ref(&t)).unwrap();
    let three = action_estimate(&map, &s, &[t.clone(), t.clone(), t.clone()]).unwrap();
    assert!((one - three).abs() <= 1e-12 * one.abs().max(1.0));
    // Raising only the terminal gap by Δ raises the action by e^{δ_T}·Δ minus
    // the Lagrangian's own trapezoid weight on that last point.
    let mut bumped = t.clone();
    *bumped.loss_gap.last_mut().unwrap() += 1.0;
    let two = action_estimate(&map, &s, &[bumped]).unwrap();
    let h = t.times[t.len() - 1] - t.times[t.len() - 2];
    let want = 0.7f64.exp() - 0.5 * h * (0.3f64 + 0.1).exp();
    assert!((two - one - want).abs() < 1e-12);
}

#[test]
fn action_of_constant_optimum_is_zero() {
    let map = MirrorMap::euclidean();
    let t = oscillator(|_| array![0.0, 0.0], 10);
    assert_eq!(action_estimate(&map, &flat(1.0), &[t]).unwrap(), 0.0);
}

#[test]
fn energy_matches_direct_formula() {
    let mut rng = component_rng(21, Stream::Problem);
    let map = MirrorMap::quadratic_diagonal(array![1.0, 3.0]).unwrap();
    let s = Schedule::constant(0.4, -0.3, 0.1, Terminal::Exponent(0.0), 2.0).unwrap();
    for _ in 0..50 {
        let v: Vec<f64> = (0..7).map(|_| standard_normal::<f64>(&mut rng)).collect();
        let (x, nu, xs) = (array![v[0], v[1]], array![v[2], v[3]], array![v[4], v[5]]);
        let gap = v[6].abs();
        let qv = 0.3;
        let y = &x + &nu.mapv(|c| c * (-0.4f64).exp());
        let d = &xs - &y;
        let want = 0.5 * (d[0] * d[0] + 3.0 * d[1] * d[1]) + (-0.3f64).exp() * gap - qv;
        let got = energy(&map, gap, &s, 1.0, x.view(), nu.view(), qv, xs.view()).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
        assert!(got >= -qv);
    }
}

#[test]
fn brownian_quadratic_variation() {
    let d = 3;
    let dt: f64 = 1e-4;
    let steps = 10_000;
    let mut total = 0.0;
    for seed in 0..10 {
        let mut rng = component_rng(seed, Stream::Gradient);
        let mut acc = 0.0;
        for _ in 0..steps {
            let inc: Array1<f64> = (0..d).map(|_| dt.sqrt() * standard_normal::<f64>(&mut rng)).collect();
            acc = qv_accumulate(acc, inc.view(), inc.view());
        }
        total += acc;
    }
    let mean = total / 10.0;
    assert!((mean - d as f64).abs() <= 0.05 * d as f64, "mean QV {mean}");
}

#[test]
fn frozen_optimum_has_zero_ratio_and_energy() {
    let map = MirrorMap::euclidean();
    let s = flat(1.0);
    let xs = array![0.5, -0.5];
    let times: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let t = Trajectory::from_states(times, vec![xs.clone(); 21], vec![0.0; 21], &map, &s).unwrap();
    let rep = ensemble_report(&map, &s, xs.view(), &[t.clone(), t.clone()]).unwrap();
    assert!(rep.mean_energy.iter().all(|&e| e == 0.0));
    assert!(rep.se_energy.iter().all(|&e| e == 0.0));
    let rb = rate_bound_check(&rep, &s, 0.1, 1.0);
    assert_eq!(rb.max_ratio, 0.0);
    assert!(rb.bounded && rb.fit_holds);
    assert_eq!(energy_path(&map, &s, &t, xs.view()).unwrap().len(), 20);
}
