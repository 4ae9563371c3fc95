//! Variational quantities along trajectories (Lagrangian, action, energy,
//! Hamiltonian, realized brackets) and ensemble checks of the energy decay
//! and convergence-rate claims.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::bregman::MirrorMap;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::scalar::Real;
use crate::schedules::Schedule;

/// One optimizer run on a mesh.
///
/// All per-time vectors have one entry per mesh time. `nu[k]` is the
/// displacement `(X_{k+1} − X_k)/(t_{k+1} − t_k)`; the last entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub x: Vec<Array1<T>>,
    pub nu: Vec<Array1<T>>,
    /// `f(X_k) − f(x*)`; NaN when the stream has no loss landscape.
    pub loss_gap: Vec<T>,
    /// Learning rate at each time (length-1 vectors for scalar paths).
    pub phi: Vec<Array1<T>>,
    /// Filtered gradient estimate used by the optimizer.
    pub gradient_estimate: Vec<Array1<T>>,
    /// Observation minus true gradient; recorded by the run loop only.
    pub noise: Vec<Array1<T>>,
    /// Trace of the filter covariance (0 for filters without one).
    pub filter_trace: Vec<T>,
    /// Norm of the filter gain, or the scalar filter coefficient.
    pub filter_gain: Vec<T>,
    /// Realized bracket `[∇h(Y), Y]` with `Y_k = X_{k+1}` (and `Y_K = X_K`).
    pub qv: Vec<T>,
    /// Accumulated `‖e^{α+β}Δt · noise‖²`, the martingale QV proxy.
    pub martingale_qv: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            nu: Vec::with_capacity(n),
            loss_gap: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            gradient_estimate: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
            filter_trace: Vec::with_capacity(n),
            filter_gain: Vec::with_capacity(n),
            qv: Vec::with_capacity(n),
            martingale_qv: Vec::with_capacity(n),
        }
    }

    /// A bare path, for evaluating diagnostics on hand-made trajectories.
    pub fn from_states(times: Vec<T>, x: Vec<Array1<T>>, loss_gap: Vec<T>, map: &MirrorMap<T>, schedule: &Schedule<T>) -> Result<Self> {
        if times.is_empty() || times.len() != x.len() || times.len() != loss_gap.len() {
            return Err(Error::Invalid("trajectory components differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("trajectory times must increase strictly".into()));
        }
        let d = x[0].len();
        let n = times.len();
        let mut t = Self {
            phi: vec![Array1::zeros(1); n],
            gradient_estimate: vec![Array1::zeros(d); n],
            noise: vec![Array1::zeros(d); n],
            filter_trace: vec![T::zero(); n],
            filter_gain: vec![T::zero(); n],
            times,
            x,
            loss_gap,
            ..Self::with_capacity(0)
        };
        t.finish(map, schedule);
        Ok(t)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(&mut self, t: T, x: Array1<T>, gap: T, phi: Array1<T>, estimate: Array1<T>, noise: Array1<T>, trace: T, gain: T) {
        self.times.push(t);
        self.x.push(x);
        self.loss_gap.push(gap);
        self.phi.push(phi);
        self.gradient_estimate.push(estimate);
        self.noise.push(noise);
        self.filter_trace.push(trace);
        self.filter_gain.push(gain);
    }

    /// Fills `nu`, `qv` and `martingale_qv` from the recorded states.
    pub(crate) fn finish(&mut self, map: &MirrorMap<T>, schedule: &Schedule<T>) {
        let n = self.times.len();
        self.nu.clear();
        for k in 0..n {
            if k + 1 < n {
                let dt = self.times[k + 1] - self.times[k];
                self.nu.push((&self.x[k + 1] - &self.x[k]).mapv(|v| v / dt));
            } else {
                self.nu.push(Array1::zeros(self.x[k].len()));
            }
        }
        self.qv.clear();
        let mut acc = T::zero();
        for k in 0..n {
            self.qv.push(acc);
            if k + 2 < n {
                let (a, b) = (&self.x[k + 1], &self.x[k + 2]);
                acc = match (map.grad(a.view()), map.grad(b.view())) {
                    (Ok(ga), Ok(gb)) => qv_accumulate(acc, (gb - ga).view(), (b - a).view()),
                    _ => T::nan(),
                };
            }
        }
        self.martingale_qv.clear();
        let mut acc = T::zero();
        for k in 0..n {
            self.martingale_qv.push(acc);
            if k + 1 < n {
                let t = self.times[k];
                let w = (schedule.alpha(t) + schedule.beta(t)).exp() * (self.times[k + 1] - t);
                let inc = self.noise[k].mapv(|v| v * w);
                acc = qv_accumulate(acc, inc.view(), inc.view());
            }
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn final_gap(&self) -> T {
        self.loss_gap.last().copied().unwrap_or_else(T::nan)
    }
}

/// `e^{γ}(e^{α} D_h(X + e^{−α}ν, X) − e^{β} f_gap)`.
pub fn lagrangian<T: Real>(
    map: &MirrorMap<T>,
    f_gap: T,
    schedule: &Schedule<T>,
    t: T,
    x: ArrayView1<'_, T>,
    nu: ArrayView1<'_, T>,
) -> Result<T> {
    let (a, b, g) = (schedule.alpha(t), schedule.beta(t), schedule.gamma(t));
    let mut y = x.to_owned();
    y.scaled_add((-a).exp(), &nu);
    let kinetic = a.exp() * map.divergence(y.view(), x)?;
    Ok(g.exp() * (kinetic - b.exp() * f_gap))
}

/// `e^{α+γ} D_{h*}(∇h(X) + e^{−γ}p, ∇h(X)) + e^{γ+β} f_gap`.
pub fn hamiltonian<T: Real>(
    map: &MirrorMap<T>,
    f_gap: T,
    schedule: &Schedule<T>,
    t: T,
    x: ArrayView1<'_, T>,
    p: ArrayView1<'_, T>,
) -> Result<T> {
    let (a, b, g) = (schedule.alpha(t), schedule.beta(t), schedule.gamma(t));
    let base = map.grad(x)?;
    let mut shifted = base.clone();
    shifted.scaled_add((-g).exp(), &p);
    let kinetic = map.dual_divergence(shifted.view(), base.view())?;
    Ok((a + g).exp() * kinetic + (g + b).exp() * f_gap)
}

/// `D_h(x*, X + e^{−α}ν) + e^{β} f_gap − qv_bracket`.
#[allow(clippy::too_many_arguments)]
pub fn energy<T: Real>(
    map: &MirrorMap<T>,
    f_gap: T,
    schedule: &Schedule<T>,
    t: T,
    x: ArrayView1<'_, T>,
    nu: ArrayView1<'_, T>,
    qv_bracket: T,
    x_star: ArrayView1<'_, T>,
) -> Result<T> {
    let mut y = x.to_owned();
    y.scaled_add((-schedule.alpha(t)).exp(), &nu);
    Ok(map.divergence(x_star, y.view())? + schedule.beta(t).exp() * f_gap - qv_bracket)
}

pub fn qv_accumulate<T: Real>(prev: T, delta_a: ArrayView1<'_, T>, delta_b: ArrayView1<'_, T>) -> T {
    prev + dot(delta_a, delta_b)
}

/// Energy at every mesh time that has a realized displacement (all but the
/// last), so the series has `steps()` entries.
pub fn energy_path<T: Real>(map: &MirrorMap<T>, schedule: &Schedule<T>, traj: &Trajectory<T>, x_star: ArrayView1<'_, T>) -> Result<Vec<T>> {
    (0..traj.steps())
        .map(|k| {
            energy(
                map,
                traj.loss_gap[k],
                schedule,
                traj.times[k],
                traj.x[k].view(),
                traj.nu[k].view(),
                traj.qv[k],
                x_star,
            )
        })
        .collect()
}

/// Trapezoidal integral of the Lagrangian plus `e^{δ_T}` times the terminal
/// gap, averaged over trajectories.
pub fn action_estimate<T: Real>(map: &MirrorMap<T>, schedule: &Schedule<T>, trajectories: &[Trajectory<T>]) -> Result<T> {
    if trajectories.is_empty() {
        return Err(Error::Invalid("action needs at least one trajectory".into()));
    }
    let weight = schedule.delta_t().exp();
    let mut total = T::zero();
    for traj in trajectories {
        let lag: Vec<T> = (0..traj.len())
            .map(|k| lagrangian(map, traj.loss_gap[k], schedule, traj.times[k], traj.x[k].view(), traj.nu[k].view()))
            .collect::<Result<_>>()?;
        let mut integral = T::zero();
        for k in 0..traj.steps() {
            integral += T::c(0.5) * (lag[k] + lag[k + 1]) * (traj.times[k + 1] - traj.times[k]);
        }
        total = total + integral + weight * traj.final_gap();
    }
    Ok(total / T::c(trajectories.len() as f64))
}

fn mean_se<T: Real>(values: impl Iterator<Item = T>) -> (T, T) {
    let v: Vec<T> = values.collect();
    let n = v.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let nf = T::c(n as f64);
    let mean = v.iter().fold(T::zero(), |s, &x| s + x) / nf;
    if n == 1 {
        return (mean, T::zero());
    }
    let ss = v.iter().fold(T::zero(), |s, &x| s + (x - mean) * (x - mean));
    (mean, (ss / T::c((n - 1) as f64) / nf).sqrt())
}

/// Per-time ensemble statistics over the displacement-carrying mesh times.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport<T> {
    pub seeds: usize,
    pub times: Vec<T>,
    pub mean_energy: Vec<T>,
    pub se_energy: Vec<T>,
    pub mean_gap: Vec<T>,
    pub se_gap: Vec<T>,
    pub mean_martingale_qv: Vec<T>,
    /// Energy series of each trajectory, in input order.
    pub energies: Vec<Vec<T>>,
}

/// Aggregates trajectories (truncated to the shortest). Energy evaluation
/// runs in parallel; the reduction order is fixed.
pub fn ensemble_report<T: Real>(
    map: &MirrorMap<T>,
    schedule: &Schedule<T>,
    x_star: ArrayView1<'_, T>,
    trajectories: &[Trajectory<T>],
) -> Result<EnsembleReport<T>> {
    if trajectories.is_empty() {
        return Err(Error::Invalid("ensemble needs at least one trajectory".into()));
    }
    let x_star = x_star.to_owned();
    let energies: Vec<Vec<T>> = trajectories
        .par_iter()
        .map(|t| energy_path(map, schedule, t, x_star.view()))
        .collect::<Result<_>>()?;
    let n = trajectories.iter().map(|t| t.steps()).min().unwrap_or(0);
    let times = trajectories[0].times[..n].to_vec();
    let mut r = EnsembleReport {
        seeds: trajectories.len(),
        times,
        mean_energy: Vec::with_capacity(n),
        se_energy: Vec::with_capacity(n),
        mean_gap: Vec::with_capacity(n),
        se_gap: Vec::with_capacity(n),
        mean_martingale_qv: Vec::with_capacity(n),
        energies,
    };
    for k in 0..n {
        let (m, s) = mean_se(r.energies.iter().map(|e| e[k]));
        r.mean_energy.push(m);
        r.se_energy.push(s);
        let (m, s) = mean_se(trajectories.iter().map(|t| t.loss_gap[k]));
        r.mean_gap.push(m);
        r.se_gap.push(s);
        r.mean_martingale_qv.push(mean_se(trajectories.iter().map(|t| t.martingale_qv[k])).0);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport<T> {
    /// `e^{−β_t}·max(1, mean QV)` per time.
    pub bound_value: Vec<T>,
    pub ratio: Vec<T>,
    pub burn_index: usize,
    /// Largest ratio at or after the burn-in.
    pub max_ratio: T,
    /// Largest ratio over the first half of the post-burn window.
    pub fitted_constant: T,
    /// Largest ratio over the second half of the post-burn window.
    pub holdout_max: T,
    /// `max_ratio ≤ bound_constant`.
    pub bounded: bool,
    /// The first-half constant also covers the second half.
    pub fit_holds: bool,
}

/// Compares mean loss gaps with `e^{−β_t} max(1, mean QV_t)`.
/// `burn_fraction` of the horizon is skipped (0.1 by default in the harness).
pub fn rate_bound_check<T: Real>(report: &EnsembleReport<T>, schedule: &Schedule<T>, burn_fraction: T, bound_constant: T) -> RateReport<T> {
    let n = report.times.len();
    let bound_value: Vec<T> = (0..n)
        .map(|k| (-schedule.beta(report.times[k])).exp() * report.mean_martingale_qv[k].max(T::one()))
        .collect();
    let ratio: Vec<T> = (0..n).map(|k| report.mean_gap[k] / bound_value[k]).collect();
    let burn_index = if n == 0 {
        0
    } else {
        let (t0, t1) = (report.times[0], report.times[n - 1]);
        let cut = t0 + burn_fraction * (t1 - t0);
        report.times.iter().position(|&t| t >= cut).unwrap_or(n)
    };
    let fold_max = |s: &[T]| {
        s.iter().fold(T::neg_infinity(), |m, &v| if v.is_nan() || m.is_nan() { T::nan() } else { m.max(v) })
    };
    let window = &ratio[burn_index.min(n)..];
    let mid = window.len() / 2;
    let max_ratio = fold_max(window);
    let fitted_constant = fold_max(&window[..mid.max(1).min(window.len())]);
    let holdout_max = fold_max(&window[mid..]);
    let slack = T::tol(1e-9);
    RateReport {
        bounded: max_ratio <= bound_constant,
        fit_holds: holdout_max <= fitted_constant * (T::one() + slack) + slack,
        bound_value,
        ratio,
        burn_index,
        max_ratio,
        fitted_constant,
        holdout_max,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport<T> {
    pub mean_increment: Vec<T>,
    pub se_increment: Vec<T>,
    /// Index `k` of the worst increment `E_{k+1} − E_k` (relative to its slack).
    pub worst_index: Option<usize>,
    /// Worst `mean_increment − max(2·SE, abs_tol)`; positive means a violation.
    pub worst_excess: T,
    pub passed: bool,
}

/// Checks that the mean energy does not increase by more than two standard
/// errors of the paired per-path increments, or `abs_tol` if larger.
/// With identical paths (no noise) this is a pointwise monotonicity check.
pub fn supermartingale_check<T: Real>(energies: &[Vec<T>], abs_tol: T) -> SupermartingaleReport<T> {
    let n = energies.iter().map(|e| e.len()).min().unwrap_or(0);
    let mut r = SupermartingaleReport {
        mean_increment: Vec::new(),
        se_increment: Vec::new(),
        worst_index: None,
        worst_excess: T::neg_infinity(),
        passed: true,
    };
    for k in 0..n.saturating_sub(1) {
        let (m, s) = mean_se(energies.iter().map(|e| e[k + 1] - e[k]));
        let excess = m - (T::c(2.0) * s).max(abs_tol);
        if excess > r.worst_excess || excess.is_nan() {
            r.worst_excess = excess;
            r.worst_index = Some(k);
        }
        if !(excess <= T::zero()) {
            r.passed = false;
        }
        r.mean_increment.push(m);
        r.se_increment.push(s);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::Terminal;
    use ndarray::array;

    fn flat() -> Schedule<f64> {
        Schedule::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), 1.0).unwrap()
    }

    #[test]
    fn lagrangian_examples() {
        let m = MirrorMap::euclidean();
        let s = flat();
        let x = array![1.0, 2.0];
        assert_eq!(lagrangian(&m, 0.0, &s, 0.0, x.view(), array![0.0, 0.0].view()).unwrap(), 0.0);
        assert_eq!(lagrangian(&m, 3.0, &s, 0.0, x.view(), array![0.0, 0.0].view()).unwrap(), -3.0);
        assert_eq!(lagrangian(&m, 0.0, &s, 0.0, x.view(), array![2.0, 0.0].view()).unwrap(), 2.0);
    }

    #[test]
    fn hamiltonian_examples() {
        let m = MirrorMap::euclidean();
        let s = flat();
        let x = array![1.0, 2.0];
        assert_eq!(hamiltonian(&m, 1.5, &s, 0.0, x.view(), array![0.0, 0.0].view()).unwrap(), 1.5);
        let h = hamiltonian(&m, 0.0, &s, 0.0, x.view(), array![2.0, 0.0].view()).unwrap();
        assert!((h - 2.0).abs() < 1e-14);
    }

    #[test]
    fn energy_examples() {
        let m = MirrorMap::euclidean();
        let s = Schedule::constant(0.3, 0.5, 0.0, Terminal::Exponent(0.0), 1.0).unwrap();
        let xs = array![1.0, -1.0];
        let zero = array![0.0, 0.0];
        assert_eq!(energy(&m, 0.0, &s, 0.2, xs.view(), zero.view(), 0.0, xs.view()).unwrap(), 0.0);
        // X + e^{−α}ν lands on x*.
        let x = array![0.0, 0.0];
        let nu = xs.mapv(|v| v * 0.3f64.exp());
        let e = energy(&m, 2.0, &s, 0.2, x.view(), nu.view(), 0.0, xs.view()).unwrap();
        assert!((e - 2.0 * 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn qv_examples() {
        let d = array![1.0, 1.0];
        assert_eq!(qv_accumulate(0.0, d.view(), d.view()), 2.0);
        let z = array![0.0, 0.0];
        assert_eq!(qv_accumulate(1.25, z.view(), z.view()), 1.25);
    }

    #[test]
    fn frozen_trajectory_has_zero_action_and_energy() {
        let m = MirrorMap::euclidean();
        let s = flat();
        let xs = array![0.5, 0.5];
        let times: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let traj = Trajectory::from_states(times, vec![xs.clone(); 11], vec![0.0; 11], &m, &s).unwrap();
        assert_eq!(action_estimate(&m, &s, std::slice::from_ref(&traj)).unwrap(), 0.0);
        let e = energy_path(&m, &s, &traj, xs.view()).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        let r = supermartingale_check(&[e], 1e-9);
        assert!(r.passed);
    }

    #[test]
    fn supermartingale_flags_increase() {
        let up = vec![vec![0.0, 1.0, 2.0]];
        assert!(!supermartingale_check(&up, 1e-9).passed);
        let down = vec![vec![2.0, 1.0, 1.0]];
        assert!(supermartingale_check(&down, 1e-9).passed);
    }

    #[test]
    fn trajectory_bookkeeping() {
        let m = MirrorMap::euclidean();
        let s = flat();
        let times = vec![0.0, 0.5, 1.0];
        let x = vec![array![0.0], array![1.0], array![3.0]];
        let t = Trajectory::from_states(times, x, vec![0.0; 3], &m, &s).unwrap();
        assert_eq!(t.nu, vec![array![2.0], array![4.0], array![0.0]]);
        // Y = (1, 3, 3): one bracket increment of 4.
        assert_eq!(t.qv, vec![0.0, 4.0, 4.0]);
        assert_eq!(t.martingale_qv, vec![0.0, 0.0, 0.0]);
    }
}
