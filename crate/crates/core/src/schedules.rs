//! Hyperparameter schedules, the discretization mesh and the deterministic
//! learning-rate paths `Φ̃_t`.
//!
//! A schedule fixes three log-weights `α_t` (step scale), `β_t` (potential
//! weight) and `γ_t` (overall weight) on `[0, T]`, plus the terminal penalty
//! exponent `δ_T`. The learning rate of the first-order optimizers is
//!
//! ```text
//! Φ̃_t = e^{−γ_t} (Φ₀ + ∫₀ᵗ e^{α_u+β_u+γ_u} du),   Φ₀ = e^{δ_T} − ∫₀ᵀ e^{α_u+β_u+γ_u} du
//! ```
//!
//! and its vector analogue for the linear state-space gradient model.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_exp};
use crate::quadrature::AdaptiveSimpson;
use crate::scalar::Real;

pub type TimeFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Central-difference step for schedules without closed-form derivatives.
const FD_STEP: f64 = 1e-5;

/// Tolerance of the scaling-condition check.
pub const SCALING_TOL: f64 = 1e-6;

#[derive(Clone)]
pub enum Family<T> {
    /// Constant exponents.
    Constant { alpha: T, beta: T, gamma: T },
    /// Exponents affine in time, `x₀ + x₁·t`.
    Linear {
        alpha: (T, T),
        beta: (T, T),
        gamma: (T, T),
    },
    /// With `s = t + t_min`: `α = log p − log s`, `β = p log s + log c`,
    /// `γ = p log s`. Satisfies the scaling conditions with equality.
    Polynomial { p: T, c: T, t_min: T },
    /// Arbitrary exponents; derivatives by central differences.
    Custom {
        alpha: TimeFn<T>,
        beta: TimeFn<T>,
        gamma: TimeFn<T>,
    },
}

impl<T: fmt::Debug> fmt::Debug for Family<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Constant { alpha, beta, gamma } => f
                .debug_struct("Constant")
                .field("alpha", alpha)
                .field("beta", beta)
                .field("gamma", gamma)
                .finish(),
            Family::Linear { alpha, beta, gamma } => f
                .debug_struct("Linear")
                .field("alpha", alpha)
                .field("beta", beta)
                .field("gamma", gamma)
                .finish(),
            Family::Polynomial { p, c, t_min } => f
                .debug_struct("Polynomial")
                .field("p", p)
                .field("c", c)
                .field("t_min", t_min)
                .finish(),
            Family::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// How the terminal penalty exponent is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal<T> {
    /// An explicit `δ_T`.
    Exponent(T),
    /// `δ_T = log ∫₀ᵀ e^{α+β+γ}`, i.e. `Φ₀ = 0`, so that `Φ̃₀ = 0` and the
    /// learning rate is free of cancellation between `Φ₀` and the integral.
    ZeroInitialWeight,
}

#[derive(Clone, Debug)]
pub struct Schedule<T> {
    family: Family<T>,
    terminal: Terminal<T>,
    horizon: T,
    delta_t: T,
    scaling: bool,
}

/// Outcome of [`Schedule::check_scaling`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport<T> {
    /// `max_t |γ̇_t − e^{α_t}|`.
    pub max_gamma_residual: T,
    /// `max_t (β̇_t − e^{α_t})`; non-positive when `β̇ ≤ e^α` holds everywhere.
    pub max_beta_excess: T,
    pub passed: bool,
}

impl<T: Real> Schedule<T> {
    pub fn new(family: Family<T>, terminal: Terminal<T>, horizon: T) -> Result<Self> {
        if !(horizon > T::zero() && horizon.is_finite()) {
            return Err(Error::Invalid(format!("schedule horizon must be positive and finite, got {horizon}")));
        }
        match &family {
            Family::Polynomial { p, c, t_min } => {
                if !(*p > T::zero() && *c > T::zero() && *t_min > T::zero()) {
                    return Err(Error::Invalid("polynomial schedule needs p > 0, c > 0, t_min > 0".into()));
                }
            }
            Family::Constant { alpha, beta, gamma }
                if ![*alpha, *beta, *gamma].iter().all(|v| v.is_finite()) => {
                    return Err(Error::Invalid("constant schedule values must be finite".into()));
                }
            _ => {}
        }
        let mut s = Self {
            family,
            terminal,
            horizon,
            delta_t: T::zero(),
            scaling: false,
        };
        s.validate_grid(1000)?;
        s.delta_t = match terminal {
            Terminal::Exponent(d) => {
                if !d.is_finite() {
                    return Err(Error::Invalid("delta_T must be finite".into()));
                }
                d
            }
            Terminal::ZeroInitialWeight => s.log_weight_integral(T::zero(), horizon)?,
        };
        Ok(s)
    }

    pub fn constant(alpha: T, beta: T, gamma: T, terminal: Terminal<T>, horizon: T) -> Result<Self> {
        Self::new(Family::Constant { alpha, beta, gamma }, terminal, horizon)
    }

    /// Tags the schedule as satisfying the scaling conditions, verifying them
    /// on a 1000-point grid.
    pub fn require_scaling(mut self) -> Result<Self> {
        let report = self.check_scaling(1000)?;
        if !report.passed {
            return Err(Error::Invalid(format!(
                "schedule violates the scaling conditions: |γ̇ − e^α| ≤ {:e}, β̇ − e^α ≤ {:e}",
                report.max_gamma_residual, report.max_beta_excess
            )));
        }
        self.scaling = true;
        Ok(self)
    }

    pub fn is_scaling(&self) -> bool {
        self.scaling
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// The resolved terminal exponent `δ_T`.
    pub fn delta_t(&self) -> T {
        self.delta_t
    }

    pub fn terminal(&self) -> Terminal<T> {
        self.terminal
    }

    /// Same exponents on a different horizon (the terminal rule is re-resolved).
    pub fn with_horizon(&self, horizon: T) -> Result<Self> {
        let s = Self::new(self.family.clone(), self.terminal, horizon)?;
        if self.scaling {
            s.require_scaling()
        } else {
            Ok(s)
        }
    }

    pub fn alpha(&self, t: T) -> T {
        match &self.family {
            Family::Constant { alpha, .. } => *alpha,
            Family::Linear { alpha, .. } => alpha.0 + alpha.1 * t,
            Family::Polynomial { p, t_min, .. } => p.ln() - (t + *t_min).ln(),
            Family::Custom { alpha, .. } => alpha(t),
        }
    }

    pub fn beta(&self, t: T) -> T {
        match &self.family {
            Family::Constant { beta, .. } => *beta,
            Family::Linear { beta, .. } => beta.0 + beta.1 * t,
            Family::Polynomial { p, c, t_min } => *p * (t + *t_min).ln() + c.ln(),
            Family::Custom { beta, .. } => beta(t),
        }
    }

    pub fn gamma(&self, t: T) -> T {
        match &self.family {
            Family::Constant { gamma, .. } => *gamma,
            Family::Linear { gamma, .. } => gamma.0 + gamma.1 * t,
            Family::Polynomial { p, t_min, .. } => *p * (t + *t_min).ln(),
            Family::Custom { gamma, .. } => gamma(t),
        }
    }

    pub fn beta_dot(&self, t: T) -> T {
        match &self.family {
            Family::Constant { .. } => T::zero(),
            Family::Linear { beta, .. } => beta.1,
            Family::Polynomial { p, t_min, .. } => *p / (t + *t_min),
            Family::Custom { beta, .. } => numeric_derivative(beta.as_ref(), t),
        }
    }

    pub fn gamma_dot(&self, t: T) -> T {
        match &self.family {
            Family::Constant { .. } => T::zero(),
            Family::Linear { gamma, .. } => gamma.1,
            Family::Polynomial { p, t_min, .. } => *p / (t + *t_min),
            Family::Custom { gamma, .. } => numeric_derivative(gamma.as_ref(), t),
        }
    }

    /// `α_t + β_t + γ_t`, the log of the learning-rate integrand.
    pub fn log_weight(&self, t: T) -> T {
        self.alpha(t) + self.beta(t) + self.gamma(t)
    }

    fn validate_grid(&self, points: usize) -> Result<()> {
        for i in 0..points {
            let t = self.horizon * T::c(i as f64) / T::c((points - 1) as f64);
            let (a, b, g) = (self.alpha(t), self.beta(t), self.gamma(t));
            if !(a.is_finite() && b.is_finite() && g.is_finite()) {
                return Err(Error::Invalid(format!("schedule is not finite at t = {t}")));
            }
        }
        Ok(())
    }

    /// `log ∫ₐᵇ e^{α+β+γ}`, computed with the integrand shifted by its
    /// sampled maximum so large exponents do not overflow.
    fn log_weight_integral(&self, a: T, b: T) -> Result<T> {
        let shift = (0..=64)
            .map(|i| self.log_weight(a + (b - a) * T::c(i as f64 / 64.0)))
            .fold(T::neg_infinity(), T::max);
        let q = AdaptiveSimpson::<T>::default();
        let i = q.integrate(|u| (self.log_weight(u) - shift).exp(), a, b)?;
        Ok(shift + i.ln())
    }

    /// Scaling conditions `γ̇ = e^α` and `β̇ ≤ e^α` on a uniform grid of
    /// `grid_points` over `[0, T]`, at tolerance [`SCALING_TOL`].
    pub fn check_scaling(&self, grid_points: usize) -> Result<ScalingReport<T>> {
        if grid_points < 2 {
            return Err(Error::Invalid("check_scaling needs at least 2 grid points".into()));
        }
        let mut max_gamma_residual = T::zero();
        let mut max_beta_excess = T::neg_infinity();
        for i in 0..grid_points {
            let t = self.horizon * T::c(i as f64) / T::c((grid_points - 1) as f64);
            let ea = self.alpha(t).exp();
            let gd = self.gamma_dot(t);
            let bd = self.beta_dot(t);
            if !(ea.is_finite() && gd.is_finite() && bd.is_finite()) {
                return Err(Error::Invalid(format!("schedule derivative is not finite at t = {t}")));
            }
            max_gamma_residual = max_gamma_residual.max((gd - ea).abs());
            max_beta_excess = max_beta_excess.max(bd - ea);
        }
        let tol = T::tol(SCALING_TOL);
        Ok(ScalingReport {
            max_gamma_residual,
            max_beta_excess,
            passed: max_gamma_residual <= tol && max_beta_excess <= tol,
        })
    }

    /// Mesh `t₀ = 0, t_{k+1} = t_k + e^{−α_{t_k}}` with `steps + 1` points.
    pub fn build_mesh(&self, steps: usize) -> Result<Mesh<T>> {
        if steps < 1 {
            return Err(Error::Invalid("mesh needs at least one step".into()));
        }
        let mut times = Vec::with_capacity(steps + 1);
        let mut t = T::zero();
        times.push(t);
        for _ in 0..steps {
            let dt = (-self.alpha(t)).exp();
            if !(dt > T::zero() && dt.is_finite()) {
                return Err(Error::Invalid(format!("mesh step e^(-alpha) is not positive/finite at t = {t}")));
            }
            t += dt;
            times.push(t);
        }
        Ok(Mesh { times })
    }
}

fn numeric_derivative<T: Real>(f: &(dyn Fn(T) -> T + Send + Sync), t: T) -> T {
    let h = T::c(FD_STEP);
    if t >= h {
        (f(t + h) - f(t - h)) / (h + h)
    } else {
        // Second-order one-sided difference at the left end of [0, T].
        (T::c(-3.0) * f(t) + T::c(4.0) * f(t + h) - f(t + h + h)) / (h + h)
    }
}

/// Strictly increasing discretization times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    times: Vec<T>,
}

impl<T: Real> Mesh<T> {
    pub(crate) fn from_times(times: Vec<T>) -> Self {
        debug_assert!(!times.is_empty());
        Self { times }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, k: usize) -> T {
        self.times[k + 1] - self.times[k]
    }

    pub fn end(&self) -> T {
        self.times[self.times.len() - 1]
    }
}

fn check_time<T: Real>(t: T, horizon: T) -> Result<()> {
    let slack = horizon * T::tol(1e-12);
    if !(t >= -slack && t <= horizon + slack) {
        return Err(Error::Invalid(format!("time {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Scalar learning-rate path of the martingale gradient model.
#[derive(Debug, Clone)]
pub struct LearningRatePath<T> {
    schedule: Schedule<T>,
    quadrature: AdaptiveSimpson<T>,
}

impl<T: Real> LearningRatePath<T> {
    pub fn new(schedule: Schedule<T>) -> Self {
        Self {
            schedule,
            quadrature: AdaptiveSimpson::default(),
        }
    }

    pub fn schedule(&self) -> &Schedule<T> {
        &self.schedule
    }

    /// `Φ₀ = e^{δ_T} − ∫₀ᵀ e^{α+β+γ}`; exactly zero under
    /// [`Terminal::ZeroInitialWeight`].
    pub fn phi0(&self) -> Result<T> {
        match self.schedule.terminal {
            Terminal::ZeroInitialWeight => Ok(T::zero()),
            Terminal::Exponent(d) => {
                let s = &self.schedule;
                let i = self.quadrature.integrate(|u| s.log_weight(u).exp(), T::zero(), s.horizon)?;
                Ok(d.exp() - i)
            }
        }
    }

    /// `Φ̃_t` for `0 ≤ t ≤ T`.
    ///
    /// With an explicit `δ_T` this evaluates `e^{δ_T−γ_t} − ∫ₜᵀ e^{α_u+β_u+γ_u−γ_t} du`,
    /// which equals the defining formula and makes `Φ̃_T = e^{δ_T−γ_T}` exact.
    /// With `Φ₀ = 0` it evaluates `∫₀ᵗ e^{α_u+β_u+γ_u−γ_t} du`.
    pub fn value(&self, t: T) -> Result<T> {
        let s = &self.schedule;
        check_time(t, s.horizon)?;
        let t = t.max(T::zero()).min(s.horizon);
        let g = s.gamma(t);
        let integrand = |u: T| (s.log_weight(u) - g).exp();
        match s.terminal {
            Terminal::ZeroInitialWeight => self.quadrature.integrate(integrand, T::zero(), t),
            Terminal::Exponent(d) => {
                let tail = self.quadrature.integrate(integrand, t, s.horizon)?;
                Ok((d - g).exp() - tail)
            }
        }
    }

    /// `Φ̃` at every mesh time. Logs a warning when the rate turns negative.
    pub fn on_mesh(&self, mesh: &Mesh<T>) -> Result<Vec<T>> {
        let vals = mesh.times().iter().map(|&t| self.value(t)).collect::<Result<Vec<_>>>()?;
        if let Some(k) = vals.iter().position(|v| *v < T::zero()) {
            log::warn!("learning rate is negative at mesh index {k} (t = {}); descent steps become ascent steps", mesh.times()[k]);
        }
        Ok(vals)
    }
}

/// `Φ̃_t` for the scalar model.
pub fn phi_scalar<T: Real>(schedule: &Schedule<T>, t: T) -> Result<T> {
    LearningRatePath::new(schedule.clone()).value(t)
}

/// Vector learning-rate path of the linear state-space gradient model.
#[derive(Debug, Clone)]
pub struct VectorLearningRatePath<T> {
    schedule: Schedule<T>,
    a: Array2<T>,
    b: Array1<T>,
    quadrature: AdaptiveSimpson<T>,
}

impl<T: Real> VectorLearningRatePath<T> {
    pub fn new(schedule: Schedule<T>, a: Array2<T>, b: Array1<T>) -> Result<Self> {
        if !linalg::is_square(a.view()) || a.nrows() != b.len() || b.is_empty() {
            return Err(Error::Invalid("phi_vector needs a square A matching the length of b".into()));
        }
        let mut sym = a.clone();
        linalg::symmetrize(&mut sym);
        if linalg::cholesky(sym.view()).is_none() {
            return Err(Error::Invalid("phi_vector needs a positive-definite A".into()));
        }
        Ok(Self {
            schedule,
            a,
            b,
            quadrature: AdaptiveSimpson::with_abs_tol(T::tol(1e-11)),
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn schedule(&self) -> &Schedule<T> {
        &self.schedule
    }

    /// `(e^{A s})ᵀ b`, i.e. the row vector `bᵀ e^{A s}` as a column.
    fn b_exp(&self, s: T) -> Result<Array1<T>> {
        let e = matrix_exp(self.a.mapv(|x| x * s).view())?;
        Ok(e.t().dot(&self.b))
    }

    /// `Φ₀ = e^{δ_T} e^{AT} − ∫₀ᵀ e^{α_u+β_u+γ_u} e^{Au} du`, or the zero
    /// matrix under [`Terminal::ZeroInitialWeight`].
    pub fn phi0(&self) -> Result<Array2<T>> {
        let s = &self.schedule;
        let n = self.dim();
        if s.terminal == Terminal::ZeroInitialWeight {
            return Ok(Array2::zeros((n, n)));
        }
        let mut fail = None;
        let flat = self.quadrature.integrate_vec(
            |u| match matrix_exp(self.a.mapv(|x| x * u).view()) {
                Ok(e) => {
                    let w = s.log_weight(u).exp();
                    Array1::from_iter(e.iter().map(|&v| v * w))
                }
                Err(err) => {
                    fail = Some(err);
                    Array1::zeros(n * n)
                }
            },
            T::zero(),
            s.horizon,
        )?;
        if let Some(e) = fail {
            return Err(e);
        }
        let integral = Array2::from_shape_vec((n, n), flat.to_vec()).expect("n*n entries");
        let e_at = matrix_exp(self.a.mapv(|x| x * s.horizon).view())?;
        Ok(e_at.mapv(|v| v * s.delta_t.exp()) - integral)
    }

    /// `Φ̃_t ∈ R^d̃`, evaluated as
    /// `e^{δ_T−γ_t} bᵀe^{A(T−t)} − ∫ₜᵀ e^{α_u+β_u+γ_u−γ_t} bᵀe^{A(u−t)} du`,
    /// which is the defining expression after substituting `Φ₀`. With
    /// `Φ₀ = 0` it is the forward form `∫₀ᵗ e^{α_u+β_u+γ_u−γ_t} bᵀe^{−A(t−u)} du`.
    pub fn value(&self, t: T) -> Result<Array1<T>> {
        let s = &self.schedule;
        check_time(t, s.horizon)?;
        let t = t.max(T::zero()).min(s.horizon);
        let g = s.gamma(t);
        let mut fail = None;
        if s.terminal == Terminal::ZeroInitialWeight {
            if t == T::zero() {
                return Ok(Array1::zeros(self.dim()));
            }
            let head = self.quadrature.integrate_vec(
                |u| match self.b_exp(u - t) {
                    Ok(v) => {
                        let w = (s.log_weight(u) - g).exp();
                        v.mapv(|x| x * w)
                    }
                    Err(err) => {
                        fail = Some(err);
                        Array1::zeros(self.dim())
                    }
                },
                T::zero(),
                t,
            )?;
            return match fail {
                Some(e) => Err(e),
                None => Ok(head),
            };
        }
        let tail = self.quadrature.integrate_vec(
            |u| match self.b_exp(u - t) {
                Ok(v) => {
                    let w = (s.log_weight(u) - g).exp();
                    v.mapv(|x| x * w)
                }
                Err(err) => {
                    fail = Some(err);
                    Array1::zeros(self.dim())
                }
            },
            t,
            s.horizon,
        )?;
        if let Some(e) = fail {
            return Err(e);
        }
        let head = self.b_exp(s.horizon - t)?.mapv(|x| x * (s.delta_t - g).exp());
        Ok(head - tail)
    }

    pub fn on_mesh(&self, mesh: &Mesh<T>) -> Result<Vec<Array1<T>>> {
        let vals = mesh.times().iter().map(|&t| self.value(t)).collect::<Result<Vec<_>>>()?;
        if let Some(k) = vals.iter().position(|v| v.iter().any(|x| *x < T::zero())) {
            log::warn!("vector learning rate has a negative component at mesh index {k} (t = {})", mesh.times()[k]);
        }
        Ok(vals)
    }
}

/// `Φ̃_t` for the state-space model with mean reversion `a` and loading `b`.
pub fn phi_vector<T: Real>(schedule: &Schedule<T>, a: ArrayView2<'_, T>, b: ArrayView1<'_, T>, t: T) -> Result<Array1<T>> {
    VectorLearningRatePath::new(schedule.clone(), a.to_owned(), b.to_owned())?.value(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear(a: (f64, f64), b: (f64, f64), g: (f64, f64), terminal: Terminal<f64>, horizon: f64) -> Schedule<f64> {
        Schedule::new(Family::Linear { alpha: a, beta: b, gamma: g }, terminal, horizon).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let ok = linear((0.0, 0.0), (0.0, 1.0), (0.0, 1.0), Terminal::Exponent(0.0), 1.0);
        assert!(ok.check_scaling(100).unwrap().passed);
        let bad = linear((0.0, 0.0), (0.0, 2.0), (0.0, 1.0), Terminal::Exponent(0.0), 1.0);
        let r = bad.check_scaling(100).unwrap();
        assert!(!r.passed);
        assert!((r.max_beta_excess - 1.0).abs() < 1e-12);
        assert!(r.max_gamma_residual < 1e-12);
        let two = linear((2f64.ln(), 0.0), (0.0, 1.0), (0.0, 2.0), Terminal::Exponent(0.0), 1.0);
        assert!(two.check_scaling(100).unwrap().passed);
        assert!(bad.clone().require_scaling().is_err());
    }

    #[test]
    fn scaling_needs_two_points() {
        let s = linear((0.0, 0.0), (0.0, 1.0), (0.0, 1.0), Terminal::Exponent(0.0), 1.0);
        assert!(s.check_scaling(1).is_err());
    }

    #[test]
    fn polynomial_family_satisfies_scaling() {
        let s = Schedule::new(Family::Polynomial { p: 2.0, c: 0.5, t_min: 1.0 }, Terminal::Exponent(0.0), 5.0)
            .unwrap()
            .require_scaling()
            .unwrap();
        assert!(s.is_scaling());
    }

    #[test]
    fn custom_family_uses_numeric_derivatives() {
        let s = Schedule::new(
            Family::Custom {
                alpha: Arc::new(|_t: f64| 0.0),
                beta: Arc::new(|t: f64| 0.5 * t * t),
                gamma: Arc::new(|t: f64| t),
            },
            Terminal::Exponent(0.0),
            1.5,
        )
        .unwrap();
        assert!((s.beta_dot(1.0) - 1.0).abs() < 1e-8);
        assert!((s.gamma_dot(0.0) - 1.0).abs() < 1e-8);
        let r = s.check_scaling(50).unwrap();
        assert!(!r.passed); // β̇ reaches 1.5 > 1
    }

    #[test]
    fn rejects_non_finite_schedules() {
        let err = Schedule::new(
            Family::Custom {
                alpha: Arc::new(|t: f64| (1.0 - t).ln()),
                beta: Arc::new(|_| 0.0),
                gamma: Arc::new(|_| 0.0),
            },
            Terminal::Exponent(0.0),
            2.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mesh_examples() {
        let s = Schedule::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), 10.0).unwrap();
        assert_eq!(s.build_mesh(3).unwrap().times(), &[0.0, 1.0, 2.0, 3.0]);
        let s = Schedule::constant(2f64.ln(), 0.0, 0.0, Terminal::Exponent(0.0), 10.0).unwrap();
        assert_eq!(s.build_mesh(2).unwrap().times(), &[0.0, 0.5, 1.0]);
        assert!(s.build_mesh(0).is_err());
    }

    #[test]
    fn mesh_with_time_varying_alpha() {
        let s = Schedule::new(
            Family::Custom {
                alpha: Arc::new(|t: f64| -(1.0 + t).ln()),
                beta: Arc::new(|_| 0.0),
                gamma: Arc::new(|_| 0.0),
            },
            Terminal::Exponent(0.0),
            10.0,
        )
        .unwrap();
        // Independent recursion: t1 = 0 + (1+0), t2 = 1 + (1+1).
        let mut oracle = vec![0.0f64];
        for _ in 0..2 {
            let t = *oracle.last().unwrap();
            oracle.push(t + (1.0 + t));
        }
        let mesh = s.build_mesh(2).unwrap();
        assert_eq!(mesh.times(), &[0.0, 1.0, 3.0]);
        assert_eq!(mesh.times(), oracle.as_slice());
    }

    #[test]
    fn phi_constant_zero_schedule() {
        let s = Schedule::<f64>::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), 1.0).unwrap();
        let path = LearningRatePath::new(s.clone());
        assert!(path.phi0().unwrap().abs() < 1e-12);
        assert!((phi_scalar(&s, 0.5).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn phi_terminal_and_initial_values() {
        // α = 0, β = t, γ = 0, δ_T = 1, T = 1: ∫₀¹ eᵘ du = e − 1.
        let s = linear((0.0, 0.0), (0.0, 1.0), (0.0, 0.0), Terminal::Exponent(1.0), 1.0);
        let e = std::f64::consts::E;
        assert!((phi_scalar(&s, 1.0).unwrap() - e).abs() < 1e-9);
        assert!((phi_scalar(&s, 0.0).unwrap() - 1.0).abs() < 1e-9);
        let p0 = LearningRatePath::new(s).phi0().unwrap();
        assert!((p0 - (e - (e - 1.0))).abs() < 1e-9);
    }

    #[test]
    fn zero_initial_weight_terminal() {
        let s = linear((1.0, 0.0), (0.0, 0.3), (0.0, 1.0f64.exp()), Terminal::ZeroInitialWeight, 2.0);
        let path = LearningRatePath::new(s.clone());
        assert_eq!(path.phi0().unwrap(), 0.0);
        assert_eq!(path.value(0.0).unwrap(), 0.0);
        let end = path.value(2.0).unwrap();
        let want = (s.delta_t() - s.gamma(2.0)).exp();
        assert!((end - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn phi_rejects_times_outside_horizon() {
        let s = Schedule::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), 1.0).unwrap();
        assert!(phi_scalar(&s, 1.5).is_err());
        assert!(phi_scalar(&s, -0.1).is_err());
    }

    #[test]
    fn phi_vector_zero_loading_component() {
        let s = Schedule::constant(0.0, 0.2, 0.1, Terminal::Exponent(0.5), 1.0).unwrap();
        let a = array![[1.0, 0.0], [0.0, 2.0]];
        let b = array![1.0, 0.0];
        for t in [0.0, 0.3, 1.0] {
            let v = phi_vector(&s, a.view(), b.view(), t).unwrap();
            assert_eq!(v[1], 0.0);
        }
    }

    #[test]
    fn phi_vector_terminal_value() {
        let s = Schedule::constant(0.1, 0.2, 0.3, Terminal::Exponent(0.4), 1.5).unwrap();
        let a = array![[1.0, 0.2], [0.2, 0.5]];
        let b = array![1.0, -0.5];
        let v = phi_vector(&s, a.view(), b.view(), 1.5).unwrap();
        let scale = (0.4f64 - 0.3).exp();
        assert!((v[0] - scale).abs() < 1e-12 && (v[1] + 0.5 * scale).abs() < 1e-12);
    }

    #[test]
    fn phi_vector_rejects_indefinite_a() {
        let s = Schedule::constant(0.0, 0.0, 0.0, Terminal::Exponent(0.0), 1.0).unwrap();
        let a = array![[1.0, 0.0], [0.0, -1.0]];
        assert!(phi_vector(&s, a.view(), array![1.0, 1.0].view(), 0.5).is_err());
    }
}
