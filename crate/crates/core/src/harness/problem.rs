//! Finite-sum problem instances `f(x) = (1/N) Σ ℓ(x; z_i)` with a known
//! minimizer, and mini-batch gradient sampling.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2};
use crate::rng::{standard_normal, Rng};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `ℓ(x; z) = ½‖x − z‖²`.
    Quadratic,
    /// `ℓ(x; (a, y)) = log(1 + e^{−y aᵀx}) + (λ/2)‖x‖²`, `y ∈ {−1, 1}`.
    Logistic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "logistic" => Ok(ProblemKind::Logistic),
            other => Err(Error::Config(format!("unknown problem kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    kind: ProblemKind,
    /// One row per sample: the point `z_i`, or the features `a_i`.
    data: Array2<T>,
    labels: Option<Array1<T>>,
    ridge: T,
    x_star: Array1<T>,
    f_star: T,
}

fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> ProblemInstance<T> {
    /// Quadratic family with the given data points (one per row).
    pub fn quadratic(points: Array2<T>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(Error::Invalid("quadratic problem needs at least one non-empty point".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("data points must be finite".into()));
        }
        let mut p = Self {
            kind: ProblemKind::Quadratic,
            data: points,
            labels: None,
            ridge: T::zero(),
            x_star: Array1::zeros(d),
            f_star: T::zero(),
        };
        let x_star = p.data.sum_axis(Axis(0)).mapv(|v| v / T::c(n as f64));
        p.f_star = p.loss(x_star.view());
        p.x_star = x_star;
        Ok(p)
    }

    /// Ridge-regularized logistic regression; the minimizer comes from a
    /// damped Newton solve to gradient norm `1e-10`.
    pub fn logistic(features: Array2<T>, labels: Array1<T>, ridge: T) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 || labels.len() != n {
            return Err(Error::Invalid("logistic problem needs matching non-empty features and labels".into()));
        }
        if labels.iter().any(|&y| y != T::one() && y != -T::one()) {
            return Err(Error::Invalid("labels must be -1 or 1".into()));
        }
        if !(ridge > T::zero()) {
            return Err(Error::Invalid("logistic problems need ridge > 0".into()));
        }
        let mut p = Self {
            kind: ProblemKind::Logistic,
            data: features,
            labels: Some(labels),
            ridge,
            x_star: Array1::zeros(d),
            f_star: T::zero(),
        };
        p.x_star = p.newton_solve()?;
        p.f_star = p.loss(p.x_star.view());
        Ok(p)
    }

    fn newton_solve(&self) -> Result<Array1<T>> {
        let d = self.dim();
        let tol = T::c(1e-10);
        let mut x = Array1::zeros(d);
        let mut g = self.full_gradient(x.view());
        for _ in 0..200 {
            let gn = norm2(g.view());
            if gn <= tol {
                return Ok(x);
            }
            let step = linalg::solve_spd(self.hessian(x.view()).view(), g.view())?;
            let f0 = self.loss(x.view());
            let slope = dot(g.view(), step.view());
            let mut t = T::one();
            loop {
                let cand = &x - &step.mapv(|v| v * t);
                let f1 = self.loss(cand.view());
                let g1 = self.full_gradient(cand.view());
                let armijo = f1 <= f0 - T::c(1e-4) * t * slope;
                // Near the optimum f stops resolving progress; fall back on the gradient norm.
                let flat = f1 <= f0 + T::epsilon() * T::c(16.0) * f0.abs() && norm2(g1.view()) < gn;
                if armijo || flat {
                    x = cand;
                    g = g1;
                    break;
                }
                t *= T::c(0.5);
                if t < T::c(1e-12) {
                    return Err(Error::numerical("generate_problem", "Newton line search stalled", gn.to_f64_lossy()));
                }
            }
        }
        let gn = norm2(g.view());
        if gn <= tol {
            Ok(x)
        } else {
            Err(Error::numerical("generate_problem", "reference solve did not converge", gn.to_f64_lossy()))
        }
    }

    fn hessian(&self, x: ArrayView1<'_, T>) -> Array2<T> {
        let d = self.dim();
        let mut h = Array2::eye(d).mapv(|v: T| v * self.ridge);
        let nf = T::c(self.n() as f64);
        for row in self.data.rows() {
            let s = sigmoid(dot(row, x));
            let w = s * (T::one() - s) / nf;
            for i in 0..d {
                for j in 0..d {
                    h[[i, j]] += w * row[i] * row[j];
                }
            }
        }
        h
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn labels(&self) -> Option<&Array1<T>> {
        self.labels.as_ref()
    }

    pub fn x_star(&self) -> &Array1<T> {
        &self.x_star
    }

    pub fn f_star(&self) -> T {
        self.f_star
    }

    pub fn sample_loss(&self, i: usize, x: ArrayView1<'_, T>) -> T {
        let row = self.data.row(i);
        match self.kind {
            ProblemKind::Quadratic => {
                let diff = &x - &row;
                T::c(0.5) * dot(diff.view(), diff.view())
            }
            ProblemKind::Logistic => {
                let y = self.labels.as_ref().expect("logistic labels")[i];
                softplus(-y * dot(row, x)) + T::c(0.5) * self.ridge * dot(x, x)
            }
        }
    }

    pub fn sample_gradient(&self, i: usize, x: ArrayView1<'_, T>) -> Array1<T> {
        let row = self.data.row(i);
        match self.kind {
            ProblemKind::Quadratic => &x - &row,
            ProblemKind::Logistic => {
                let y = self.labels.as_ref().expect("logistic labels")[i];
                let w = -y * sigmoid(-y * dot(row, x));
                let mut g = x.mapv(|v| v * self.ridge);
                g.scaled_add(w, &row);
                g
            }
        }
    }

    pub fn loss(&self, x: ArrayView1<'_, T>) -> T {
        let s = (0..self.n()).fold(T::zero(), |s, i| s + self.sample_loss(i, x));
        s / T::c(self.n() as f64)
    }

    /// `f(x) − f(x*)`; closed form `½‖x − x*‖²` for the quadratic family.
    pub fn loss_gap(&self, x: ArrayView1<'_, T>) -> T {
        match self.kind {
            ProblemKind::Quadratic => {
                let diff = &x - &self.x_star;
                T::c(0.5) * dot(diff.view(), diff.view())
            }
            ProblemKind::Logistic => self.loss(x) - self.f_star,
        }
    }

    /// Average of the per-sample gradients at `indices`, summed in order.
    pub fn average_gradient(&self, x: ArrayView1<'_, T>, indices: &[usize]) -> Array1<T> {
        let mut acc = Array1::zeros(self.dim());
        for &i in indices {
            acc += &self.sample_gradient(i, x);
        }
        acc.mapv(|v| v / T::c(indices.len() as f64))
    }

    pub fn full_gradient(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.average_gradient(x, &all)
    }

    /// Per-sample gradient spread `S² = (1/(N−1)) Σ ‖∇ℓ_i − ∇f‖²`.
    pub fn gradient_spread(&self, x: ArrayView1<'_, T>) -> T {
        let n = self.n();
        if n < 2 {
            return T::zero();
        }
        let full = self.full_gradient(x);
        let ss = (0..n).fold(T::zero(), |s, i| {
            let dg = self.sample_gradient(i, x) - &full;
            s + dot(dg.view(), dg.view())
        });
        ss / T::c((n - 1) as f64)
    }

    /// Mini-batch average over `m` distinct samples. `m = N` returns the
    /// full gradient without consuming randomness.
    pub fn sample_minibatch_gradient(&self, x: ArrayView1<'_, T>, m: usize, rng: &mut Rng) -> Result<Array1<T>> {
        let n = self.n();
        if m == 0 || m > n {
            return Err(Error::Invalid(format!("batch size {m} outside 1..={n}")));
        }
        if x.len() != self.dim() {
            return Err(Error::Invalid("point dimension does not match the problem".into()));
        }
        if m == n {
            return Ok(self.full_gradient(x));
        }
        let idx = index::sample(rng, n, m).into_vec();
        Ok(self.average_gradient(x, &idx))
    }
}

/// Free-function form of [`ProblemInstance::sample_minibatch_gradient`].
pub fn sample_minibatch_gradient<T: Real>(problem: &ProblemInstance<T>, x: ArrayView1<'_, T>, m: usize, rng: &mut Rng) -> Result<Array1<T>> {
    problem.sample_minibatch_gradient(x, m, rng)
}

/// Random instance: standard-normal points for the quadratic family;
/// standard-normal features with labels drawn from a logistic model around
/// a random weight vector for the logistic family.
pub fn generate_problem<T: Real>(kind: ProblemKind, d: usize, n: usize, ridge: T, rng: &mut Rng) -> Result<ProblemInstance<T>> {
    if d == 0 || d > 64 {
        return Err(Error::Config(format!("problem dimension {d} outside 1..=64")));
    }
    if n == 0 || n > 100_000 {
        return Err(Error::Config(format!("problem size {n} outside 1..=100000")));
    }
    let data = Array2::from_shape_fn((n, d), |_| standard_normal::<T>(rng));
    match kind {
        ProblemKind::Quadratic => ProblemInstance::quadratic(data),
        ProblemKind::Logistic => {
            let w: Array1<T> = (0..d).map(|_| standard_normal::<T>(rng)).collect();
            let labels = data
                .rows()
                .into_iter()
                .map(|row| {
                    let p = sigmoid(dot(row, w.view())).to_f64_lossy();
                    if rng.random::<f64>() < p {
                        T::one()
                    } else {
                        -T::one()
                    }
                })
                .collect();
            ProblemInstance::logistic(data, labels, ridge)
        }
    }
}
