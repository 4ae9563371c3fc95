use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, Rng};
use crate::scalar::Real;

/// `∇f(X_t) = σ W^f_t`, observed as `g_t = σ (W^f_t + ρ W^e_t)` with
/// `ρ² = (n − m)/m` so that `Var[g_t] = (n/m)·Var[∇f(X_t)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleGradientModel<T> {
    sigma: T,
    n: usize,
    m: usize,
}

impl<T: Real> MartingaleGradientModel<T> {
    pub fn new(sigma: T, n: usize, m: usize) -> Result<Self> {
        if !(sigma >= T::zero() && sigma.is_finite()) {
            return Err(Error::Invalid(format!("martingale model sigma must be finite and >= 0, got {sigma}")));
        }
        if m == 0 || m > n {
            return Err(Error::Invalid(format!("mini-batch size must satisfy 1 <= m <= n, got m={m}, n={n}")));
        }
        Ok(Self { sigma, n, m })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `ρ² = (n − m)/m`.
    pub fn rho_squared(&self) -> T {
        T::c((self.n - self.m) as f64) / T::c(self.m as f64)
    }

    pub fn rho(&self) -> T {
        self.rho_squared().sqrt()
    }

    /// `(1 + ρ²)⁻¹`, computed as `m/n`.
    pub fn filter_coefficient(&self) -> T {
        T::c(self.m as f64) / T::c(self.n as f64)
    }
}

/// `E[∇f(X_t) | F_t] = (1 + ρ²)⁻¹ g_t = (m/n)·g_t`.
pub fn martingale_filter<T: Real>(model: &MartingaleGradientModel<T>, g: ArrayView1<'_, T>) -> Array1<T> {
    let c = model.filter_coefficient();
    g.mapv(|v| v * c)
}

/// Simulated stream of the martingale model, holding both Brownian states.
#[derive(Debug, Clone)]
pub struct MartingaleStream<T> {
    model: MartingaleGradientModel<T>,
    w_f: Array1<T>,
    w_e: Array1<T>,
    rng: Rng,
}

impl<T: Real> MartingaleStream<T> {
    pub fn new(model: MartingaleGradientModel<T>, dim: usize, rng: Rng) -> Self {
        Self {
            model,
            w_f: Array1::zeros(dim),
            w_e: Array1::zeros(dim),
            rng,
        }
    }

    pub fn model(&self) -> &MartingaleGradientModel<T> {
        &self.model
    }

    /// Advances both Brownian motions by independent `N(0, dt)` increments and
    /// returns `(∇f, g)` at the new time.
    pub fn step(&mut self, dt: T) -> Result<(Array1<T>, Array1<T>)> {
        if !(dt > T::zero()) {
            return Err(Error::Invalid(format!("stream step must be positive, got {dt}")));
        }
        let sd = dt.sqrt();
        for i in 0..self.w_f.len() {
            let a: T = standard_normal(&mut self.rng);
            let b: T = standard_normal(&mut self.rng);
            self.w_f[i] += sd * a;
            self.w_e[i] += sd * b;
        }
        let sigma = self.model.sigma;
        let rho = self.model.rho();
        let grad = self.w_f.mapv(|w| sigma * w);
        let g = ndarray::Zip::from(&self.w_f)
            .and(&self.w_e)
            .map_collect(|&wf, &we| sigma * (wf + rho * we));
        Ok((grad, g))
    }
}
