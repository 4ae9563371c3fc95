use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};
use crate::rng::{standard_normal, Rng};
use crate::scalar::Real;

/// Each gradient coordinate is `bᵀ y_i` where `dy_i = −A y_i dt + L dW_i`,
/// observed through `g_i = bᵀ y_i + σ ξ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceGradientModel<T> {
    a: Array2<T>,
    l: Array2<T>,
    b: Array1<T>,
    sigma: T,
    dim: usize,
}

/// The forward-Euler discretization over one mesh step `dt`:
/// `Ã = I − dt·A`, `L̃ = dt·L`, observation noise `σ·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace<T> {
    pub a_tilde: Array2<T>,
    pub l_tilde: Array2<T>,
    pub b: Array1<T>,
    pub sigma_disc: T,
}

impl<T: Real> StateSpaceGradientModel<T> {
    /// `a` must be positive definite; `l` may be singular (including zero,
    /// which gives a noiseless latent process).
    pub fn new(a: Array2<T>, l: Array2<T>, b: Array1<T>, sigma: T, dim: usize) -> Result<Self> {
        let n = b.len();
        if n == 0 || a.dim() != (n, n) || l.dim() != (n, n) {
            return Err(Error::Invalid(format!(
                "state-space model needs A, L of shape {n}x{n} matching b, got {:?} and {:?}",
                a.dim(),
                l.dim()
            )));
        }
        if dim == 0 {
            return Err(Error::Invalid("gradient dimension must be positive".into()));
        }
        if a.iter().chain(l.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("state-space model entries must be finite".into()));
        }
        let mut sym = a.clone();
        linalg::symmetrize(&mut sym);
        if cholesky(sym.view()).is_none() {
            return Err(Error::Invalid("mean-reversion matrix A must be positive definite".into()));
        }
        if !(sigma >= T::zero() && sigma.is_finite()) {
            return Err(Error::Invalid("observation noise sigma must be finite and >= 0".into()));
        }
        Ok(Self { a, l, b, sigma, dim })
    }

    pub fn a(&self) -> &Array2<T> {
        &self.a
    }

    pub fn l(&self) -> &Array2<T> {
        &self.l
    }

    pub fn b(&self) -> &Array1<T> {
        &self.b
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Gradient dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Latent dimension `d̃`.
    pub fn latent_dim(&self) -> usize {
        self.b.len()
    }

    pub fn discretize(&self, dt: T) -> DiscreteStateSpace<T> {
        let n = self.latent_dim();
        DiscreteStateSpace {
            a_tilde: Array2::eye(n) - &self.a.mapv(|x| x * dt),
            l_tilde: self.l.mapv(|x| x * dt),
            b: self.b.clone(),
            sigma_disc: self.sigma * dt,
        }
    }
}

/// Stationary covariance `P = Ã P Ãᵀ + L̃ L̃ᵀ` of the latent recursion, by
/// fixed-point iteration; `None` when the recursion is not stable.
pub fn stationary_covariance<T: Real>(a_tilde: ArrayView2<'_, T>, l_tilde: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let q = l_tilde.dot(&l_tilde.t());
    let mut p = q.clone();
    // Doubling: P_{2k} = P_k + Φ_k P_k Φ_kᵀ with Φ_{2k} = Φ_k².
    let mut phi = a_tilde.to_owned();
    for _ in 0..64 {
        let next = &p + &phi.dot(&p).dot(&phi.t());
        let change = linalg::norm1((&next - &p).view());
        p = next;
        phi = phi.dot(&phi);
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        if change <= T::epsilon() * linalg::norm1(p.view()).max(T::min_positive_value()) {
            if linalg::norm1(phi.view()) > T::one() {
                return None;
            }
            linalg::symmetrize(&mut p);
            return Some(p);
        }
    }
    None
}

fn sample_rows<T: Real>(cov: ArrayView2<'_, T>, rows: usize, rng: &mut Rng) -> Array2<T> {
    let n = cov.nrows();
    // Small diagonal loading keeps the factorization defined for singular covariances.
    let jitter = T::epsilon() * linalg::norm1(cov).max(T::min_positive_value());
    let loaded = cov.to_owned() + &Array2::eye(n).mapv(|v: T| v * jitter);
    let mut out = Array2::zeros((rows, n));
    if let Some(l) = cholesky(loaded.view()) {
        for mut row in out.rows_mut() {
            let z: Array1<T> = (0..n).map(|_| standard_normal(rng)).collect();
            row.assign(&l.dot(&z));
        }
    }
    out
}

/// Discrete-time simulation of the state-space model on the optimizer's mesh.
#[derive(Debug, Clone)]
pub struct StateSpaceStream<T> {
    model: StateSpaceGradientModel<T>,
    y: Array2<T>,
    rng: Rng,
}

impl<T: Real> StateSpaceStream<T> {
    /// Starts from a given `d × d̃` latent state.
    pub fn with_state(model: StateSpaceGradientModel<T>, y0: Array2<T>, rng: Rng) -> Result<Self> {
        if y0.dim() != (model.dim(), model.latent_dim()) {
            return Err(Error::Invalid(format!(
                "initial latent state must be {}x{}, got {:?}",
                model.dim(),
                model.latent_dim(),
                y0.dim()
            )));
        }
        Ok(Self { model, y: y0, rng })
    }

    /// Draws every row of the initial latent state from `N(0, cov)`.
    pub fn sampled(model: StateSpaceGradientModel<T>, cov: ArrayView2<'_, T>, mut rng: Rng) -> Result<Self> {
        if cov.dim() != (model.latent_dim(), model.latent_dim()) {
            return Err(Error::Invalid("initial covariance has the wrong shape".into()));
        }
        let y0 = sample_rows(cov, model.dim(), &mut rng);
        Self::with_state(model, y0, rng)
    }

    pub fn state(&self) -> &Array2<T> {
        &self.y
    }

    /// `y_i ← (I − dt·A) y_i + dt·L w_i`, then returns `(bᵀy_i, bᵀy_i + σ·dt·ξ_i)`.
    pub fn step(&mut self, dt: T) -> Result<(Array1<T>, Array1<T>)> {
        if !(dt > T::zero()) {
            return Err(Error::Invalid(format!("stream step must be positive, got {dt}")));
        }
        let disc = self.model.discretize(dt);
        let n = self.model.latent_dim();
        let mut grad = Array1::zeros(self.model.dim());
        let mut g = Array1::zeros(self.model.dim());
        for (i, mut row) in self.y.rows_mut().into_iter().enumerate() {
            let w: Array1<T> = (0..n).map(|_| standard_normal(&mut self.rng)).collect();
            let next = disc.a_tilde.dot(&row) + disc.l_tilde.dot(&w);
            row.assign(&next);
            let xi: T = standard_normal(&mut self.rng);
            let truth = disc.b.dot(&row);
            grad[i] = truth;
            g[i] = truth + disc.sigma_disc * xi;
        }
        Ok((grad, g))
    }
}

/// Euler-Maruyama simulation of the continuous model, producing the
/// observation rate `g = dZ/dt` with `dZ = bᵀy dt + σ dB`.
#[derive(Debug, Clone)]
pub struct ContinuousStateSpaceStream<T> {
    model: StateSpaceGradientModel<T>,
    y: Array2<T>,
    rng: Rng,
}

impl<T: Real> ContinuousStateSpaceStream<T> {
    pub fn with_state(model: StateSpaceGradientModel<T>, y0: Array2<T>, rng: Rng) -> Result<Self> {
        if y0.dim() != (model.dim(), model.latent_dim()) {
            return Err(Error::Invalid("initial latent state has the wrong shape".into()));
        }
        Ok(Self { model, y: y0, rng })
    }

    pub fn state(&self) -> &Array2<T> {
        &self.y
    }

    pub fn step(&mut self, dt: T) -> Result<(Array1<T>, Array1<T>)> {
        if !(dt > T::zero()) {
            return Err(Error::Invalid(format!("stream step must be positive, got {dt}")));
        }
        let sd = dt.sqrt();
        let n = self.model.latent_dim();
        let mut grad = Array1::zeros(self.model.dim());
        let mut g = Array1::zeros(self.model.dim());
        for (i, mut row) in self.y.rows_mut().into_iter().enumerate() {
            let truth = self.model.b.dot(&row);
            let xi: T = standard_normal(&mut self.rng);
            grad[i] = truth;
            g[i] = truth + self.model.sigma * xi / sd;
            let w: Array1<T> = (0..n).map(|_| standard_normal(&mut self.rng)).collect();
            let drift = self.model.a.dot(&row).mapv(|v| -v * dt);
            let next = &row + &drift + &self.model.l.dot(&w).mapv(|v| v * sd);
            row.assign(&next);
        }
        Ok((grad, g))
    }
}
