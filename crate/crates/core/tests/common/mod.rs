//! Independent oracles shared by integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng as _;
use varopt_core::rng::{standard_normal, Rng};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn random_matrix(rng: &mut Rng, n: usize, m: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| scale * standard_normal::<f64>(rng))
}

pub fn random_vector(rng: &mut Rng, n: usize, scale: f64) -> Array1<f64> {
    (0..n).map(|_| scale * standard_normal::<f64>(rng)).collect()
}

pub fn random_spd(rng: &mut Rng, n: usize) -> Array2<f64> {
    let g = random_matrix(rng, n, n, 1.0);
    let shift: f64 = rng.random_range(0.2..1.0);
    g.dot(&g.t()) + Array2::<f64>::eye(n) * shift
}

/// Posterior of `y_k` given scalar observations `g_1..g_k` of
/// `y_j = Ã y_{j−1} + L̃ w_j`, `g_j = bᵀ y_j + σ ξ_j`, `y_0 ~ N(0, P₀)`,
/// computed by writing everything as a linear map of independent standard
/// normals and conditioning the joint Gaussian directly.
pub struct GaussianConditioning {
    a: DMatrix<f64>,
    l: DMatrix<f64>,
    b: DVector<f64>,
    sigma: f64,
    c0: DMatrix<f64>,
}

impl GaussianConditioning {
    pub fn new(a: &Array2<f64>, l: &Array2<f64>, b: &Array1<f64>, sigma: f64, p0: &Array2<f64>) -> Self {
        let c0 = to_na(p0).cholesky().expect("P0 must be SPD").l();
        Self {
            a: to_na(a),
            l: to_na(l),
            b: DVector::from_iterator(b.len(), b.iter().copied()),
            sigma,
            c0,
        }
    }

    /// Returns `(mean, covariance)` of `y_k | g_1..g_k` for `k = g.len()`.
    pub fn posterior(&self, g: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.b.len();
        let k = g.len();
        // Noise vector u = (z0 [n], w_1..w_k [n each], ξ_1..ξ_k).
        let dim_u = n + k * n + k;
        let mut f = DMatrix::<f64>::zeros(n, dim_u);
        f.view_mut((0, 0), (n, n)).copy_from(&self.c0);
        let mut obs = DMatrix::<f64>::zeros(k, dim_u);
        for j in 1..=k {
            f = &self.a * &f;
            let col = n + (j - 1) * n;
            let lw = f.view((0, col), (n, n)) + &self.l;
            f.view_mut((0, col), (n, n)).copy_from(&lw);
            let row = self.b.transpose() * &f;
            obs.row_mut(j - 1).copy_from(&row);
            obs[(j - 1, n + k * n + (j - 1))] = self.sigma;
        }
        if k == 0 {
            return (DVector::zeros(n), &f * f.transpose());
        }
        let s_yy = &f * f.transpose();
        let s_yg = &f * obs.transpose();
        let s_gg = &obs * obs.transpose();
        let chol = s_gg.cholesky().expect("observation covariance SPD");
        let gv = DVector::from_column_slice(g);
        let mean = &s_yg * chol.solve(&gv);
        let cov = s_yy - &s_yg * chol.solve(&s_yg.transpose());
        (mean, cov)
    }
}

/// Composite Simpson on `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
