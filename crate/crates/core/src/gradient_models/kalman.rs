use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::state_space::StateSpaceGradientModel;
use crate::error::{Error, Result};
use crate::linalg::{self, dot};
use crate::scalar::Real;

/// Filter state shared by the discrete and continuous Kalman recursions.
///
/// All `d` gradient coordinates follow identical, independent dynamics, so
/// the covariance, gain and innovation variance are held once and applied to
/// every row of the `d × d̃` mean.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T> {
    pub y_hat: Array2<T>,
    /// Posterior covariance `P_{k|k}` (or `P̄_t` in continuous time).
    pub p: Array2<T>,
    pub gain: Array1<T>,
    /// Innovation variance `S_k`.
    pub s: T,
    /// Predicted covariance `P_{k|k−1}`.
    pub p_pred: Array2<T>,
}

impl<T: Real> KalmanState<T> {
    /// `ŷ₀ = 0` and the given prior covariance.
    pub fn new(dim: usize, p0: Array2<T>) -> Result<Self> {
        let n = p0.nrows();
        if p0.ncols() != n || n == 0 {
            return Err(Error::Invalid("prior covariance must be a non-empty square matrix".into()));
        }
        Ok(Self {
            y_hat: Array2::zeros((dim, n)),
            p_pred: p0.clone(),
            p: p0,
            gain: Array1::zeros(n),
            s: T::zero(),
        })
    }

    pub fn with_mean(mut self, y_hat: Array2<T>) -> Result<Self> {
        if y_hat.ncols() != self.p.nrows() {
            return Err(Error::Invalid("filter mean has the wrong latent dimension".into()));
        }
        self.y_hat = y_hat;
        Ok(self)
    }

    pub fn latent_dim(&self) -> usize {
        self.p.nrows()
    }

    /// Filtered gradient `ĝ_i = bᵀ ŷ_i`.
    pub fn gradient_estimate(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        self.y_hat.dot(&b)
    }
}

/// One step of the discrete Kalman filter for
/// `y_{k+1} = Ã y_k + L̃ w_k`, `g_k = bᵀ y_k + σ_disc ξ_k`:
///
/// ```text
/// P_{k|k−1} = Ã P_{k−1|k−1} Ãᵀ + L̃ L̃ᵀ
/// S_k       = σ_disc² + bᵀ P_{k|k−1} b
/// K_k       = P_{k|k−1} b / S_k
/// P_{k|k}   = (I − K_k bᵀ) P_{k|k−1}
/// ŷ_{i,k}   = Ã ŷ_{i,k−1} + K_k (g_{i,k} − bᵀ Ã ŷ_{i,k−1})
/// ```
pub fn kalman_discrete_step<T: Real>(
    state: &KalmanState<T>,
    g: ArrayView1<'_, T>,
    a_tilde: ArrayView2<'_, T>,
    l_tilde: ArrayView2<'_, T>,
    b: ArrayView1<'_, T>,
    sigma_disc: T,
) -> Result<KalmanState<T>> {
    let n = state.latent_dim();
    if a_tilde.dim() != (n, n) || l_tilde.dim() != (n, n) || b.len() != n {
        return Err(Error::Invalid("Kalman step matrices do not match the filter dimension".into()));
    }
    if g.len() != state.y_hat.nrows() {
        return Err(Error::Invalid(format!(
            "observation has {} coordinates, filter tracks {}",
            g.len(),
            state.y_hat.nrows()
        )));
    }
    let mut p_pred = a_tilde.dot(&state.p).dot(&a_tilde.t()) + l_tilde.dot(&l_tilde.t());
    linalg::symmetrize(&mut p_pred);
    let pb = p_pred.dot(&b);
    let s = sigma_disc * sigma_disc + dot(b, pb.view());
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::numerical("kalman_discrete_step", "innovation variance is not positive", s.to_f64_lossy()));
    }
    let gain = pb.mapv(|v| v / s);
    let outer = gain
        .view()
        .insert_axis(Axis(1))
        .dot(&b.insert_axis(Axis(0)));
    let mut p = (Array2::eye(n) - &outer).dot(&p_pred);
    linalg::symmetrize(&mut p);

    let pred = state.y_hat.dot(&a_tilde.t());
    let mut y_hat = pred.clone();
    for (i, mut row) in y_hat.rows_mut().into_iter().enumerate() {
        let innovation = g[i] - dot(b, pred.row(i));
        row.scaled_add(innovation, &gain);
    }
    Ok(KalmanState {
        y_hat,
        p,
        gain,
        s,
        p_pred,
    })
}

/// One explicit Euler step of the Kalman-Bucy filter:
///
/// ```text
/// dŷ_i = −A ŷ_i dt + σ⁻² P̄ b (g_i − bᵀŷ_i) dt
/// dP̄   = (−A P̄ − P̄ Aᵀ − σ⁻² P̄ b bᵀ P̄ + L Lᵀ) dt
/// ```
///
/// `g` is the observation rate over the step. Fails when the updated
/// covariance acquires an eigenvalue below `−1e-8` (step too large).
pub fn kalman_bucy_step<T: Real>(
    state: &KalmanState<T>,
    g: ArrayView1<'_, T>,
    dt: T,
    model: &StateSpaceGradientModel<T>,
) -> Result<KalmanState<T>> {
    let n = state.latent_dim();
    if n != model.latent_dim() || g.len() != state.y_hat.nrows() {
        return Err(Error::Invalid("Kalman-Bucy step shapes do not match the model".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::Invalid("Kalman-Bucy step needs dt > 0".into()));
    }
    let a = model.a();
    let l = model.l();
    let b = model.b();
    let sigma = model.sigma();
    if !(sigma > T::zero()) {
        return Err(Error::Invalid("Kalman-Bucy filter needs sigma > 0".into()));
    }
    let inv_var = T::one() / (sigma * sigma);
    let pb = state.p.dot(b);
    let gain = pb.mapv(|v| v * inv_var);

    let decay = state.y_hat.dot(&a.t());
    let mut y_hat = state.y_hat.clone();
    for (i, mut row) in y_hat.rows_mut().into_iter().enumerate() {
        let innovation = g[i] - dot(b.view(), state.y_hat.row(i));
        row.scaled_add(-dt, &decay.row(i));
        row.scaled_add(dt * innovation, &gain);
    }

    let pb_col = pb.view().insert_axis(Axis(1));
    let riccati = -a.dot(&state.p) - state.p.dot(&a.t()) - pb_col.dot(&pb_col.t()).mapv(|v| v * inv_var)
        + l.dot(&l.t());
    let mut p = &state.p + &riccati.mapv(|v| v * dt);
    linalg::symmetrize(&mut p);
    // P + 1e-8·I factors exactly when the smallest eigenvalue exceeds −1e-8.
    let mut shifted = p.clone();
    shifted.diag_mut().mapv_inplace(|v| v + T::tol(1e-8));
    if linalg::cholesky(shifted.view()).is_none() {
        let min_ev = linalg::sym_eigenvalues(p.view())[0];
        return Err(Error::numerical(
            "kalman_bucy_step",
            "covariance lost positive semi-definiteness; reduce dt",
            min_ev.to_f64_lossy(),
        ));
    }
    Ok(KalmanState {
        y_hat,
        p_pred: p.clone(),
        p,
        gain,
        s: sigma * sigma,
    })
}

/// Steady-state gain of the time-invariant discrete filter.
///
/// Iterates the covariance fixed point `S = Ã Σ Ãᵀ + L̃ L̃ᵀ`,
/// `K = S b (bᵀ S b + σ²)⁻¹`, `Σ = (I − K bᵀ) S` from `Σ = 0` until successive
/// gains differ by at most `1e-10` (max-norm), for at most `10⁵` iterations.
pub fn kalman_steady_gain<T: Real>(
    a_tilde: ArrayView2<'_, T>,
    l_tilde: ArrayView2<'_, T>,
    b: ArrayView1<'_, T>,
    sigma_disc: T,
) -> Result<Array1<T>> {
    let n = b.len();
    if a_tilde.dim() != (n, n) || l_tilde.dim() != (n, n) {
        return Err(Error::Invalid("steady-gain matrices do not match b".into()));
    }
    let q = l_tilde.dot(&l_tilde.t());
    let tol = T::tol(1e-10);
    let mut sigma_post = Array2::<T>::zeros((n, n));
    let mut prev: Option<Array1<T>> = None;
    let mut last_change = T::infinity();
    for _ in 0..100_000 {
        let s = a_tilde.dot(&sigma_post).dot(&a_tilde.t()) + &q;
        let sb = s.dot(&b);
        let denom = dot(b, sb.view()) + sigma_disc * sigma_disc;
        if !(denom > T::zero()) || !denom.is_finite() {
            return Err(Error::numerical("kalman_steady_gain", "innovation variance is not positive", denom.to_f64_lossy()));
        }
        let k = sb.mapv(|v| v / denom);
        let outer = k.view().insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)));
        sigma_post = (Array2::eye(n) - &outer).dot(&s);
        linalg::symmetrize(&mut sigma_post);
        if let Some(p) = &prev {
            last_change = linalg::max_abs((&k - p).view());
            if last_change <= tol {
                return Ok(k);
            }
        }
        if k.iter().any(|v| !v.is_finite()) {
            break;
        }
        prev = Some(k);
    }
    Err(Error::numerical(
        "kalman_steady_gain",
        "fixed-point iteration did not converge",
        last_change.to_f64_lossy(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_recursion_scalar_step() {
        let st = KalmanState::new(1, array![[0.0]]).unwrap();
        let next = kalman_discrete_step(
            &st,
            array![1.0].view(),
            array![[1.0]].view(),
            array![[1.0]].view(),
            array![1.0].view(),
            1.0,
        )
        .unwrap();
        assert_eq!(next.p_pred[[0, 0]], 1.0);
        assert_eq!(next.s, 2.0);
        assert_eq!(next.gain[0], 0.5);
        assert_eq!(next.y_hat[[0, 0]], 0.5);
        assert_eq!(next.p[[0, 0]], 0.5);
    }

    #[test]
    fn zero_uncertainty_is_pure_prediction() {
        let at = array![[0.9, 0.1], [0.0, 0.8]];
        let lt = Array2::zeros((2, 2));
        let b = array![1.0, 1.0];
        let mut st = KalmanState::new(1, Array2::zeros((2, 2)))
            .unwrap()
            .with_mean(array![[1.0, -1.0]])
            .unwrap();
        let mut want = array![1.0, -1.0];
        for k in 0..5 {
            st = kalman_discrete_step(&st, array![k as f64].view(), at.view(), lt.view(), b.view(), 0.5).unwrap();
            want = at.dot(&want);
            assert!(st.gain.iter().all(|v| *v == 0.0));
            assert!((st.y_hat.row(0).to_owned() - &want).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let at: Array2<f64> = array![[0.9, 0.1], [0.05, 0.7]];
        let lt = array![[0.3, 0.0], [0.1, 0.2]];
        let b = array![1.0, 0.5];
        let st = KalmanState::new(2, Array2::eye(2))
            .unwrap()
            .with_mean(array![[1.0, 2.0], [-0.5, 0.25]])
            .unwrap();
        let pred = st.y_hat.dot(&at.t());
        let g = pred.dot(&b);
        let next = kalman_discrete_step(&st, g.view(), at.view(), lt.view(), b.view(), 0.3).unwrap();
        assert!((&next.y_hat - &pred).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn steady_gain_scalar_cases() {
        let k0 = kalman_steady_gain::<f64>(array![[0.0]].view(), array![[1.0]].view(), array![1.0].view(), 1.0).unwrap();
        assert!((k0[0] - 0.5).abs() < 1e-12);
        let k1 = kalman_steady_gain(array![[1.0]].view(), array![[1.0]].view(), array![1.0].view(), 1.0).unwrap();
        assert!((k1[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn steady_gain_without_process_noise_is_zero() {
        let k = kalman_steady_gain(array![[0.9]].view(), array![[0.0]].view(), array![1.0].view(), 1.0).unwrap();
        assert_eq!(k[0], 0.0);
    }

    #[test]
    fn bucy_zero_gain_is_pure_decay() {
        let model =
            StateSpaceGradientModel::new(array![[2.0]], array![[0.0]], array![1.0], 1.0, 1).unwrap();
        let st = KalmanState::new(1, array![[0.0]]).unwrap().with_mean(array![[1.0]]).unwrap();
        let next = kalman_bucy_step(&st, array![5.0].view(), 0.01, &model).unwrap();
        assert_eq!(next.y_hat[[0, 0]], 1.0 - 0.01 * 2.0);
        assert_eq!(next.p[[0, 0]], 0.0);
    }

    #[test]
    fn bucy_rejects_oversized_steps() {
        let model = StateSpaceGradientModel::new(array![[1.0]], array![[0.0]], array![1.0], 0.1, 1).unwrap();
        let st = KalmanState::new(1, array![[10.0]]).unwrap();
        // P + dt(−2P − 100P²) with dt = 1 is far below zero.
        let err = kalman_bucy_step(&st, array![0.0].view(), 1.0, &model).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }
}
