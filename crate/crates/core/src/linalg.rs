//! Small dense linear algebra at desk dimensions (d̃ ≤ 16, d ≤ 64).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn dot<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: ArrayView1<'_, T>) -> T {
    dot(a, a).sqrt()
}

pub fn max_abs<T: Real>(a: ArrayView1<'_, T>) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Maximum absolute column sum.
pub fn norm1<T: Real>(a: ArrayView2<'_, T>) -> T {
    a.columns()
        .into_iter()
        .map(|c| c.iter().fold(T::zero(), |s, &x| s + x.abs()))
        .fold(T::zero(), T::max)
}

pub fn is_square<T>(a: ArrayView2<'_, T>) -> bool {
    a.nrows() == a.ncols()
}

/// Largest absolute asymmetry `|a_ij - a_ji|`.
pub fn asymmetry<T: Real>(a: ArrayView2<'_, T>) -> T {
    let n = a.nrows();
    let mut m = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    m
}

/// Replaces `a` with `(a + aᵀ)/2`.
pub fn symmetrize<T: Real>(a: &mut Array2<T>) {
    let n = a.nrows();
    let half = T::c(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[[i, j]] + a[[j, i]]) * half;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a non-positive pivot appears.
pub fn cholesky<T: Real>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd<T: Real>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Array1<T>> {
    let l = cholesky(a).ok_or_else(|| Error::numerical("solve_spd", "matrix is not positive definite", f64::NAN))?;
    Ok(cholesky_solve(l.view(), b))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues<T: Real>(a: ArrayView2<'_, T>) -> Vec<T> {
    let n = a.nrows();
    let mut m = a.to_owned();
    symmetrize(&mut m);
    let tiny = T::epsilon() * T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let diag: T = (0..n).fold(T::zero(), |s, i| s + m[[i, i]] * m[[i, i]]);
        if off <= tiny * diag.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn matrix_exp<T: Real>(m: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Invalid(format!("matrix_exp needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("matrix_exp input has non-finite entries".into()));
    }
    let norm = norm1(m);
    let mut squarings = 0u32;
    let mut scale = T::one();
    let half = T::c(0.5);
    while norm * scale > half {
        scale *= half;
        squarings += 1;
    }
    let a = m.mapv(|x| x * scale);
    let mut result = Array2::<T>::eye(n);
    let mut term = Array2::<T>::eye(n);
    for j in 1..=40 {
        term = term.dot(&a).mapv(|x| x / T::c(j as f64));
        result += &term;
        if norm1(term.view()) <= T::epsilon() * norm1(result.view()) {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert_eq!(e, Array2::<f64>::eye(3));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = matrix_exp::<f64>(array![[1.0, 0.0], [0.0, -1.0]].view()).unwrap();
        assert!((e[[0, 0]] - std::f64::consts::E).abs() < 1e-13);
        assert!((e[[1, 1]] - (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(e[[0, 1]], 0.0);
    }

    #[test]
    fn exp_of_nilpotent() {
        let e = matrix_exp::<f64>(array![[0.0, 1.0], [0.0, 0.0]].view()).unwrap();
        let want = array![[1.0, 1.0], [0.0, 1.0]];
        for (a, b) in e.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_rejects_rectangular() {
        assert!(matrix_exp(Array2::<f64>::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn cholesky_round_trip() {
        let a: Array2<f64> = array![[4.0, 2.0, 0.4], [2.0, 3.0, 0.5], [0.4, 0.5, 2.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let x = solve_spd(a.view(), array![1.0, 2.0, 3.0].view()).unwrap();
        let r = a.dot(&x) - array![1.0, 2.0, 3.0];
        assert!(max_abs(r.view()) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let ev = sym_eigenvalues::<f64>(array![[2.0, 1.0], [1.0, 2.0]].view());
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
