//! Adaptive Simpson quadrature for smooth scalar and vector integrands.

use ndarray::{Array1, Zip};

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::scalar::Real;

/// Adaptive Simpson rule.
///
/// The acceptance test on a panel is the usual `|S₂ − S₁| ≤ 15·tol`, with the
/// tolerance halved at every split. The global tolerance is
/// `max(abs_tol, rel_tol·|I|)` where `|I|` is a coarse composite estimate;
/// the relative floor only matters for integrands of very large magnitude.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSimpson<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
    pub max_depth: u32,
}

impl<T: Real> Default for AdaptiveSimpson<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::tol(1e-10),
            rel_tol: T::tol(1e-12),
            max_intervals: 1 << 20,
            max_depth: 48,
        }
    }
}

struct Panel<T> {
    a: T,
    b: T,
    fa: Array1<T>,
    fm: Array1<T>,
    fb: Array1<T>,
    whole: Array1<T>,
    tol: T,
    depth: u32,
}

fn simpson<T: Real>(a: T, b: T, fa: &Array1<T>, fm: &Array1<T>, fb: &Array1<T>) -> Array1<T> {
    let w = (b - a) / T::c(6.0);
    let mut out = fm.mapv(|x| x * T::c(4.0));
    Zip::from(&mut out).and(fa).and(fb).for_each(|o, &x, &y| *o = (*o + x + y) * w);
    out
}

impl<T: Real> AdaptiveSimpson<T> {
    pub fn with_abs_tol(abs_tol: T) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    pub fn integrate<F>(&self, mut f: F, a: T, b: T) -> Result<T>
    where
        F: FnMut(T) -> T,
    {
        let v = self.integrate_vec(|t| Array1::from_elem(1, f(t)), a, b)?;
        Ok(v[0])
    }

    /// Integrates a vector-valued function componentwise; the error
    /// criterion uses the max-norm across components.
    pub fn integrate_vec<F>(&self, mut f: F, a: T, b: T) -> Result<Array1<T>>
    where
        F: FnMut(T) -> Array1<T>,
    {
        if a == b {
            let dim = f(a).len();
            return Ok(Array1::zeros(dim));
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Invalid("quadrature bounds must be finite".into()));
        }
        let (lo, hi, sign) = if a < b { (a, b, T::one()) } else { (b, a, -T::one()) };

        // Coarse composite estimate to scale the relative tolerance.
        let coarse_panels = 16usize;
        let h = (hi - lo) / T::c(coarse_panels as f64);
        let mut panels: Vec<Panel<T>> = Vec::with_capacity(coarse_panels);
        let mut coarse = None::<Array1<T>>;
        let mut left = f(lo);
        for i in 0..coarse_panels {
            let pa = lo + h * T::c(i as f64);
            let pb = if i + 1 == coarse_panels { hi } else { lo + h * T::c((i + 1) as f64) };
            let pm = (pa + pb) * T::c(0.5);
            let fm = f(pm);
            let fb = f(pb);
            let whole = simpson(pa, pb, &left, &fm, &fb);
            coarse = Some(match coarse {
                None => whole.clone(),
                Some(c) => c + &whole,
            });
            panels.push(Panel {
                a: pa,
                b: pb,
                fa: left,
                fm,
                fb: fb.clone(),
                whole,
                tol: T::zero(),
                depth: 0,
            });
            left = fb;
        }
        let coarse = coarse.expect("at least one panel");
        if coarse.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("adaptive_simpson", "integrand is not finite", f64::NAN));
        }
        let global_tol = self.abs_tol.max(self.rel_tol * max_abs(coarse.view()));
        let per_panel = global_tol / T::c(coarse_panels as f64);
        for p in panels.iter_mut() {
            p.tol = per_panel;
        }

        let mut total = Array1::<T>::zeros(coarse.len());
        let mut stack: Vec<Panel<T>> = panels.into_iter().rev().collect();
        let mut intervals = stack.len();
        let mut worst = T::zero();
        while let Some(p) = stack.pop() {
            let m = (p.a + p.b) * T::c(0.5);
            let lm = (p.a + m) * T::c(0.5);
            let rm = (m + p.b) * T::c(0.5);
            let flm = f(lm);
            let frm = f(rm);
            let left = simpson(p.a, m, &p.fa, &flm, &p.fm);
            let right = simpson(m, p.b, &p.fm, &frm, &p.fb);
            let refined = &left + &right;
            let diff = &refined - &p.whole;
            let err = max_abs(diff.view());
            if !err.is_finite() {
                return Err(Error::numerical("adaptive_simpson", "integrand is not finite", f64::NAN));
            }
            if err <= T::c(15.0) * p.tol || p.depth >= self.max_depth {
                if p.depth >= self.max_depth {
                    worst = worst.max(err / T::c(15.0));
                }
                total = total + &refined + &diff.mapv(|x| x / T::c(15.0));
                continue;
            }
            intervals += 1;
            if intervals > self.max_intervals {
                return Err(Error::numerical(
                    "adaptive_simpson",
                    format!("exceeded {} subintervals", self.max_intervals),
                    err.to_f64_lossy(),
                ));
            }
            let half_tol = p.tol * T::c(0.5);
            stack.push(Panel {
                a: m,
                b: p.b,
                fa: p.fm.clone(),
                fm: frm,
                fb: p.fb,
                whole: right,
                tol: half_tol,
                depth: p.depth + 1,
            });
            stack.push(Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
                tol: half_tol,
                depth: p.depth + 1,
            });
        }
        if worst > global_tol {
            return Err(Error::numerical(
                "adaptive_simpson",
                "maximum recursion depth reached before tolerance",
                worst.to_f64_lossy(),
            ));
        }
        Ok(total.mapv(|x| x * sign))
    }
}
