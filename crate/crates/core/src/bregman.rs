//! Mirror maps, Bregman divergences and convex duals.
//!
//! A [`MirrorMap`] bundles a strictly convex reference function `h` with its
//! gradient, Hessian and the inverse gradient `∇h* = (∇h)⁻¹`, together with
//! declared strong-convexity (`mu`) and gradient-Lipschitz (`lip`) constants.
//!
//! Two maps are built in:
//! - quadratic, `h(x) = ½ xᵀMx` for symmetric positive-definite `M`
//!   (identity, diagonal, or a full matrix);
//! - negative entropy, `h(x) = Σ xᵢ log xᵢ` on the open positive orthant.
//!
//! The entropy map is only strongly convex with Lipschitz gradient on a
//! bounded box `[lo, hi]^d`; its declared constants are `mu = 1/hi` and
//! `lip = 1/lo`. Points outside the box are still accepted as long as every
//! coordinate is strictly positive, but the constants no longer apply there.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, cholesky_solve, dot, norm2};
use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(ArrayView1<'_, T>) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn(ArrayView1<'_, T>) -> Array1<T> + Send + Sync>;
pub type MatrixFn<T> = Arc<dyn Fn(ArrayView1<'_, T>) -> Array2<T> + Send + Sync>;
pub type DomainFn<T> = Arc<dyn Fn(ArrayView1<'_, T>) -> bool + Send + Sync>;

/// The matrix `M` of a quadratic mirror map.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric<T> {
    Identity,
    Diagonal(Array1<T>),
    Full { m: Array2<T>, chol: Array2<T> },
}

impl<T: Real> Metric<T> {
    fn apply(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        match self {
            Metric::Identity => x.to_owned(),
            Metric::Diagonal(d) => &x * d,
            Metric::Full { m, .. } => m.dot(&x),
        }
    }

    fn solve(&self, z: ArrayView1<'_, T>) -> Array1<T> {
        match self {
            Metric::Identity => z.to_owned(),
            Metric::Diagonal(d) => &z / d,
            Metric::Full { chol, .. } => cholesky_solve(chol.view(), z),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Metric::Identity => None,
            Metric::Diagonal(d) => Some(d.len()),
            Metric::Full { m, .. } => Some(m.nrows()),
        }
    }
}

/// User-supplied reference function.
#[derive(Clone)]
pub struct CustomMap<T> {
    pub h: ScalarFn<T>,
    pub grad: VectorFn<T>,
    pub hess: MatrixFn<T>,
    /// Closed-form `∇h*`; when absent the gradient is inverted by damped Newton.
    pub grad_dual: Option<VectorFn<T>>,
    /// Domain membership test; absent means all of `R^d`.
    pub domain: Option<DomainFn<T>>,
}

#[derive(Clone)]
pub enum MapKind<T> {
    Quadratic(Metric<T>),
    Entropy { lo: T, hi: T },
    Custom(CustomMap<T>),
}

impl<T: fmt::Debug> fmt::Debug for MapKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Quadratic(m) => f.debug_tuple("Quadratic").field(m).finish(),
            MapKind::Entropy { lo, hi } => f.debug_struct("Entropy").field("lo", lo).field("hi", hi).finish(),
            MapKind::Custom(c) => f
                .debug_struct("Custom")
                .field("closed_form_dual", &c.grad_dual.is_some())
                .finish(),
        }
    }
}

/// Newton settings for inverting `∇h` of a custom map.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings<T> {
    pub max_iter: usize,
    pub tol: T,
}

impl<T: Real> Default for NewtonSettings<T> {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: T::tol(1e-10),
        }
    }
}

/// Strictly convex reference function with its derivatives and dual map.
#[derive(Clone, Debug)]
pub struct MirrorMap<T> {
    kind: MapKind<T>,
    mu: T,
    lip: T,
    newton: NewtonSettings<T>,
}

impl<T: Real> MirrorMap<T> {
    /// `h(x) = ½‖x‖²`, valid in every dimension.
    pub fn euclidean() -> Self {
        Self {
            kind: MapKind::Quadratic(Metric::Identity),
            mu: T::one(),
            lip: T::one(),
            newton: NewtonSettings::default(),
        }
    }

    /// `h(x) = ½ xᵀ diag(d) x` with strictly positive diagonal.
    pub fn quadratic_diagonal(diag: Array1<T>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::Invalid("quadratic map diagonal must be finite and strictly positive".into()));
        }
        let mu = diag.iter().copied().fold(T::infinity(), T::min);
        let lip = diag.iter().copied().fold(T::zero(), T::max);
        Ok(Self {
            kind: MapKind::Quadratic(Metric::Diagonal(diag)),
            mu,
            lip,
            newton: NewtonSettings::default(),
        })
    }

    /// `h(x) = ½ xᵀMx` for symmetric positive-definite `M`.
    pub fn quadratic(m: Array2<T>) -> Result<Self> {
        if !linalg::is_square(m.view()) {
            return Err(Error::Invalid("quadratic map matrix must be square".into()));
        }
        if linalg::asymmetry(m.view()) > T::tol(1e-12) * linalg::norm1(m.view()).max(T::one()) {
            return Err(Error::Invalid("quadratic map matrix must be symmetric".into()));
        }
        let chol = cholesky(m.view())
            .ok_or_else(|| Error::Invalid("quadratic map matrix must be positive definite".into()))?;
        let ev = linalg::sym_eigenvalues(m.view());
        let mu = ev[0];
        let lip = ev[ev.len() - 1];
        Ok(Self {
            kind: MapKind::Quadratic(Metric::Full { m, chol }),
            mu,
            lip,
            newton: NewtonSettings::default(),
        })
    }

    /// Negative entropy with constants declared for the box `[lo, hi]^d`.
    pub fn entropy(lo: T, hi: T) -> Result<Self> {
        if !(lo > T::zero() && hi > lo && hi.is_finite()) {
            return Err(Error::Invalid("entropy map box needs 0 < lo < hi < inf".into()));
        }
        Ok(Self {
            kind: MapKind::Entropy { lo, hi },
            mu: T::one() / hi,
            lip: T::one() / lo,
            newton: NewtonSettings::default(),
        })
    }

    /// Wraps a user-supplied reference function with declared constants.
    pub fn custom(map: CustomMap<T>, mu: T, lip: T) -> Result<Self> {
        if !(mu > T::zero() && lip >= mu) {
            return Err(Error::Invalid("custom map needs 0 < mu <= lip".into()));
        }
        Ok(Self {
            kind: MapKind::Custom(map),
            mu,
            lip,
            newton: NewtonSettings::default(),
        })
    }

    pub fn with_newton(mut self, newton: NewtonSettings<T>) -> Self {
        self.newton = newton;
        self
    }

    pub fn kind(&self) -> &MapKind<T> {
        &self.kind
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn lip(&self) -> T {
        self.lip
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, MapKind::Quadratic(_))
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MapKind::Quadratic(_) => "quadratic",
            MapKind::Entropy { .. } => "entropy",
            MapKind::Custom(_) => "custom",
        }
    }

    /// Rejects points outside the map's domain.
    pub fn check_domain(&self, x: ArrayView1<'_, T>) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        match &self.kind {
            MapKind::Quadratic(m) => {
                if let Some(d) = m.dim() {
                    if d != x.len() {
                        return Err(Error::Domain(format!("point has dimension {}, map has {}", x.len(), d)));
                    }
                }
                Ok(())
            }
            MapKind::Entropy { .. } => match x.iter().position(|&v| !(v > T::zero())) {
                Some(i) => Err(Error::Domain(format!(
                    "entropy map needs strictly positive coordinates, x[{i}] = {}",
                    x[i]
                ))),
                None => Ok(()),
            },
            MapKind::Custom(c) => match &c.domain {
                Some(inside) if !inside(x) => Err(Error::Domain("point outside custom map domain".into())),
                _ => Ok(()),
            },
        }
    }

    /// `h(x)`.
    pub fn value(&self, x: ArrayView1<'_, T>) -> Result<T> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            MapKind::Quadratic(m) => T::c(0.5) * dot(x, m.apply(x).view()),
            MapKind::Entropy { .. } => x.iter().fold(T::zero(), |s, &v| s + v * v.ln()),
            MapKind::Custom(c) => (c.h)(x),
        })
    }

    /// `∇h(x)`.
    pub fn grad(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            MapKind::Quadratic(m) => m.apply(x),
            MapKind::Entropy { .. } => x.mapv(|v| T::one() + v.ln()),
            MapKind::Custom(c) => (c.grad)(x),
        })
    }

    /// `∇²h(x)`.
    pub fn hess(&self, x: ArrayView1<'_, T>) -> Result<Array2<T>> {
        self.check_domain(x)?;
        let n = x.len();
        Ok(match &self.kind {
            MapKind::Quadratic(Metric::Identity) => Array2::eye(n),
            MapKind::Quadratic(Metric::Diagonal(d)) => Array2::from_diag(d),
            MapKind::Quadratic(Metric::Full { m, .. }) => m.clone(),
            MapKind::Entropy { .. } => Array2::from_diag(&x.mapv(|v| T::one() / v)),
            MapKind::Custom(c) => (c.hess)(x),
        })
    }

    /// `∇h*(z) = (∇h)⁻¹(z)`: closed form for built-in maps, damped Newton for
    /// custom maps without a supplied dual gradient.
    pub fn grad_dual(&self, z: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dual point has non-finite coordinates".into()));
        }
        let x = match &self.kind {
            MapKind::Quadratic(m) => m.solve(z),
            MapKind::Entropy { .. } => z.mapv(|v| (v - T::one()).exp()),
            MapKind::Custom(c) => match &c.grad_dual {
                Some(g) => g(z),
                None => return self.newton_inverse(c, z),
            },
        };
        self.check_domain(x.view())
            .map_err(|e| Error::Domain(format!("dual point maps outside the primal domain ({e})")))?;
        Ok(x)
    }

    fn newton_inverse(&self, c: &CustomMap<T>, z: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let target = self.newton.tol * (T::one() + norm2(z));
        let residual_at = |x: &Array1<T>| -> Option<(Array1<T>, T)> {
            if let Some(inside) = &c.domain {
                if !inside(x.view()) {
                    return None;
                }
            }
            let r = (c.grad)(x.view()) - z;
            let n = norm2(r.view());
            n.is_finite().then_some((r, n))
        };
        // Start from the map's minimiser direction: ∇h*(z) for the quadratic
        // with the declared curvature is a reasonable first guess.
        let mut x = z.mapv(|v| v / self.lip);
        let (mut r, mut rn) = match residual_at(&x) {
            Some(v) => v,
            None => {
                x = Array1::zeros(z.len());
                residual_at(&x).ok_or_else(|| Error::numerical("grad_dual", "no feasible starting point", f64::NAN))?
            }
        };
        for _ in 0..self.newton.max_iter {
            if rn <= target {
                return Ok(x);
            }
            let h = (c.hess)(x.view());
            let chol = cholesky(h.view())
                .ok_or_else(|| Error::numerical("grad_dual", "Hessian not positive definite", rn.to_f64_lossy()))?;
            let step = cholesky_solve(chol.view(), r.view());
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &x - &step.mapv(|s| s * t);
                if let Some((tr, tn)) = residual_at(&trial) {
                    if tn < rn || tn <= target {
                        x = trial;
                        r = tr;
                        rn = tn;
                        accepted = true;
                        break;
                    }
                }
                t *= T::c(0.5);
            }
            if !accepted {
                break;
            }
        }
        if rn <= target {
            Ok(x)
        } else {
            Err(Error::numerical(
                "grad_dual",
                format!("Newton inversion did not converge in {} iterations", self.newton.max_iter),
                rn.to_f64_lossy(),
            ))
        }
    }

    /// `h*(z) = ⟨∇h*(z), z⟩ − h(∇h*(z))`, evaluated through [`Self::grad_dual`].
    pub fn dual_value(&self, z: ArrayView1<'_, T>) -> Result<T> {
        let x = self.grad_dual(z)?;
        Ok(dot(x.view(), z) - self.value(x.view())?)
    }

    /// Bregman divergence `D_h(y, x) = h(y) − h(x) − ⟨∇h(x), y − x⟩`.
    ///
    /// Built-in maps use algebraically equivalent closed forms, which are
    /// non-negative by construction.
    pub fn divergence(&self, y: ArrayView1<'_, T>, x: ArrayView1<'_, T>) -> Result<T> {
        self.check_domain(y)?;
        self.check_domain(x)?;
        if y.len() != x.len() {
            return Err(Error::Invalid("divergence arguments differ in dimension".into()));
        }
        Ok(match &self.kind {
            MapKind::Quadratic(m) => {
                let diff = &y - &x;
                T::c(0.5) * dot(diff.view(), m.apply(diff.view()).view())
            }
            MapKind::Entropy { .. } => y
                .iter()
                .zip(x.iter())
                .fold(T::zero(), |s, (&yi, &xi)| s + yi * (yi / xi).ln() - yi + xi),
            MapKind::Custom(c) => {
                let g = (c.grad)(x);
                let diff = &y - &x;
                (c.h)(y) - (c.h)(x) - dot(g.view(), diff.view())
            }
        })
    }

    /// `D_{h*}(u, v) = h*(u) − h*(v) − ⟨∇h*(v), u − v⟩`.
    pub fn dual_divergence(&self, u: ArrayView1<'_, T>, v: ArrayView1<'_, T>) -> Result<T> {
        let xv = self.grad_dual(v)?;
        let diff = &u - &v;
        Ok(self.dual_value(u)? - self.dual_value(v)? - dot(xv.view(), diff.view()))
    }

    /// Residual of the duality identity `D_h(x, y) = D_{h*}(∇h(y), ∇h(x))`.
    pub fn dual_divergence_check(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<T> {
        let primal = self.divergence(x, y)?;
        let gx = self.grad(x)?;
        let gy = self.grad(y)?;
        let dual = self.dual_divergence(gy.view(), gx.view())?;
        Ok((primal - dual).abs())
    }

    /// Checks the declared `mu` and `lip` against Hessian eigenvalues at the
    /// given probe points (relative slack `1e-8`).
    pub fn check_constants<'a, I>(&self, points: I) -> Result<()>
    where
        I: IntoIterator<Item = ArrayView1<'a, T>>,
        T: 'a,
    {
        let slack = T::tol(1e-8);
        for p in points {
            let ev = linalg::sym_eigenvalues(self.hess(p)?.view());
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if lo < self.mu * (T::one() - slack) || hi > self.lip * (T::one() + slack) {
                return Err(Error::Invalid(format!(
                    "Hessian eigenvalues [{lo}, {hi}] fall outside declared [{}, {}]",
                    self.mu, self.lip
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_divergence(map: &MirrorMap<f64>, y: &Array1<f64>, x: &Array1<f64>) -> f64 {
        // Direct evaluation of the defining formula with a central-difference gradient.
        let h = 1e-6;
        let mut g = Array1::zeros(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (map.value(xp.view()).unwrap() - map.value(xm.view()).unwrap()) / (2.0 * h);
        }
        map.value(y.view()).unwrap() - map.value(x.view()).unwrap() - g.dot(&(y - x))
    }

    #[test]
    fn euclidean_divergence_is_half_squared_distance() {
        let m = MirrorMap::<f64>::euclidean();
        let d = m.divergence(array![3.0, 4.0].view(), array![0.0, 0.0].view()).unwrap();
        assert_eq!(d, 12.5);
    }

    #[test]
    fn divergence_of_point_with_itself_is_zero() {
        let x = array![0.3, 1.7, 2.0];
        for m in [
            MirrorMap::<f64>::euclidean(),
            MirrorMap::entropy(0.1, 10.0).unwrap(),
            MirrorMap::quadratic_diagonal(array![1.0, 2.0, 3.0]).unwrap(),
        ] {
            assert_eq!(m.divergence(x.view(), x.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn weighted_quadratic_divergence_matches_finite_differences() {
        let m = MirrorMap::quadratic_diagonal(array![2.0, 4.0]).unwrap();
        let x = array![1.0, 0.0];
        let y = array![0.0, 1.0];
        let d = m.divergence(y.view(), x.view()).unwrap();
        let oracle = fd_divergence(&m, &y, &x);
        // ½(1·2 + 1·4) = 3
        assert!((oracle - 3.0).abs() < 1e-8);
        assert!((d - oracle).abs() <= 1e-6 * oracle.abs());
    }

    #[test]
    fn grad_dual_closed_forms() {
        let e = MirrorMap::<f64>::euclidean();
        assert_eq!(e.grad_dual(array![1.0, 2.0].view()).unwrap(), array![1.0, 2.0]);
        let q = MirrorMap::quadratic_diagonal(array![2.0, 4.0]).unwrap();
        assert_eq!(q.grad_dual(array![2.0, 4.0].view()).unwrap(), array![1.0, 1.0]);
        let h = MirrorMap::entropy(0.1, 10.0).unwrap();
        assert_eq!(h.grad_dual(array![1.0, 1.0].view()).unwrap(), array![1.0, 1.0]);
    }

    #[test]
    fn full_matrix_quadratic_round_trip() {
        let q = MirrorMap::<f64>::quadratic(array![[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let x = array![0.7, -1.3];
        let back = q.grad_dual(q.grad(x.view()).unwrap().view()).unwrap();
        assert!((back - &x).iter().all(|v| v.abs() < 1e-14));
        assert!(q.mu() < q.lip());
    }

    #[test]
    fn entropy_rejects_non_positive_points() {
        let h = MirrorMap::entropy(0.1, 10.0).unwrap();
        let err = h.divergence(array![1.0, 0.0].view(), array![1.0, 1.0].view()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(h.grad(array![-1.0].view()).is_err());
    }

    #[test]
    fn dual_check_on_entropy_pair() {
        let h = MirrorMap::entropy(0.1, 10.0).unwrap();
        let r = h.dual_divergence_check(array![1.0, 2.0].view(), array![2.0, 1.0].view()).unwrap();
        assert!(r <= 1e-8, "{r}");
        let z = h.dual_divergence_check(array![1.5, 0.5].view(), array![1.5, 0.5].view()).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn rejects_bad_constructors() {
        assert!(MirrorMap::quadratic_diagonal(array![1.0, 0.0]).is_err());
        assert!(MirrorMap::quadratic(array![[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(MirrorMap::quadratic(array![[1.0, 0.1], [0.0, 1.0]]).is_err());
        assert!(MirrorMap::<f64>::entropy(0.0, 1.0).is_err());
    }

    fn quartic_map(closed_dual: bool) -> MirrorMap<f64> {
        // h(x) = Σ (x²/2 + x⁴/12): gradient x + x³/3, Hessian 1 + x².
        let map = CustomMap {
            h: Arc::new(|x: ArrayView1<'_, f64>| x.iter().map(|v| v * v / 2.0 + v.powi(4) / 12.0).sum()),
            grad: Arc::new(|x: ArrayView1<'_, f64>| x.mapv(|v| v + v.powi(3) / 3.0)),
            hess: Arc::new(|x: ArrayView1<'_, f64>| Array2::from_diag(&x.mapv(|v| 1.0 + v * v))),
            grad_dual: None,
            domain: None,
        };
        let map = if closed_dual {
            CustomMap {
                grad_dual: Some(Arc::new(|z: ArrayView1<'_, f64>| z.mapv(|v| v))),
                ..map
            }
        } else {
            map
        };
        MirrorMap::custom(map, 1.0, 10.0).unwrap()
    }

    #[test]
    fn newton_inversion_of_custom_map() {
        let m = quartic_map(false);
        let x = array![1.5, -2.0, 0.1];
        let z = m.grad(x.view()).unwrap();
        let back = m.grad_dual(z.view()).unwrap();
        let resid = m.grad(back.view()).unwrap() - &z;
        assert!(norm2(resid.view()) <= 1e-10 * (1.0 + norm2(z.view())));
        assert!((back - &x).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn newton_reports_non_convergence() {
        let m = quartic_map(false).with_newton(NewtonSettings { max_iter: 1, tol: 1e-14 });
        let err = m.grad_dual(array![50.0].view()).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn constant_spot_check_catches_wrong_declaration() {
        let m = quartic_map(true);
        let inside = array![0.5, 1.0];
        assert!(m.check_constants([inside.view()]).is_ok());
        let outside = array![4.0];
        assert!(m.check_constants([outside.view()]).is_err());
    }
}
