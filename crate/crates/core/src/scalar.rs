use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point scalar the numerical core is written against: `f32` or `f64`.
pub trait Real: NdFloat + FromPrimitive + Default {
    /// Converts an `f64` constant into `Self`.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// A requested tolerance, floored at a small multiple of machine epsilon so
    /// that `f32` instantiations do not chase unreachable targets.
    fn tol(x: f64) -> Self {
        let floor = Self::epsilon() * Self::c(64.0);
        let t = Self::c(x);
        if t < floor {
            floor
        } else {
            t
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
