//! Scalar abstraction shared by every numeric kernel.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point scalar the whole pipeline is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    /// Width in bytes used when the scalar is written to a checkpoint.
    const BYTES: usize;

    /// Converts a literal. Panics only if `Self` cannot hold finite `f64`s,
    /// which never happens for the implemented types.
    #[inline(always)]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal")
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline(always)]
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline(always)]
    fn is_finite_val(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {
    const BYTES: usize = 4;
}

impl Real for f64 {
    const BYTES: usize = 8;
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
