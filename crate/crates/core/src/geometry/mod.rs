//! Closed-form per-ray, per-triangle kernels.

pub mod intersect;
pub mod sh;

use nalgebra::Vector3;

use crate::scalar::Real;

pub use intersect::{intersect, intersect_with, FrameGrad, Hit, Intersection, Ray, TriangleFrame};
pub use sh::{eval_sh, VertexColor};

/// `|σ·l|` is capped here before exponentiation.
pub const DIFFUSE_EXP_CAP: f64 = 60.0;

/// Soft inside-ness of a point at signed in-plane distance `l` (positive
/// inside) for a triangle with diffuseness `sigma`: `1 / (1 + exp(-σ l))`.
///
/// Evaluated so that `w(-l) == 1 - w(l)` holds bit-exactly.
#[inline]
pub fn diffuse_weight<T: Real>(l: T, sigma: T) -> T {
    let cap = T::lit(DIFFUSE_EXP_CAP);
    let z = (sigma * l).clamp(-cap, cap);
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        T::one() - T::one() / (T::one() + z.exp())
    }
}

/// Diffuse weight with its partials `(w, ∂w/∂l, ∂w/∂σ)`.
#[inline]
pub fn diffuse_weight_grad<T: Real>(l: T, sigma: T) -> (T, T, T) {
    let w = diffuse_weight(l, sigma);
    let z = sigma * l;
    if z.abs() > T::lit(DIFFUSE_EXP_CAP) {
        return (w, T::zero(), T::zero());
    }
    let dz = w * (T::one() - w);
    (w, dz * sigma, dz * l)
}

/// Barycentric blend of the three vertex colors.
#[inline]
pub fn interpolate_color<T: Real>(c: &[Vector3<T>; 3], lambda: &[T; 3]) -> Vector3<T> {
    c[0] * lambda[0] + c[1] * lambda[1] + c[2] * lambda[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diffuse_weight_reference_values() {
        assert_eq!(diffuse_weight(0.0, 3.0), 0.5);
        // 1 / (1 + e^-2), evaluated at high precision: 0.880797077977882444...
        assert!((diffuse_weight(0.2f64, 10.0) - 0.880_797_077_977_882_4).abs() < 1e-15);
        assert!(diffuse_weight(0.1, 1e6) > 1.0 - 1e-12);
        assert!(diffuse_weight(-0.1, 1e6) < 1e-12);
        assert!(diffuse_weight(1e10f64, 1e10).is_finite());
    }

    #[test]
    fn diffuse_weight_partials() {
        for &(l, s) in &[(0.3f64, 2.0), (-0.05, 40.0), (0.0, 7.0), (0.01, 100.0)] {
            let (_, dl, ds) = diffuse_weight_grad(l, s);
            let h = 1e-7;
            let fdl = (diffuse_weight(l + h, s) - diffuse_weight(l - h, s)) / (2.0 * h);
            let fds = (diffuse_weight(l, s + h) - diffuse_weight(l, s - h)) / (2.0 * h);
            assert!((dl - fdl).abs() < 1e-6 * (1.0 + fdl.abs()));
            assert!((ds - fds).abs() < 1e-6 * (1.0 + fds.abs()));
        }
    }

    #[test]
    fn interpolation_examples() {
        let c = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)];
        assert_eq!(interpolate_color(&c, &[1.0, 0.0, 0.0]), c[0]);
        let third = 1.0 / 3.0;
        let g = interpolate_color(&c, &[third; 3]);
        assert!((g - Vector3::repeat(third)).norm() < 1e-15);
        let mix = interpolate_color(&c, &[0.2, 0.3, 0.5]);
        assert!((mix - Vector3::new(0.2, 0.3, 0.5)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn diffuse_weight_is_antisymmetric(l in -10.0f64..10.0, sigma in 1e-3f64..1e3) {
            prop_assert_eq!(diffuse_weight(-l, sigma), 1.0 - diffuse_weight(l, sigma));
        }

        #[test]
        fn diffuse_weight_is_monotone_and_bounded(l in -5.0f64..5.0, dl in 1e-6f64..1.0, sigma in 0.1f64..50.0) {
            let a = diffuse_weight(l, sigma);
            let b = diffuse_weight(l + dl, sigma);
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
