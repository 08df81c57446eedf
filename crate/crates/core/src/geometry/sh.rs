//! Real spherical harmonics up to degree 3, evaluated for view-dependent
//! vertex colors.
//!
//! Basis ordering is `l = 0..=3`, `m = -l..=l`, with the Condon-Shortley phase
//! folded into the constants (the common splatting convention).

use nalgebra::Vector3;

use crate::scalar::Real;

pub const MAX_SH_DEGREE: usize = 3;

/// Offset added to the DC term so zero coefficients render mid-gray.
pub const SH_DC_OFFSET: f64 = 0.5;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions for degree `degree`.
#[inline]
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Writes the first `coeff_count(degree)` basis values at `dir` into `out`.
pub fn sh_basis<T: Real>(dir: &Vector3<T>, degree: usize, out: &mut [T]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let c = T::lit;
    out[0] = c(SH_C0);
    if degree < 1 {
        return;
    }
    out[1] = -c(SH_C1) * y;
    out[2] = c(SH_C1) * z;
    out[3] = -c(SH_C1) * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = c(SH_C2[0]) * x * y;
    out[5] = c(SH_C2[1]) * y * z;
    out[6] = c(SH_C2[2]) * (c(2.0) * zz - xx - yy);
    out[7] = c(SH_C2[3]) * x * z;
    out[8] = c(SH_C2[4]) * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = c(SH_C3[0]) * y * (c(3.0) * xx - yy);
    out[10] = c(SH_C3[1]) * x * y * z;
    out[11] = c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy);
    out[12] = c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
    out[13] = c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy);
    out[14] = c(SH_C3[5]) * z * (xx - yy);
    out[15] = c(SH_C3[6]) * x * (xx - c(3.0) * yy);
}

/// Gradient of each basis polynomial w.r.t. the (unnormalized) direction
/// components. Only the tangential part is meaningful on the sphere.
pub fn sh_basis_grad<T: Real>(dir: &Vector3<T>, degree: usize, out: &mut [Vector3<T>]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let c = T::lit;
    let zero = T::zero();
    out[0] = Vector3::zeros();
    if degree < 1 {
        return;
    }
    out[1] = Vector3::new(zero, -c(SH_C1), zero);
    out[2] = Vector3::new(zero, zero, c(SH_C1));
    out[3] = Vector3::new(-c(SH_C1), zero, zero);
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let k = SH_C2;
    out[4] = Vector3::new(c(k[0]) * y, c(k[0]) * x, zero);
    out[5] = Vector3::new(zero, c(k[1]) * z, c(k[1]) * y);
    out[6] = Vector3::new(c(-2.0 * k[2]) * x, c(-2.0 * k[2]) * y, c(4.0 * k[2]) * z);
    out[7] = Vector3::new(c(k[3]) * z, zero, c(k[3]) * x);
    out[8] = Vector3::new(c(2.0 * k[4]) * x, c(-2.0 * k[4]) * y, zero);
    if degree < 3 {
        return;
    }
    let k = SH_C3;
    out[9] = Vector3::new(c(6.0 * k[0]) * x * y, c(k[0]) * (c(3.0) * xx - c(3.0) * yy), zero);
    out[10] = Vector3::new(c(k[1]) * y * z, c(k[1]) * x * z, c(k[1]) * x * y);
    out[11] = Vector3::new(
        c(-2.0 * k[2]) * x * y,
        c(k[2]) * (c(4.0) * zz - xx - c(3.0) * yy),
        c(8.0 * k[2]) * y * z,
    );
    out[12] = Vector3::new(
        c(-6.0 * k[3]) * x * z,
        c(-6.0 * k[3]) * y * z,
        c(k[3]) * (c(6.0) * zz - c(3.0) * xx - c(3.0) * yy),
    );
    out[13] = Vector3::new(
        c(k[4]) * (c(4.0) * zz - c(3.0) * xx - yy),
        c(-2.0 * k[4]) * x * y,
        c(8.0 * k[4]) * x * z,
    );
    out[14] = Vector3::new(c(2.0 * k[5]) * x * z, c(-2.0 * k[5]) * y * z, c(k[5]) * (xx - yy));
    out[15] = Vector3::new(c(k[6]) * (c(3.0) * xx - c(3.0) * yy), c(-6.0 * k[6]) * x * y, zero);
}

/// RGB of one vertex plus which channels survived the `>= 0` clamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexColor<T: Real> {
    pub rgb: Vector3<T>,
    pub live: [bool; 3],
}

/// Evaluates one vertex's SH block (`[coef][channel]`, `coeff_count(active)`
/// coefficients used) at `dir`.
pub fn eval_vertex<T: Real>(coeffs: &[T], active: usize, dir: &Vector3<T>) -> VertexColor<T> {
    let mut basis = [T::zero(); 16];
    let n = coeff_count(active);
    sh_basis(dir, active, &mut basis);
    let mut raw = Vector3::repeat(T::lit(SH_DC_OFFSET));
    for (b, y) in basis.iter().enumerate().take(n) {
        for ch in 0..3 {
            raw[ch] += *y * coeffs[b * 3 + ch];
        }
    }
    let mut live = [true; 3];
    for ch in 0..3 {
        if raw[ch] < T::zero() {
            raw[ch] = T::zero();
            live[ch] = false;
        }
    }
    VertexColor { rgb: raw, live }
}

/// Evaluates the three vertex blocks of a triangle (`[vertex][coef][channel]`
/// with `stride` coefficients per vertex) along a shared direction.
pub fn eval_sh<T: Real>(block: &[T], stride: usize, active: usize, dir: &Vector3<T>) -> [VertexColor<T>; 3] {
    std::array::from_fn(|v| eval_vertex(&block[v * stride * 3..(v + 1) * stride * 3], active, dir))
}

/// Backward of [`eval_vertex`]: accumulates coefficient gradients into
/// `g_coeffs` and returns the gradient w.r.t. the (unit) direction.
pub fn eval_vertex_backward<T: Real>(
    coeffs: &[T],
    active: usize,
    dir: &Vector3<T>,
    color: &VertexColor<T>,
    g_rgb: &Vector3<T>,
    g_coeffs: &mut [T],
) -> Vector3<T> {
    let n = coeff_count(active);
    let mut basis = [T::zero(); 16];
    sh_basis(dir, active, &mut basis);
    let mut g = *g_rgb;
    for ch in 0..3 {
        if !color.live[ch] {
            g[ch] = T::zero();
        }
    }
    for b in 0..n {
        for ch in 0..3 {
            g_coeffs[b * 3 + ch] += basis[b] * g[ch];
        }
    }
    if active == 0 {
        return Vector3::zeros();
    }
    let mut grads = [Vector3::zeros(); 16];
    sh_basis_grad(dir, active, &mut grads);
    let mut g_dir = Vector3::zeros();
    for b in 1..n {
        let s = coeffs[b * 3] * g[0] + coeffs[b * 3 + 1] * g[1] + coeffs[b * 3 + 2] * g[2];
        g_dir += grads[b] * s;
    }
    g_dir
}

/// DC coefficient that renders as `color` for any direction.
#[inline]
pub fn rgb_to_dc<T: Real>(color: T) -> T {
    (color - T::lit(SH_DC_OFFSET)) / T::lit(SH_C0)
}

#[inline]
pub fn dc_to_rgb<T: Real>(dc: T) -> T {
    dc * T::lit(SH_C0) + T::lit(SH_DC_OFFSET)
}

/// Pulls a gradient on a unit vector `u = v / |v|` back to `v`.
#[inline]
pub fn normalize_backward<T: Real>(u: &Vector3<T>, norm: T, g_u: &Vector3<T>) -> Vector3<T> {
    (g_u - u * u.dot(g_u)) / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Associated Legendre polynomial with Condon-Shortley phase, by the
    /// textbook recurrence.
    fn legendre(l: i32, m: i32, x: f64) -> f64 {
        let mut pmm = 1.0;
        if m > 0 {
            let somx2 = ((1.0 - x) * (1.0 + x)).sqrt();
            let mut fact = 1.0;
            for _ in 0..m {
                pmm *= -fact * somx2;
                fact += 2.0;
            }
        }
        if l == m {
            return pmm;
        }
        let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
        if l == m + 1 {
            return pmmp1;
        }
        let mut pll = 0.0;
        for ll in (m + 2)..=l {
            pll = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
            pmm = pmmp1;
            pmmp1 = pll;
        }
        pll
    }

    fn factorial(n: i32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn textbook_real_sh(l: i32, m: i32, dir: &Vector3<f64>) -> f64 {
        let theta = dir.z.clamp(-1.0, 1.0).acos();
        let phi = dir.y.atan2(dir.x);
        let am = m.abs();
        let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
        let p = legendre(l, am, theta.cos());
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => k * p,
            std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * (am as f64 * phi).cos() * p,
            std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * (am as f64 * phi).sin() * p,
        }
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / ((1u64 << 53) as f64)
    }

    #[test]
    fn basis_matches_textbook_table() {
        let mut s = 42u64;
        for _ in 0..200 {
            let d = Vector3::new(lcg(&mut s) - 0.5, lcg(&mut s) - 0.5, lcg(&mut s) - 0.5).normalize();
            let mut ours = [0.0; 16];
            sh_basis(&d, 3, &mut ours);
            let mut idx = 0;
            for l in 0..=3 {
                for m in -l..=l {
                    let want = textbook_real_sh(l, m, &d);
                    assert!((ours[idx] - want).abs() < 1e-12, "l={l} m={m}: {} vs {want}", ours[idx]);
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn random_coefficients_antipodal_match_oracle() {
        let mut s = 7u64;
        let coeffs: Vec<f64> = (0..16 * 3).map(|_| lcg(&mut s) - 0.5).collect();
        let d = Vector3::new(0.3, -0.4, 0.8).normalize();
        for dir in [d, -d] {
            let ours = eval_vertex(&coeffs, 3, &dir);
            let mut want = Vector3::repeat(0.5);
            let mut idx = 0;
            for l in 0..=3 {
                for m in -l..=l {
                    let y = textbook_real_sh(l, m, &dir);
                    for ch in 0..3 {
                        want[ch] += y * coeffs[idx * 3 + ch];
                    }
                    idx += 1;
                }
            }
            for ch in 0..3 {
                assert!((ours.rgb[ch] - want[ch].max(0.0)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dc_only_is_view_independent() {
        let coeffs = [0.3, -0.2, 0.1];
        for dir in [Vector3::x(), -Vector3::z(), Vector3::new(1.0, 1.0, 1.0).normalize()] {
            let c = eval_vertex(&coeffs, 0, &dir);
            assert!((c.rgb.x - (0.5 + 0.3 * SH_C0)).abs() < 1e-15);
            assert!((c.rgb.y - (0.5 - 0.2 * SH_C0)).abs() < 1e-15);
        }
        let zero = eval_vertex(&[0.0; 48], 3, &Vector3::y());
        assert_eq!(zero.rgb, Vector3::repeat(0.5));
    }

    #[test]
    fn negative_channels_clamp() {
        let c = eval_vertex(&[-10.0, 0.0, 0.0], 0, &Vector3::z());
        assert_eq!(c.rgb.x, 0.0);
        assert_eq!(c.live, [false, true, true]);
    }

    #[test]
    fn direction_gradient_matches_finite_differences() {
        let mut s = 3u64;
        let coeffs: Vec<f64> = (0..48).map(|_| lcg(&mut s) - 0.5).collect();
        let g_rgb = Vector3::new(0.7, -0.3, 0.2);
        for _ in 0..50 {
            let v = Vector3::new(lcg(&mut s) - 0.5, lcg(&mut s) - 0.5, lcg(&mut s) - 0.5);
            let norm = v.norm();
            let d = v / norm;
            let col = eval_vertex(&coeffs, 3, &d);
            let mut gc = vec![0.0; 48];
            let g_dir = eval_vertex_backward(&coeffs, 3, &d, &col, &g_rgb, &mut gc);
            let g_v = normalize_backward(&d, norm, &g_dir);
            let f = |v: Vector3<f64>| eval_vertex(&coeffs, 3, &v.normalize()).rgb.dot(&g_rgb);
            for k in 0..3 {
                let h = 1e-6;
                let mut vp = v;
                vp[k] += h;
                let mut vm = v;
                vm[k] -= h;
                let fd = (f(vp) - f(vm)) / (2.0 * h);
                assert!((fd - g_v[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g_v[k]);
            }
        }
    }
}
