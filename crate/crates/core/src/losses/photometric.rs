//! L1 + SSIM photometric loss with analytic gradients.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter with zero padding and same-size output.
fn blur<T: Real>(src: &[T], w: usize, h: usize, taps: &[T; SSIM_WINDOW]) -> Vec<T> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += *t * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += *t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean SSIM of one channel and, if requested, its gradient w.r.t. `x`.
pub fn ssim_channel<T: Real>(x: &[T], y: &[T], w: usize, h: usize, want_grad: bool) -> (T, Option<Vec<T>>) {
    let taps = gaussian_taps().map(T::lit);
    let n = w * h;
    let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
    let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(a, b)| *a * *b).collect();
    let mx = blur(x, w, h, &taps);
    let my = blur(y, w, h, &taps);
    let exx = blur(&xx, w, h, &taps);
    let eyy = blur(&yy, w, h, &taps);
    let exy = blur(&xy, w, h, &taps);
    let (c1, c2) = (T::lit(SSIM_C1), T::lit(SSIM_C2));
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut d_mx = vec![T::zero(); if want_grad { n } else { 0 }];
    let mut d_exx = d_mx.clone();
    let mut d_exy = d_mx.clone();
    for p in 0..n {
        let a1 = two * mx[p] * my[p] + c1;
        let a2 = two * (exy[p] - mx[p] * my[p]) + c2;
        let b1 = mx[p] * mx[p] + my[p] * my[p] + c1;
        let b2 = exx[p] - mx[p] * mx[p] + eyy[p] - my[p] * my[p] + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            d_mx[p] = s * (two * my[p] / a1 - two * my[p] / a2 - two * mx[p] / b1 + two * mx[p] / b2);
            d_exx[p] = -s / b2;
            d_exy[p] = two * s / a2;
        }
    }
    let mean = total / T::of_usize(n);
    if !want_grad {
        return (mean, None);
    }
    // The zero-padded symmetric blur is self-adjoint.
    let inv_n = T::one() / T::of_usize(n);
    let g_mx = blur(&d_mx, w, h, &taps);
    let g_exx = blur(&d_exx, w, h, &taps);
    let g_exy = blur(&d_exy, w, h, &taps);
    let grad = (0..n).map(|q| (g_mx[q] + two * x[q] * g_exx[q] + y[q] * g_exy[q]) * inv_n).collect();
    (mean, Some(grad))
}

fn channel<T: Real>(img: &[Vector3<T>], c: usize) -> Vec<T> {
    img.iter().map(|p| p[c]).collect()
}

/// Mean SSIM over pixels and channels.
pub fn ssim<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>], w: usize, h: usize) -> T {
    (0..3).fold(T::zero(), |acc, c| acc + ssim_channel(&channel(a, c), &channel(b, c), w, h, false).0) / T::lit(3.0)
}

/// `(1-γ)·mean|r-t| + γ·(1 - SSIM)/2`, with the mean taken over pixels and
/// channels. Returns the loss and its gradient w.r.t. `rendered`.
pub fn photometric_loss<T: Real>(
    rendered: &[Vector3<T>],
    target: &[Vector3<T>],
    w: usize,
    h: usize,
    gamma: f64,
) -> Result<(T, Vec<Vector3<T>>)> {
    if rendered.len() != w * h || target.len() != w * h {
        return Err(Error::Contract(format!("photometric loss expects two {w}x{h} images")));
    }
    let n = T::of_usize(3 * w * h);
    let g = T::lit(gamma);
    let l1w = T::one() - g;
    let mut l1 = T::zero();
    let mut grad = vec![Vector3::zeros(); w * h];
    for (i, (r, t)) in rendered.iter().zip(target).enumerate() {
        for c in 0..3 {
            let d = r[c] - t[c];
            l1 += d.abs();
            let s = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            grad[i][c] = l1w * s / n;
        }
    }
    let mut loss = l1w * l1 / n;
    if gamma > 0.0 {
        let half = T::lit(0.5);
        let mut s_mean = T::zero();
        for c in 0..3 {
            let (s, gs) = ssim_channel(&channel(rendered, c), &channel(target, c), w, h, true);
            s_mean += s / T::lit(3.0);
            for (gi, gv) in grad.iter_mut().zip(gs.unwrap()) {
                gi[c] -= g * half * gv / T::lit(3.0);
            }
        }
        loss += g * (T::one() - s_mean) * half;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct windowed SSIM: explicit 2D window sums at every pixel.
    fn ssim_reference(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
        let k = gaussian_taps();
        let r = 5isize;
        let mut total = 0.0;
        for py in 0..h as isize {
            for px in 0..w as isize {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (qx, qy) = (px + dx, py + dy);
                        if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                            continue;
                        }
                        let wt = k[(dx + r) as usize] * k[(dy + r) as usize];
                        let a = x[(qy as usize) * w + qx as usize];
                        let b = y[(qy as usize) * w + qx as usize];
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cxy = sxy - mx * my;
                total += (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
        }
        total / (w * h) as f64
    }

    fn random_img(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_img(&mut rng, 64);
        let (l, _) = photometric_loss(&a, &a, 8, 8, 0.2).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn constant_offset_pure_l1() {
        let a = vec![Vector3::repeat(0.3f64); 25];
        let b = vec![Vector3::repeat(0.4); 25];
        let (l, _) = photometric_loss(&a, &b, 5, 5, 0.0).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..32 * 32).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.7 + rng.random::<f64>() * 0.3).collect();
        let (s, _) = ssim_channel(&x, &y, 32, 32, false);
        assert!((s - ssim_reference(&x, &y, 32, 32)).abs() < 1e-6);
        assert!((s - ssim_reference(&x, &y, 32, 32)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (13, 9);
        let a = random_img(&mut rng, w * h);
        let b = random_img(&mut rng, w * h);
        let (_, g) = photometric_loss(&a, &b, w, h, 0.4).unwrap();
        let eps = 1e-6;
        for i in (0..w * h).step_by(7) {
            for c in 0..3 {
                let mut p = a.clone();
                p[i][c] += eps;
                let mut m = a.clone();
                m[i][c] -= eps;
                let fd = (photometric_loss(&p, &b, w, h, 0.4).unwrap().0 - photometric_loss(&m, &b, w, h, 0.4).unwrap().0) / (2.0 * eps);
                assert!((fd - g[i][c]).abs() <= 1e-4 * fd.abs().max(g[i][c].abs()).max(1e-6), "{fd} vs {}", g[i][c]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_sizes() {
        assert!(photometric_loss(&[Vector3::<f64>::zeros(); 4], &[Vector3::zeros(); 5], 2, 2, 0.2).is_err());
    }
}
