//! Depth/normal regularizers: normal consistency between rendered normals and
//! depth-derived normals, and edge-aware depth smoothness.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::sh::normalize_backward;
use crate::raster::Camera;
use crate::scalar::Real;

const EPS_NORM: f64 = 1e-12;

/// Camera-space normal at every pixel computed from the ray-distance depth
/// map via forward differences, facing the camera. `None` where the pixel or
/// its `+x`/`+y` neighbor has no depth.
pub fn depth_normals<T: Real>(depth: &[T], cam: &Camera<T>) -> Vec<Option<Vector3<T>>> {
    let (w, h) = (cam.width, cam.height);
    let rays = pixel_rays(cam);
    let mut out = vec![None; w * h];
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let i = y * w + x;
            if let Some((_, nd, _, _, _)) = local_normal(depth, &rays, w, i) {
                out[i] = Some(nd);
            }
        }
    }
    out
}

fn pixel_rays<T: Real>(cam: &Camera<T>) -> Vec<Vector3<T>> {
    let half = T::lit(0.5);
    let mut rays = Vec::with_capacity(cam.pixel_count());
    for y in 0..cam.height {
        for x in 0..cam.width {
            rays.push(cam.cam_dir(T::of_usize(x) + half, T::of_usize(y) + half));
        }
    }
    rays
}

/// `(c, n_d, |c|, dx, dy)` with `c = dy × dx`.
#[allow(clippy::type_complexity)]
fn local_normal<T: Real>(
    depth: &[T],
    rays: &[Vector3<T>],
    w: usize,
    i: usize,
) -> Option<(Vector3<T>, Vector3<T>, T, Vector3<T>, Vector3<T>)> {
    let (d0, d1, d2) = (depth[i], depth[i + 1], depth[i + w]);
    if !(d0 > T::zero() && d1 > T::zero() && d2 > T::zero()) {
        return None;
    }
    let p0 = rays[i] * d0;
    let dx = rays[i + 1] * d1 - p0;
    let dy = rays[i + w] * d2 - p0;
    let c = dy.cross(&dx);
    let cn = c.norm();
    if !(cn > T::lit(EPS_NORM)) {
        return None;
    }
    Some((c, c / cn, cn, dx, dy))
}

/// `mean(1 - n̂ᵀ n̂_d)` over pixels with a valid depth neighborhood and a
/// non-zero rendered normal. `normals` are world-space blended normals.
/// Returns the loss and gradients w.r.t. `normals` and `depth`.
pub fn normal_consistency_loss<T: Real>(
    normals: &[Vector3<T>],
    depth: &[T],
    cam: &Camera<T>,
) -> Result<(T, Vec<Vector3<T>>, Vec<T>)> {
    let (w, h) = (cam.width, cam.height);
    if normals.len() != w * h || depth.len() != w * h {
        return Err(Error::Contract("normal consistency inputs do not match the camera".into()));
    }
    let rays = pixel_rays(cam);
    let mut terms = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let i = y * w + x;
            let Some(local) = local_normal(depth, &rays, w, i) else { continue };
            let nc = cam.rot * normals[i];
            let nn = nc.norm();
            if !(nn > T::lit(EPS_NORM)) {
                continue;
            }
            terms.push((i, local, nc / nn, nn));
        }
    }
    let mut g_n = vec![Vector3::zeros(); w * h];
    let mut g_d = vec![T::zero(); w * h];
    if terms.is_empty() {
        return Ok((T::zero(), g_n, g_d));
    }
    let inv = T::one() / T::of_usize(terms.len());
    let mut loss = T::zero();
    for (i, (_, nd, cn, dx, dy), nhat, nn) in terms {
        loss += T::one() - nhat.dot(&nd);
        let g_nhat = -nd * inv;
        g_n[i] = cam.rot.transpose() * normalize_backward(&nhat, nn, &g_nhat);
        let g_c = normalize_backward(&nd, cn, &(-nhat * inv));
        let g_dy = dx.cross(&g_c);
        let g_dx = g_c.cross(&dy);
        g_d[i + 1] += g_dx.dot(&rays[i + 1]);
        g_d[i + w] += g_dy.dot(&rays[i + w]);
        g_d[i] -= (g_dx + g_dy).dot(&rays[i]);
    }
    Ok((loss * inv, g_n, g_d))
}

/// Edge-aware depth smoothness:
/// `Σ |∂x D|·e^{∓|∂x I|} + |∂y D|·e^{∓|∂y I|}` over pixels, divided by the
/// pixel count, with grayscale forward differences and pairs involving an
/// invalid (zero) depth skipped. `positive_exponent` uses `e^{+|∂I|}`.
pub fn smoothness_loss<T: Real>(
    depth: &[T],
    image: &[Vector3<T>],
    w: usize,
    h: usize,
    positive_exponent: bool,
) -> Result<(T, Vec<T>)> {
    if depth.len() != w * h || image.len() != w * h {
        return Err(Error::Contract(format!("smoothness loss expects {w}x{h} inputs")));
    }
    let third = T::lit(1.0 / 3.0);
    let gray: Vec<T> = image.iter().map(|c| (c[0] + c[1] + c[2]) * third).collect();
    let inv = T::one() / T::of_usize(w * h);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); w * h];
    let mut pair = |i: usize, j: usize, loss: &mut T| {
        if !(depth[i] > T::zero() && depth[j] > T::zero()) {
            return;
        }
        let di = (gray[j] - gray[i]).abs();
        let wgt = if positive_exponent { di.exp() } else { (-di).exp() };
        let dd = depth[j] - depth[i];
        *loss += dd.abs() * wgt;
        let s = if dd > T::zero() {
            T::one()
        } else if dd < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        grad[j] += s * wgt * inv;
        grad[i] -= s * wgt * inv;
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                pair(i, i + 1, &mut loss);
            }
            if y + 1 < h {
                pair(i, i + w, &mut loss);
            }
        }
    }
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(n: usize) -> Camera<f64> {
        Camera::new(n, n, n as f64, n as f64, n as f64 / 2.0, n as f64 / 2.0, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    /// Ray distance to the plane `{X : n·X = c}` through each pixel.
    fn plane_depth(cam: &Camera<f64>, n: &Vector3<f64>, c: f64) -> Vec<f64> {
        let mut d = Vec::new();
        for y in 0..cam.height {
            for x in 0..cam.width {
                let r = cam.cam_dir(x as f64 + 0.5, y as f64 + 0.5);
                d.push(c / n.dot(&r));
            }
        }
        d
    }

    #[test]
    fn fronto_parallel_plane_aligned_normals() {
        let c = cam(16);
        let depth = plane_depth(&c, &Vector3::z(), 2.0);
        let normals = vec![Vector3::new(0.0, 0.0, -1.0); 256];
        let (l, _, _) = normal_consistency_loss(&normals, &depth, &c).unwrap();
        assert!(l.abs() < 1e-6);
        let flipped = vec![Vector3::new(0.0, 0.0, 1.0); 256];
        let (l, _, _) = normal_consistency_loss(&flipped, &depth, &c).unwrap();
        assert!((l - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tilted_plane_normal_within_half_degree() {
        let c = cam(128);
        let t = 30f64.to_radians();
        let n = Vector3::new(t.sin(), 0.0, -t.cos());
        let depth = plane_depth(&c, &n, -3.0);
        let normals = depth_normals(&depth, &c);
        let mut worst = 0.0f64;
        for nd in normals.iter().flatten() {
            worst = worst.max(nd.dot(&n).clamp(-1.0, 1.0).acos().to_degrees());
        }
        assert!(worst < 0.5, "worst angle {worst}");
    }

    #[test]
    fn normal_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Camera::look_at(7, 6, 6.0, Vector3::new(0.2, 0.1, -2.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0));
        let n = c.pixel_count();
        let mut depth: Vec<f64> = (0..n).map(|_| rng.random_range(1.8..2.4)).collect();
        depth[9] = 0.0;
        let normals: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let (_, gn, gd) = normal_consistency_loss(&normals, &depth, &c).unwrap();
        let h = 1e-6;
        let f = |nrm: &[Vector3<f64>], d: &[f64]| normal_consistency_loss(nrm, d, &c).unwrap().0;
        for i in 0..n {
            if depth[i] > 0.0 {
                let mut p = depth.clone();
                p[i] += h;
                let mut m = depth.clone();
                m[i] -= h;
                let fd = (f(&normals, &p) - f(&normals, &m)) / (2.0 * h);
                assert!((fd - gd[i]).abs() < 1e-6 * (1.0 + fd.abs()), "depth {i}: {fd} vs {}", gd[i]);
            }
            for k in 0..3 {
                let mut p = normals.clone();
                p[i][k] += h;
                let mut m = normals.clone();
                m[i][k] -= h;
                let fd = (f(&p, &depth) - f(&m, &depth)) / (2.0 * h);
                assert!((fd - gn[i][k]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn smoothness_constant_and_step() {
        let (w, h) = (8, 5);
        let img = vec![Vector3::repeat(0.4); w * h];
        let flat = vec![2.0; w * h];
        assert_eq!(smoothness_loss(&flat, &img, w, h, false).unwrap().0, 0.0);
        let step: Vec<f64> = (0..w * h).map(|i| if i % w >= 4 { 3.0 } else { 2.0 }).collect();
        let (l, _) = smoothness_loss(&step, &img, w, h, false).unwrap();
        assert!((l - (h as f64 * 1.0) / (w * h) as f64).abs() < 1e-15);
        let edge_img: Vec<Vector3<f64>> = (0..w * h).map(|i| Vector3::repeat(if i % w >= 4 { 1.0 } else { 0.0 })).collect();
        let (le, _) = smoothness_loss(&step, &edge_img, w, h, false).unwrap();
        assert!(le < l);
    }

    #[test]
    fn smoothness_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, h) = (6, 5);
        let img: Vec<Vector3<f64>> = (0..w * h).map(|_| Vector3::from_fn(|_, _| rng.random())).collect();
        let mut depth: Vec<f64> = (0..w * h).map(|_| rng.random_range(1.0..2.0)).collect();
        depth[7] = 0.0;
        let (_, g) = smoothness_loss(&depth, &img, w, h, false).unwrap();
        for i in 0..w * h {
            if depth[i] == 0.0 {
                assert_eq!(g[i], 0.0);
                continue;
            }
            let mut p = depth.clone();
            p[i] += 1e-6;
            let mut m = depth.clone();
            m[i] -= 1e-6;
            let fd = (smoothness_loss(&p, &img, w, h, false).unwrap().0 - smoothness_loss(&m, &img, w, h, false).unwrap().0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }
}
