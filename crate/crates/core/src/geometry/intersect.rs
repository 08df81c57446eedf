//! Ray/triangle intersection with barycentric coordinates from triple
//! products, ray depth through the barycenter plane, and the in-plane signed
//! distance to the triangle boundary. Every quantity has a hand-written
//! backward pass.

use nalgebra::Vector3;

use crate::scalar::Real;
use crate::scene::VertexLayout;

pub const DEFAULT_EPS_PARALLEL: f64 = 1e-9;
pub const DEFAULT_NEAR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T: Real> {
    pub origin: Vector3<T>,
    /// Unit direction.
    pub dir: Vector3<T>,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vector3<T>, dir: Vector3<T>) -> Self {
        Self { origin, dir: dir.normalize() }
    }

    pub fn at(&self, d: T) -> Vector3<T> {
        self.origin + self.dir * d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intersection<T: Real> {
    pub depth: T,
    pub point: Vector3<T>,
    pub lambda: [T; 3],
    pub signed_edge_dist: T,
    pub valid: bool,
}

impl<T: Real> Intersection<T> {
    fn invalid() -> Self {
        Self {
            depth: T::zero(),
            point: Vector3::zeros(),
            lambda: [T::zero(); 3],
            signed_edge_dist: T::zero(),
            valid: false,
        }
    }
}

/// Result of a successful hit, including what the backward pass needs.
#[derive(Clone, Copy, Debug)]
pub struct Hit<T: Real> {
    pub d: T,
    pub p: Vector3<T>,
    pub lambda: [T; 3],
    pub l: T,
    pub inside: bool,
    /// Inside: vertex whose opposite edge is nearest. Outside: index of the
    /// nearest edge, named by its opposite vertex.
    pub edge: usize,
    /// Outside only: clamped segment parameter of the nearest point.
    pub t: T,
    /// Outside only: unit in-plane direction from the nearest boundary point to `p`.
    pub u: Vector3<T>,
    den: T,
}

/// Per (triangle, ray origin) precomputation. The edge "opposite vertex j"
/// runs from `V[j+1]` to `V[j+2]`.
#[derive(Clone, Copy, Debug)]
pub struct TriangleFrame<T: Real> {
    pub v: [Vector3<T>; 3],
    pub n: Vector3<T>,
    pub b: Vector3<T>,
    pub origin: Vector3<T>,
    /// `n · (e01 × e02)`.
    pub area2: T,
    num: T,
    m: [Vector3<T>; 3],
    c: [T; 3],
    k: [T; 3],
    len: [T; 3],
}

#[inline]
fn edge_ends(j: usize) -> (usize, usize) {
    ((j + 1) % 3, (j + 2) % 3)
}

impl<T: Real> TriangleFrame<T> {
    /// Builds the frame from vertices and an independently supplied unit
    /// normal. Returns `None` when the triangle has no area.
    pub fn new(v: [Vector3<T>; 3], n: Vector3<T>, origin: Vector3<T>) -> Option<Self> {
        let e01 = v[1] - v[0];
        let e02 = v[2] - v[0];
        let area2 = n.dot(&e01.cross(&e02));
        if area2 == T::zero() || !area2.is_finite_val() {
            return None;
        }
        let b = (v[0] + v[1] + v[2]) / T::lit(3.0);
        let mut m = [Vector3::zeros(); 3];
        let mut c = [T::zero(); 3];
        let mut k = [T::zero(); 3];
        let mut len = [T::zero(); 3];
        for j in 0..3 {
            let (ia, ib) = edge_ends(j);
            let e = v[ib] - v[ia];
            len[j] = e.norm();
            m[j] = n.cross(&e) / area2;
            c[j] = m[j].dot(&v[ia]);
            k[j] = area2.abs() / len[j];
        }
        Some(Self { v, n, b, origin, area2, num: n.dot(&(b - origin)), m, c, k, len })
    }

    pub fn from_layout(layout: &VertexLayout<T>, origin: Vector3<T>) -> Option<Self> {
        if layout.degenerate {
            return None;
        }
        Self::new(layout.vertices, layout.normal, origin)
    }

    /// Barycentric coordinates of a point in the triangle plane.
    #[inline]
    pub fn barycentric(&self, p: &Vector3<T>) -> [T; 3] {
        [self.m[0].dot(p) - self.c[0], self.m[1].dot(p) - self.c[1], self.m[2].dot(p) - self.c[2]]
    }

    /// Intersects a ray leaving `self.origin`.
    pub fn hit(&self, dir: &Vector3<T>, near: T, eps_parallel: T) -> Option<Hit<T>> {
        let den = self.n.dot(dir);
        if den.abs() < eps_parallel {
            return None;
        }
        let d = self.num / den;
        if !(d > near) {
            return None;
        }
        let p = self.origin + dir * d;
        let lambda = self.barycentric(&p);
        let zero = T::zero();
        let inside = lambda[0] >= zero && lambda[1] >= zero && lambda[2] >= zero;
        if inside {
            let mut best = 0;
            let mut best_s = lambda[0] * self.k[0];
            for j in 1..3 {
                let s = lambda[j] * self.k[j];
                if s < best_s {
                    best = j;
                    best_s = s;
                }
            }
            return Some(Hit { d, p, lambda, l: best_s, inside, edge: best, t: zero, u: Vector3::zeros(), den });
        }
        let mut best = (0usize, T::max_value().unwrap(), zero, Vector3::zeros());
        for j in 0..3 {
            let (ia, ib) = edge_ends(j);
            let a = self.v[ia];
            let e = self.v[ib] - a;
            let t = ((p - a).dot(&e) / e.dot(&e)).clamp(zero, T::one());
            let diff = p - (a + e * t);
            let dist = diff.norm();
            if dist < best.1 {
                best = (j, dist, t, diff);
            }
        }
        let (edge, dist, t, diff) = best;
        let u = if dist > T::lit(1e-300) {
            diff / dist
        } else {
            // on the boundary to machine precision: use the outward edge normal
            -self.m[edge].normalize()
        };
        Some(Hit { d, p, lambda, l: -dist, inside, edge, t, u, den })
    }

    /// Accumulates the pullback of `(g_d, g_lambda, g_l)` at `hit` into `acc`.
    pub fn hit_backward(&self, hit: &Hit<T>, dir: &Vector3<T>, g_d: T, g_lambda: [T; 3], g_l: T, acc: &mut FrameGrad<T>) {
        let mut gl = g_lambda;
        let mut g_p = Vector3::zeros();
        if hit.inside {
            let j = hit.edge;
            gl[j] += g_l * self.k[j];
            acc.k[j] += g_l * hit.lambda[j];
        } else {
            let (ia, ib) = edge_ends(hit.edge);
            g_p -= hit.u * g_l;
            acc.v[ia] += hit.u * (g_l * (T::one() - hit.t));
            acc.v[ib] += hit.u * (g_l * hit.t);
        }
        for j in 0..3 {
            g_p += self.m[j] * gl[j];
            acc.m[j] += hit.p * gl[j];
            acc.c[j] -= gl[j];
        }
        let gd = g_d + g_p.dot(dir);
        acc.num += gd / hit.den;
        acc.n -= dir * (gd * hit.d / hit.den);
    }

    /// Converts accumulated frame gradients to vertex and normal gradients.
    pub fn finish_backward(&self, acc: &FrameGrad<T>) -> ([Vector3<T>; 3], Vector3<T>) {
        let n = self.n;
        let mut g_n = acc.n + (self.b - self.origin) * acc.num;
        let g_b = n * (acc.num / T::lit(3.0));
        let mut g_v = [acc.v[0] + g_b, acc.v[1] + g_b, acc.v[2] + g_b];
        let a = self.area2;
        let sign_a = if a > T::zero() { T::one() } else { -T::one() };
        let mut g_a = T::zero();
        for j in 0..3 {
            let (ia, ib) = edge_ends(j);
            let e = self.v[ib] - self.v[ia];
            let g_m = acc.m[j] + self.v[ia] * acc.c[j];
            g_v[ia] += self.m[j] * acc.c[j];
            let g_f = g_m / a;
            g_a -= g_m.dot(&self.m[j]) / a;
            g_n += e.cross(&g_f);
            let mut g_e = g_f.cross(&n);
            let len = self.len[j];
            g_a += acc.k[j] * sign_a / len;
            g_e -= e * (acc.k[j] * a.abs() / (len * len * len));
            g_v[ib] += g_e;
            g_v[ia] -= g_e;
        }
        let e01 = self.v[1] - self.v[0];
        let e02 = self.v[2] - self.v[0];
        g_n += e01.cross(&e02) * g_a;
        let g_e01 = e02.cross(&n) * g_a;
        let g_e02 = n.cross(&e01) * g_a;
        g_v[1] += g_e01;
        g_v[2] += g_e02;
        g_v[0] -= g_e01 + g_e02;
        (g_v, g_n)
    }
}

/// Gradient accumulator for one [`TriangleFrame`].
#[derive(Clone, Copy, Debug)]
pub struct FrameGrad<T: Real> {
    num: T,
    n: Vector3<T>,
    m: [Vector3<T>; 3],
    c: [T; 3],
    k: [T; 3],
    v: [Vector3<T>; 3],
}

impl<T: Real> Default for FrameGrad<T> {
    fn default() -> Self {
        Self {
            num: T::zero(),
            n: Vector3::zeros(),
            m: [Vector3::zeros(); 3],
            c: [T::zero(); 3],
            k: [T::zero(); 3],
            v: [Vector3::zeros(); 3],
        }
    }
}

impl<T: Real> FrameGrad<T> {
    pub fn add(&mut self, o: &Self) {
        self.num += o.num;
        self.n += o.n;
        for j in 0..3 {
            self.m[j] += o.m[j];
            self.c[j] += o.c[j];
            self.k[j] += o.k[j];
            self.v[j] += o.v[j];
        }
    }

    /// Adds a gradient that lands directly on a vertex position.
    pub fn add_vertex(&mut self, j: usize, g: Vector3<T>) {
        self.v[j] += g;
    }
}

/// Intersects `ray` with `tri`, using default near plane and parallel
/// tolerance.
pub fn intersect<T: Real>(ray: &Ray<T>, tri: &VertexLayout<T>) -> Intersection<T> {
    intersect_with(ray, tri, T::lit(DEFAULT_NEAR), T::lit(DEFAULT_EPS_PARALLEL))
}

pub fn intersect_with<T: Real>(ray: &Ray<T>, tri: &VertexLayout<T>, near: T, eps_parallel: T) -> Intersection<T> {
    let Some(frame) = TriangleFrame::from_layout(tri, ray.origin) else {
        return Intersection::invalid();
    };
    match frame.hit(&ray.dir, near, eps_parallel) {
        Some(h) => Intersection { depth: h.d, point: h.p, lambda: h.lambda, signed_edge_dist: h.l, valid: true },
        None => Intersection::invalid(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn rvec(s: &mut u64, scale: f64) -> Vector3<f64> {
        Vector3::new(lcg(s) - 0.5, lcg(s) - 0.5, lcg(s) - 0.5) * (2.0 * scale)
    }

    fn layout(v: [Vector3<f64>; 3]) -> VertexLayout<f64> {
        VertexLayout::from_vertices(v)
    }

    /// Independent oracle: solve `C + t r = a V0 + b V1 + c V2`, `a + b + c = 1`
    /// as a 3x3 system in (t, b, c).
    fn oracle(ray: &Ray<f64>, v: &[Vector3<f64>; 3]) -> Option<(f64, [f64; 3])> {
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let m = Matrix3::from_columns(&[-ray.dir, e1, e2]);
        let sol = m.lu().solve(&(ray.origin - v[0]))?;
        Some((sol[0], [1.0 - sol[1] - sol[2], sol[1], sol[2]]))
    }

    #[test]
    fn vertex_ray_gives_one_hot_lambda() {
        let v = [Vector3::new(0.0, 0.0, 5.0), Vector3::new(1.0, 0.0, 5.0), Vector3::new(0.0, 1.0, 5.5)];
        let tri = layout(v);
        for j in 0..3 {
            let ray = Ray::new(Vector3::zeros(), v[j]);
            let hit = intersect(&ray, &tri);
            assert!(hit.valid);
            for k in 0..3 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((hit.lambda[k] - want).abs() < 1e-10);
            }
            assert!(hit.signed_edge_dist.abs() < 1e-9);
        }
    }

    #[test]
    fn barycenter_ray() {
        let v = [Vector3::new(-1.0, 0.2, 4.0), Vector3::new(1.0, -0.4, 4.5), Vector3::new(0.3, 1.0, 3.8)];
        let tri = layout(v);
        let c = Vector3::new(0.1, -0.2, 0.3);
        let ray = Ray::new(c, tri.barycenter - c);
        let hit = intersect(&ray, &tri);
        for k in 0..3 {
            assert!((hit.lambda[k] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((hit.depth - (tri.barycenter - c).norm()).abs() < 1e-12);
        assert!(hit.signed_edge_dist > 0.0);
    }

    #[test]
    fn random_queries_match_linear_system_oracle() {
        let mut s = 11u64;
        let mut checked = 0;
        for _ in 0..1000 {
            let v = [rvec(&mut s, 1.0), rvec(&mut s, 1.0), rvec(&mut s, 1.0)].map(|p| p + Vector3::new(0.0, 0.0, 4.0));
            let tri = layout(v);
            if tri.degenerate {
                continue;
            }
            let origin = rvec(&mut s, 0.5);
            let target = tri.barycenter + rvec(&mut s, 1.0);
            let ray = Ray::new(origin, target - origin);
            let hit = intersect(&ray, &tri);
            let Some((t, lam)) = oracle(&ray, &v) else { continue };
            if hit.valid {
                assert!((hit.depth - t).abs() < 1e-9 * (1.0 + t.abs()));
                for k in 0..3 {
                    assert!((hit.lambda[k] - lam[k]).abs() < 1e-9);
                }
                assert!((hit.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn insideness_tests_agree() {
        let mut s = 5u64;
        for _ in 0..2000 {
            let v = [rvec(&mut s, 1.0), rvec(&mut s, 1.0), rvec(&mut s, 1.0)].map(|p| p + Vector3::new(0.0, 0.0, 4.0));
            let tri = layout(v);
            if tri.degenerate {
                continue;
            }
            let ray = Ray::new(Vector3::zeros(), tri.barycenter + rvec(&mut s, 0.7));
            let hit = intersect(&ray, &tri);
            if !hit.valid {
                continue;
            }
            let inside = hit.lambda.iter().all(|&x| x >= 0.0);
            if hit.signed_edge_dist.abs() > 1e-9 {
                assert_eq!(inside, hit.signed_edge_dist > 0.0);
            }
        }
    }

    #[test]
    fn rigid_motion_leaves_lambda_and_distance_unchanged() {
        let mut s = 9u64;
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let shift = Vector3::new(3.0, -2.0, 0.5);
        for _ in 0..200 {
            let v = [rvec(&mut s, 1.0), rvec(&mut s, 1.0), rvec(&mut s, 1.0)].map(|p| p + Vector3::new(0.0, 0.0, 4.0));
            let tri = layout(v);
            if tri.degenerate {
                continue;
            }
            let ray = Ray::new(Vector3::zeros(), tri.barycenter + rvec(&mut s, 0.7));
            let a = intersect(&ray, &tri);
            let tri2 = layout(v.map(|p| rot * p + shift));
            let ray2 = Ray::new(rot * ray.origin + shift, rot * ray.dir);
            let b = intersect(&ray2, &tri2);
            assert_eq!(a.valid, b.valid);
            if a.valid {
                assert!((a.depth - b.depth).abs() < 1e-9);
                assert!((a.signed_edge_dist - b.signed_edge_dist).abs() < 1e-9);
                for k in 0..3 {
                    assert!((a.lambda[k] - b.lambda[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn parallel_and_behind_rays_are_invalid() {
        let v = [Vector3::new(0.0, 0.0, 5.0), Vector3::new(1.0, 0.0, 5.0), Vector3::new(0.0, 1.0, 5.0)];
        let tri = layout(v);
        let parallel = intersect(&Ray::new(Vector3::zeros(), Vector3::x()), &tri);
        assert!(!parallel.valid);
        let behind = intersect(&Ray::new(Vector3::zeros(), -Vector3::z()), &tri);
        assert!(!behind.valid);
        assert!(behind.depth.is_finite());
    }

    /// Central differences over vertex and normal inputs, treated as
    /// independent, of a random linear functional of (d, lambda, l).
    #[test]
    fn backward_matches_finite_differences() {
        let mut s = 21u64;
        let mut tested = 0;
        while tested < 1000 {
            let v = [rvec(&mut s, 1.0), rvec(&mut s, 1.0), rvec(&mut s, 1.0)].map(|p| p + Vector3::new(0.0, 0.0, 4.0));
            let tri = layout(v);
            if tri.degenerate || tri.area < 0.05 {
                continue;
            }
            let dir = (tri.barycenter + rvec(&mut s, 0.8)).normalize();
            let origin = Vector3::zeros();
            let w = [lcg(&mut s) - 0.5, lcg(&mut s) - 0.5, lcg(&mut s) - 0.5, lcg(&mut s) - 0.5, lcg(&mut s) - 0.5];
            let eval = |v: [Vector3<f64>; 3], n: Vector3<f64>| -> Option<(f64, Hit<f64>)> {
                let f = TriangleFrame::new(v, n, origin)?;
                let h = f.hit(&dir, 0.01, 1e-9)?;
                Some((w[0] * h.d + w[1] * h.lambda[0] + w[2] * h.lambda[1] + w[3] * h.lambda[2] + w[4] * h.l, h))
            };
            let frame = TriangleFrame::new(v, tri.normal, origin).unwrap();
            let Some((_, hit)) = eval(v, tri.normal) else { continue };
            // keep away from the non-smooth medial/corner boundaries
            if hit.inside {
                let mut s_sorted: Vec<f64> = (0..3).map(|j| hit.lambda[j] * frame.k[j]).collect();
                s_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if s_sorted[1] - s_sorted[0] < 1e-4 || hit.lambda.iter().any(|x| x.abs() < 1e-4) {
                    continue;
                }
            } else if hit.t < 1e-4 || hit.t > 1.0 - 1e-4 || hit.l.abs() < 1e-4 {
                continue;
            }
            let mut acc = FrameGrad::default();
            frame.hit_backward(&hit, &dir, w[0], [w[1], w[2], w[3]], w[4], &mut acc);
            let (g_v, g_n) = frame.finish_backward(&acc);
            let h = 1e-6;
            let mut ok = true;
            for which in 0..4 {
                for k in 0..3 {
                    let (mut vp, mut vm, mut np, mut nm) = (v, v, tri.normal, tri.normal);
                    if which < 3 {
                        vp[which][k] += h;
                        vm[which][k] -= h;
                    } else {
                        np[k] += h;
                        nm[k] -= h;
                    }
                    let (Some((fp, hp)), Some((fm, hm))) = (eval(vp, np), eval(vm, nm)) else {
                        ok = false;
                        continue;
                    };
                    if hp.inside != hit.inside || hm.inside != hit.inside || hp.edge != hit.edge || hm.edge != hit.edge {
                        ok = false;
                        continue;
                    }
                    let fd = (fp - fm) / (2.0 * h);
                    let an = if which < 3 { g_v[which][k] } else { g_n[k] };
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                    assert!(err < 1e-5, "input {which}/{k}: fd {fd} vs analytic {an} (inside={})", hit.inside);
                }
            }
            if ok {
                tested += 1;
            }
        }
    }
}
