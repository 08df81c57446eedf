//! Triangle parameterization: vertices from anchor point, per-vertex scale
//! and rotation, plus the inverse fit.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::scalar::{sigmoid, Real};

/// Triangles with area below this are skipped by the renderer.
pub const EPS_AREA: f64 = 1e-12;

/// Angles (degrees, local xy-plane) of the canonical vertex offsets. The
/// V2→V0 edge is parallel to local x and the local z axis is the normal.
pub const CANONICAL_ANGLES_DEG: [f64; 3] = [210.0, 90.0, 330.0];

pub fn canonical_offsets<T: Real>() -> [Vector3<T>; 3] {
    CANONICAL_ANGLES_DEG.map(|deg| {
        let a = deg.to_radians();
        Vector3::new(T::lit(a.cos()), T::lit(a.sin()), T::zero())
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexLayout<T: Real> {
    pub vertices: [Vector3<T>; 3],
    /// `(V0V2 × V0V1) / |V0V2 × V0V1|`.
    pub normal: Vector3<T>,
    pub barycenter: Vector3<T>,
    pub area: T,
    pub degenerate: bool,
}

impl<T: Real> VertexLayout<T> {
    /// Layout of an arbitrary vertex triple, normal from the edge cross product.
    pub fn from_vertices(vertices: [Vector3<T>; 3]) -> Self {
        let cross = (vertices[2] - vertices[0]).cross(&(vertices[1] - vertices[0]));
        let norm = cross.norm();
        let area = norm / T::lit(2.0);
        let degenerate = !(area >= T::lit(EPS_AREA));
        let normal = if degenerate { Vector3::z() } else { cross / norm };
        Self { vertices, normal, barycenter: (vertices[0] + vertices[1] + vertices[2]) / T::lit(3.0), area, degenerate }
    }
}

/// Rotation matrix of a unit quaternion stored `(w, x, y, z)`.
pub fn quat_to_matrix<T: Real>(q: &[T; 4]) -> Matrix3<T> {
    let [w, x, y, z] = *q;
    let one = T::one();
    let two = T::lit(2.0);
    Matrix3::new(
        one - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        one - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        one - two * (x * x + y * y),
    )
}

/// Normalized copy of `q` and its original norm.
pub fn normalize_quat<T: Real>(q: &[T; 4]) -> ([T; 4], T) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > T::zero()) {
        return ([T::one(), T::zero(), T::zero(), T::zero()], T::one());
    }
    (q.map(|c| c / n), n)
}

/// Pulls a gradient on the rotation matrix back to the stored (unnormalized)
/// quaternion.
pub fn quat_matrix_backward<T: Real>(q_raw: &[T; 4], g: &Matrix3<T>) -> [T; 4] {
    let (q, norm) = normalize_quat(q_raw);
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let gw = two * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = two
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - two * x * g[(1, 1)] - w * g[(1, 2)] + z * g[(2, 0)]
            + w * g[(2, 1)]
            - two * x * g[(2, 2)]);
    let gy = two
        * (-two * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - two * y * g[(2, 2)]);
    let gz = two
        * (-two * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - two * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let gq = [gw, gx, gy, gz];
    let dot = gq[0] * q[0] + gq[1] * q[1] + gq[2] * q[2] + gq[3] * q[3];
    std::array::from_fn(|k| (gq[k] - q[k] * dot) / norm)
}

/// Activated view of one triangle's raw parameters.
#[derive(Clone, Copy, Debug)]
pub struct Activated<T: Real> {
    pub scales: Vector3<T>,
    pub alpha: T,
    pub sigma: T,
    pub rotation: Matrix3<T>,
}

pub fn activate<T: Real>(scale_raw: &Vector3<T>, quat: &[T; 4], opacity_raw: T, sigma_raw: T) -> Activated<T> {
    let (q, _) = normalize_quat(quat);
    Activated {
        scales: scale_raw.map(|s| s.exp()),
        alpha: sigmoid(opacity_raw),
        sigma: sigma_raw.exp(),
        rotation: quat_to_matrix(&q),
    }
}

/// Vertex layout of raw parameters. The normal is `R ẑ`, which equals the
/// cross-product normal for every positive scale triple.
pub fn layout_from_raw<T: Real>(mu: &Vector3<T>, scale_raw: &Vector3<T>, quat: &[T; 4]) -> VertexLayout<T> {
    let (q, _) = normalize_quat(quat);
    let r = quat_to_matrix(&q);
    let u = canonical_offsets::<T>();
    let vertices: [Vector3<T>; 3] = std::array::from_fn(|j| mu + r * (u[j] * scale_raw[j].exp()));
    let cross = (vertices[2] - vertices[0]).cross(&(vertices[1] - vertices[0]));
    let area = cross.norm() / T::lit(2.0);
    VertexLayout {
        vertices,
        normal: r.column(2).into_owned(),
        barycenter: (vertices[0] + vertices[1] + vertices[2]) / T::lit(3.0),
        area,
        degenerate: !(area >= T::lit(EPS_AREA)),
    }
}

/// Gradients of the raw parameters given gradients on the three vertices and
/// the normal. Returns `(g_mu, g_scale_raw, g_quat)`.
pub fn layout_backward<T: Real>(
    scale_raw: &Vector3<T>,
    quat: &[T; 4],
    g_vertices: &[Vector3<T>; 3],
    g_normal: &Vector3<T>,
) -> (Vector3<T>, Vector3<T>, [T; 4]) {
    let (q, _) = normalize_quat(quat);
    let r = quat_to_matrix(&q);
    let u = canonical_offsets::<T>();
    let g_mu = g_vertices[0] + g_vertices[1] + g_vertices[2];
    let mut g_scale = Vector3::zeros();
    let mut g_r = g_normal * Vector3::z().transpose();
    for j in 0..3 {
        let s = scale_raw[j].exp();
        g_scale[j] = g_vertices[j].dot(&(r * u[j])) * s;
        g_r += g_vertices[j] * (u[j] * s).transpose();
    }
    (g_mu, g_scale, quat_matrix_backward(quat, &g_r))
}

/// Inverse of the layout: finds `(mu, scales, quat)` reproducing the given
/// vertices, or `None` when the triangle has an angle of 120° or more (its
/// vertices cannot be seen from one point at mutual 120° angles).
pub fn fit_layout<T: Real>(v: &[Vector3<T>; 3]) -> Option<(Vector3<T>, Vector3<T>, [T; 4])> {
    let lay = VertexLayout::from_vertices(*v);
    if lay.degenerate {
        return None;
    }
    let n = lay.normal;
    let e1 = (v[1] - v[0]).normalize();
    let e2 = n.cross(&e1);
    let to2 = |p: &Vector3<T>| Vector2::new((p - v[0]).dot(&e1), (p - v[0]).dot(&e2));
    let p = [to2(&v[0]), to2(&v[1]), to2(&v[2])];
    // Apex of the equilateral triangle erected outward on the side opposite `i`.
    let apex = |i: usize| {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        let mid = (a + b) / T::lit(2.0);
        let e = b - a;
        let mut perp = Vector2::new(-e.y, e.x) * T::lit(3.0f64.sqrt() / 2.0);
        if perp.dot(&(p[i] - mid)) > T::zero() {
            perp = -perp;
        }
        mid + perp
    };
    let (a0, a1) = (apex(0), apex(1));
    let d0 = a0 - p[0];
    let d1 = a1 - p[1];
    let det = d0.x * (-d1.y) - d0.y * (-d1.x);
    if det.abs() < T::lit(1e-300) {
        return None;
    }
    let rhs = p[1] - p[0];
    let t = (rhs.x * (-d1.y) - rhs.y * (-d1.x)) / det;
    let f = p[0] + d0 * t;
    let mu = v[0] + e1 * f.x + e2 * f.y;
    let scales: Vector3<T> = Vector3::from_fn(|j, _| (v[j] - mu).norm());
    if scales.iter().any(|s| !(*s > T::zero())) {
        return None;
    }
    let a = (v[0] - mu) / scales[0];
    let th = CANONICAL_ANGLES_DEG[0].to_radians();
    let rx = a * T::lit(th.cos()) - n.cross(&a) * T::lit(th.sin());
    let r = Matrix3::from_columns(&[rx, n.cross(&rx), n]);
    let u = canonical_offsets::<T>();
    let tol = T::lit(1e-6);
    for j in 1..3 {
        if (r * u[j] - (v[j] - mu) / scales[j]).norm() > tol {
            return None;
        }
    }
    let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let q = uq.quaternion();
    Some((mu, scales, [q.w, q.i, q.j, q.k]))
}
