//! Pinhole camera with a world-to-camera pose. Pixel `(i, j)` has its center
//! at `(i + 0.5, j + 0.5)`; depth is distance along the unit ray.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T: Real> {
    pub width: usize,
    pub height: usize,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// World-to-camera rotation.
    pub rot: Matrix3<T>,
    /// World-to-camera translation: `x_cam = rot * x_world + trans`.
    pub trans: Vector3<T>,
}

impl<T: Real> Camera<T> {
    pub fn new(width: usize, height: usize, fx: T, fy: T, cx: T, cy: T, rot: Matrix3<T>, trans: Vector3<T>) -> Result<Self> {
        let cam = Self { width, height, fx, fy, cx, cy, rot, trans };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with image `up` roughly along
    /// `-y` in camera space (the y axis points down in the image).
    pub fn look_at(width: usize, height: usize, focal: T, eye: Vector3<T>, target: Vector3<T>, up: Vector3<T>) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rot = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let half = T::lit(0.5);
        Self {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: T::of_usize(width) * half,
            cy: T::of_usize(height) * half,
            rot,
            trans: -(rot * eye),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("camera has an empty image".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::Validation("camera focal lengths must be positive".into()));
        }
        let ortho = (self.rot.transpose() * self.rot - Matrix3::identity()).abs().max();
        // loose enough for rotations rounded to f32
        let tol = T::lit(1e-9).max(T::default_epsilon() * T::lit(1e3));
        if !(ortho < tol) || !(self.rot.determinant() > T::zero()) {
            return Err(Error::Validation("camera rotation is not a proper orthonormal matrix".into()));
        }
        if !self.trans.iter().chain([&self.fx, &self.fy, &self.cx, &self.cy]).all(|x| x.is_finite_val()) {
            return Err(Error::Validation("camera parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<T> {
        -(self.rot.transpose() * self.trans)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn to_camera(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rot * x + self.trans
    }

    /// Unit camera-space direction through continuous pixel coordinates.
    pub fn cam_dir(&self, u: T, v: T) -> Vector3<T> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one()).normalize()
    }

    /// Unit world-space ray direction through the center of pixel `(px, py)`.
    pub fn pixel_dir(&self, px: usize, py: usize) -> Vector3<T> {
        let half = T::lit(0.5);
        self.rot.transpose() * self.cam_dir(T::of_usize(px) + half, T::of_usize(py) + half)
    }

    /// Continuous pixel coordinates and camera-space z of a world point.
    pub fn project(&self, x: &Vector3<T>) -> Option<(T, T, T)> {
        let c = self.to_camera(x);
        if !(c.z > T::zero()) {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy, c.z))
    }

    /// World point at ray distance `depth` through continuous pixel coordinates.
    pub fn unproject(&self, u: T, v: T, depth: T) -> Vector3<T> {
        self.center() + self.rot.transpose() * self.cam_dir(u, v) * depth
    }

    /// Returns a copy whose image is scaled by `factor` (e.g. 0.5).
    pub fn scaled(&self, factor: f64) -> Self {
        let f = T::lit(factor);
        Self {
            width: ((self.width as f64 * factor).round() as usize).max(1),
            height: ((self.height as f64 * factor).round() as usize).max(1),
            fx: self.fx * f,
            fy: self.fy * f,
            cx: self.cx * f,
            cy: self.cy * f,
            rot: self.rot,
            trans: self.trans,
        }
    }

    /// The same camera in another scalar type.
    pub fn cast<U: Real>(&self) -> Camera<U> {
        let c = |x: T| U::lit(x.as_f64());
        Camera {
            width: self.width,
            height: self.height,
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            rot: self.rot.map(c),
            trans: self.trans.map(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera<f64> {
        Camera::look_at(64, 48, 50.0, Vector3::new(1.0, 2.0, -3.0), Vector3::new(0.1, 0.0, 0.3), Vector3::new(0.0, -1.0, 0.0))
    }

    #[test]
    fn look_at_is_valid_and_centered() {
        let c = cam();
        c.validate().unwrap();
        assert!((c.center() - Vector3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
        let (u, v, _) = c.project(&Vector3::new(0.1, 0.0, 0.3)).unwrap();
        assert!((u - 32.0).abs() < 1e-9 && (v - 24.0).abs() < 1e-9);
    }

    #[test]
    fn identity_principal_ray_is_optical_axis() {
        let c = Camera::new(10, 10, 5.0, 5.0, 5.0, 5.0, Matrix3::identity(), Vector3::zeros()).unwrap();
        assert_eq!(c.cam_dir(5.0, 5.0), Vector3::z());
    }

    #[test]
    fn project_unproject_round_trip() {
        let c = cam();
        let x = Vector3::new(0.3, -0.2, 0.5);
        let (u, v, _) = c.project(&x).unwrap();
        let d = (x - c.center()).norm();
        assert!((c.unproject(u, v, d) - x).norm() < 1e-9);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(10, 10, -1.0, 5.0, 5.0, 5.0, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(Camera::new(10, 10, 1.0, 5.0, 5.0, 5.0, Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
    }
}
