//! Posed images plus a sparse seed cloud.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::raster::Camera;
use crate::scalar::Real;
use crate::scene::SparseSeed;

/// One posed RGB image (row-major, values in `[0, 1]`).
#[derive(Clone, Debug, PartialEq)]
pub struct View<T: Real> {
    pub name: String,
    pub camera: Camera<T>,
    pub image: Vec<Vector3<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Real> {
    pub views: Vec<View<T>>,
    pub seed: SparseSeed<T>,
}

impl<T: Real> Dataset<T> {
    pub fn validate(&self) -> Result<()> {
        if self.views.len() < 2 {
            return Err(Error::Validation(format!("need at least 2 posed images, got {}", self.views.len())));
        }
        for v in &self.views {
            v.camera.validate().map_err(|e| Error::Validation(format!("view `{}`: {e}", v.name)))?;
            if v.image.len() != v.camera.pixel_count() {
                return Err(Error::Validation(format!(
                    "view `{}`: image has {} pixels but the camera is {}x{}",
                    v.name,
                    v.image.len(),
                    v.camera.width,
                    v.camera.height
                )));
            }
        }
        self.seed.validate()
    }

    /// Indices of every `k`-th view (`k > 0`), used as held-out views.
    pub fn every_kth(&self, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        (0..self.views.len()).filter(|i| i % k == 0).collect()
    }

    /// Complement of `held_out`.
    pub fn training_indices(&self, held_out: &[usize]) -> Vec<usize> {
        (0..self.views.len()).filter(|i| !held_out.contains(i)).collect()
    }
}
