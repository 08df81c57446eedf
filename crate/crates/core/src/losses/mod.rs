//! Rendering losses, geometric regularizers and the connectivity loss.

pub mod conn;
pub mod geometric;
pub mod photometric;

pub use conn::{apply_vertex_grads, connectivity_loss, VertexGrads};
pub use geometric::{depth_normals, normal_consistency_loss, smoothness_loss};
pub use photometric::{photometric_loss, ssim};

/// Weights of the four loss terms and the L1/SSIM mix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub photometric: f64,
    pub normal: f64,
    pub smooth: f64,
    pub connectivity: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { photometric: 1.0, normal: 0.05, smooth: 0.8, connectivity: 10.0, gamma: 0.2 }
    }
}
