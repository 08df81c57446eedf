//! Tile-based CPU rasterizer of triangle soups with an analytic backward pass.

pub mod backward;
pub mod camera;
pub mod forward;

use serde::{Deserialize, Serialize};

pub use backward::{render_backward, ImageGrads};
pub use camera::Camera;
pub use forward::{render, Contributor, RenderOutput, TileBins};

/// Which per-pixel depth the renderer reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for DepthMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(Self::Median),
            "mean" => Ok(Self::Mean),
            other => Err(format!("unknown depth mode `{other}` (expected median or mean)")),
        }
    }
}

/// Rasterization settings. Plain `f64` so it can live in a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub depth_mode: DepthMode,
    pub background: [f64; 3],
    pub tile_size: usize,
    /// Blending stops once transmittance falls below this.
    pub t_min: f64,
    /// Contributors with smaller effective opacity are skipped.
    pub alpha_min: f64,
    /// Attenuate transmittance by `α·w_σ` (true) or by bare `α`.
    pub transmittance_uses_diffuse: bool,
    /// Evaluate SH per vertex toward each vertex instead of toward `μ`.
    pub per_vertex_view_dir: bool,
    pub near: f64,
    pub eps_parallel: f64,
    /// Reduce per-tile gradients in fixed tile order.
    pub deterministic: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            depth_mode: DepthMode::Median,
            background: [0.0; 3],
            tile_size: 16,
            t_min: 1e-4,
            alpha_min: 1.0 / 255.0,
            transmittance_uses_diffuse: true,
            per_vertex_view_dir: false,
            near: crate::geometry::intersect::DEFAULT_NEAR,
            eps_parallel: crate::geometry::intersect::DEFAULT_EPS_PARALLEL,
            deterministic: true,
        }
    }
}
