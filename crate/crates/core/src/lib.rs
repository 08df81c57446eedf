//! Differentiable triangle-soup radiance fields.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which training and the tools use.

// `!(x < y)` deliberately treats NaN as failing; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod connectivity;
pub mod density;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod raster;
pub mod scalar;
pub mod scene;
pub mod spatial;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Soup = scene::TriangleSoup<f64>;
pub type Seed = scene::SparseSeed<f64>;
pub type Layout = scene::VertexLayout<f64>;
pub type Cam = raster::Camera<f64>;
