//! Dataset ingestion, raster and point-cloud files, depth fusion and metrics.

pub mod colmap;
pub mod dataset;
pub mod fusion;
pub mod images;
pub mod metrics;
pub mod ply;

pub use colmap::{load_sfm, save_sfm, SfmModel};
pub use dataset::{Dataset, View};
pub use fusion::{fuse_depth_maps, DepthView, FusedCloud, FusionParams};
pub use metrics::{chamfer, psnr, Chamfer};
