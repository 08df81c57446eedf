//! Triangle-soup data model: storage, activations, vertex layout and
//! initialization.

pub mod init;
pub mod layout;
pub mod soup;

pub use init::{init_from_points, InitOptions, SparseSeed};
pub use layout::{
    activate, canonical_offsets, fit_layout, layout_backward, layout_from_raw, quat_to_matrix, Activated, VertexLayout,
    EPS_AREA,
};
pub use soup::{ParamBuffers, ParamGroup, TriangleSoup};
