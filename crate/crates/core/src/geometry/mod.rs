//! Geometric foundations: triangle meshes, surface sampling, signed distance
//! fields (dense grids and analytic primitives), and procedural test shapes.

mod io;
mod mesh;
mod primitives;
mod sample;
mod sdf;
pub mod shapes;

pub use io::{load_mesh, load_ply_with_scalar, write_obj, ObjGroup};
pub use mesh::Mesh;
pub use primitives::PrimitiveShape;
pub use sample::{sample_surface, SurfacePoint};
pub(crate) use sample::barycentric;
pub use sdf::{
    point_triangle_distance, point_triangle_distance_squared, GridBuildParams, GridBuildReport,
    SdfGrid, SdfSample, SignMethod,
};
