//! Sparse surface octree carrying per-voxel spatial factors, with
//! child-averaged levels of detail.

pub mod io;
mod lod;
pub mod mesh;
mod sat;
pub mod tree;

pub use lod::PointIndex;
pub use mesh::{Mesh, Vec3};
pub use sat::triangle_box_overlap;
pub use tree::{cell_center, decode, encode, tangent_for, voxelize, AngularFactors, Hit, Level, OctreeBtf, Voxel};
