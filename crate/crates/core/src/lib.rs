//! Content-adapted tetrahedral sampling for cone-beam CT.
//!
//! Edges detected in each projection are backprojected through the volume;
//! voxels crossed by unusually many edge rays are kept as seed points and
//! meshed by 3D Delaunay tetrahedralization. The resulting mesh can be scored
//! against the true object boundary and used as the basis for an iterative
//! reconstruction.

pub mod accumulate;
pub mod bvh;
pub mod cloud;
pub mod delaunay;
pub mod edge2d;
pub mod error;
pub mod geometry;
pub mod image;
pub mod phantom;
pub mod pipeline;
pub mod quality;
pub mod recon;
pub mod statmodel;

pub use error::{Error, ErrorKind, Result};

/// Points and directions in world coordinates (mm).
pub type Vec3 = nalgebra::Vector3<f64>;
