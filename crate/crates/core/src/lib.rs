//! Offline navigation-mesh validation against a voxel reconstruction of
//! walkable space.
//!
//! The pipeline reconstructs walkable voxels from a terrain heightfield and
//! collision meshes, extracts the component reachable from a seed, explores
//! it with one of several strategies (including a learned DDQN policy) and
//! compares voxel reachability with navmesh reachability at every sample.

pub mod bench;
pub mod error;
pub mod explore;
pub mod geom;
pub mod importance;
pub mod navmesh;
pub mod pipeline;
pub mod rl;
pub mod synth;
pub mod validate;
pub mod walk;

pub use error::{Error, Result};
