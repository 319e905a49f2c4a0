//! Geometric primitives, file ingestion and voxelization.
//!
//! Coordinates are z-up, right-handed, in meters. Every voxel lives on a
//! [`GridFrame`]: a resolution `s` and an origin snapped to an integer
//! multiple of `s`, so that a voxel center is always
//! `origin + (index + 0.5) * s` and can be rebuilt bit-for-bit from its index.

mod heightfield;
mod kdtree;
mod mesh;
mod sat;
mod voxelize;

use std::collections::HashMap;

pub use glam::{DVec2, DVec3};

pub use heightfield::{load_heightfield, HeightField};
pub use kdtree::KdTree;
pub use mesh::{load_collision_mesh, CollisionMesh, DEGENERATE_AREA};
pub use sat::triangle_box_overlap;
pub use voxelize::{voxelize_collision, voxelize_terrain};

use crate::error::{Error, Result};

/// Default voxel edge length in meters.
pub const DEFAULT_RESOLUTION: f64 = 0.5;

/// Axis-aligned validation region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: DVec3,
    pub max: DVec3,
}

impl Region {
    pub fn around(seed: DVec3, half_extent: f64) -> Result<Self> {
        if !(half_extent > 0.0) {
            return Err(Error::Invalid(format!(
                "region half extent must be positive, got {half_extent}"
            )));
        }
        Ok(Region {
            min: seed - DVec3::splat(half_extent),
            max: seed + DVec3::splat(half_extent),
        })
    }

    pub fn from_corners(min: DVec3, max: DVec3) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(Error::Invalid(format!(
                "region corners {min:?} / {max:?} do not span a box"
            )));
        }
        Ok(Region { min, max })
    }

    pub fn contains_xy(&self, p: DVec3) -> bool {
        p.x >= self.min.x && p.x < self.max.x && p.y >= self.min.y && p.y < self.max.y
    }

    pub fn contains(&self, p: DVec3) -> bool {
        self.contains_xy(p) && p.z >= self.min.z && p.z < self.max.z
    }
}

/// Integer voxel coordinate. Ordering is lexicographic on `(x, y, z)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct VoxelIndex {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelIndex {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        VoxelIndex { x, y, z }
    }

    pub fn column(&self) -> (i32, i32) {
        (self.x, self.y)
    }
}

/// Resolution plus snapped origin shared by every voxel of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub resolution: f64,
    pub origin: DVec3,
}

impl GridFrame {
    pub fn new(resolution: f64, origin: DVec3) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Invalid(format!(
                "voxel resolution must be positive, got {resolution}"
            )));
        }
        Ok(GridFrame { resolution, origin })
    }

    /// Frame whose origin is the region minimum snapped down to a multiple of `s`.
    pub fn snapped(region: &Region, s: f64) -> Result<Self> {
        let snap = |v: f64| (v / s).floor() * s;
        GridFrame::new(
            s,
            DVec3::new(snap(region.min.x), snap(region.min.y), snap(region.min.z)),
        )
    }

    pub fn center(&self, index: VoxelIndex) -> DVec3 {
        let s = self.resolution;
        DVec3::new(
            self.origin.x + (index.x as f64 + 0.5) * s,
            self.origin.y + (index.y as f64 + 0.5) * s,
            self.origin.z + (index.z as f64 + 0.5) * s,
        )
    }

    /// Index of the cell containing `p` (half-open cells).
    pub fn cell_of(&self, p: DVec3) -> VoxelIndex {
        let s = self.resolution;
        VoxelIndex::new(
            ((p.x - self.origin.x) / s).floor() as i32,
            ((p.y - self.origin.y) / s).floor() as i32,
            ((p.z - self.origin.z) / s).floor() as i32,
        )
    }

    /// World-space z of the bottom face of layer `iz`.
    pub fn layer_bottom(&self, iz: i32) -> f64 {
        self.origin.z + iz as f64 * self.resolution
    }

    /// Closed axis-aligned box `[center - s/2, center + s/2]`.
    pub fn bounds(&self, index: VoxelIndex) -> (DVec3, DVec3) {
        let c = self.center(index);
        let h = DVec3::splat(self.resolution * 0.5);
        (c - h, c + h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VoxelKind {
    TerrainSurface,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel {
    pub index: VoxelIndex,
    pub center: DVec3,
    pub kind: VoxelKind,
    /// Sampled terrain height for surface voxels.
    pub surface_height: Option<f64>,
}

/// Voxels produced by one voxelization pass, sorted by index.
#[derive(Debug, Clone)]
pub struct VoxelSet {
    pub frame: GridFrame,
    pub voxels: Vec<Voxel>,
}

impl VoxelSet {
    pub fn empty(frame: GridFrame) -> Self {
        VoxelSet {
            frame,
            voxels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.voxels.iter().map(|v| v.index)
    }
}

/// Terrain surface voxels and collision occupancy on one frame, with a
/// nearest-neighbor index over every voxel center.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    frame: GridFrame,
    terrain: Vec<Voxel>,
    occupied: Vec<Voxel>,
    columns: HashMap<(i32, i32), usize>,
    occupied_columns: HashMap<(i32, i32), Vec<i32>>,
    spatial: KdTree<(VoxelIndex, VoxelKind)>,
}

pub fn build_grid(terrain: VoxelSet, occupied: VoxelSet) -> Result<VoxelGrid> {
    if terrain.frame.resolution != occupied.frame.resolution {
        return Err(Error::ResolutionMismatch(
            terrain.frame.resolution,
            occupied.frame.resolution,
        ));
    }
    if terrain.frame.origin != occupied.frame.origin {
        return Err(Error::Invalid(format!(
            "grid origins differ: {:?} vs {:?}",
            terrain.frame.origin, occupied.frame.origin
        )));
    }
    let frame = terrain.frame;
    let mut terrain = terrain.voxels;
    let mut occupied = occupied.voxels;
    terrain.sort_by_key(|v| v.index);
    terrain.dedup_by_key(|v| v.index);
    occupied.sort_by_key(|v| v.index);
    occupied.dedup_by_key(|v| v.index);

    let mut columns = HashMap::with_capacity(terrain.len());
    for (i, v) in terrain.iter().enumerate() {
        if columns.insert(v.index.column(), i).is_some() {
            return Err(Error::Invalid(format!(
                "more than one terrain surface voxel in column {:?}",
                v.index.column()
            )));
        }
    }
    let mut occupied_columns: HashMap<(i32, i32), Vec<i32>> = HashMap::new();
    for v in &occupied {
        occupied_columns
            .entry(v.index.column())
            .or_default()
            .push(v.index.z);
    }

    let points = terrain
        .iter()
        .chain(occupied.iter())
        .map(|v| (v.center, (v.index, v.kind)))
        .collect();
    let spatial = KdTree::build(points);

    Ok(VoxelGrid {
        frame,
        terrain,
        occupied,
        columns,
        occupied_columns,
        spatial,
    })
}

impl VoxelGrid {
    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }

    pub fn terrain(&self) -> &[Voxel] {
        &self.terrain
    }

    pub fn occupied(&self) -> &[Voxel] {
        &self.occupied
    }

    pub fn len(&self) -> usize {
        self.terrain.len() + self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Terrain surface voxel of column `(ix, iy)`, if any.
    pub fn terrain_at(&self, column: (i32, i32)) -> Option<&Voxel> {
        self.columns.get(&column).map(|&i| &self.terrain[i])
    }

    /// Sorted occupied layers of a column.
    pub fn occupied_layers(&self, column: (i32, i32)) -> &[i32] {
        self.occupied_columns
            .get(&column)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_occupied(&self, index: VoxelIndex) -> bool {
        self.occupied_layers(index.column())
            .binary_search(&index.z)
            .is_ok()
    }

    /// Voxel whose center is closest to `p`; ties go to the smallest index.
    pub fn nearest_voxel(&self, p: DVec3) -> Result<Voxel> {
        let (index, kind) = self.spatial.nearest(p).ok_or(Error::EmptyGrid)?;
        let list = match kind {
            VoxelKind::TerrainSurface => &self.terrain,
            VoxelKind::Occupied => &self.occupied,
        };
        let pos = list
            .binary_search_by_key(&index, |v| v.index)
            .expect("indexed voxel present");
        Ok(list[pos])
    }
}

pub fn nearest_voxel(grid: &VoxelGrid, p: DVec3) -> Result<Voxel> {
    grid.nearest_voxel(p)
}
