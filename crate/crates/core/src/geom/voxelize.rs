//! Terrain and collision voxelization.

use std::collections::BTreeSet;

use glam::DVec3;

use super::{CollisionMesh, GridFrame, HeightField, Region, Voxel, VoxelIndex, VoxelKind, VoxelSet};
use crate::error::Result;

/// Index range `[lo, hi)` of cells whose centers fall in `[min, max)` along one axis.
fn axis_range(origin: f64, s: f64, min: f64, max: f64) -> (i32, i32) {
    let mut lo = ((min - origin) / s - 0.5).floor() as i32;
    while origin + (lo as f64 + 0.5) * s < min {
        lo += 1;
    }
    let mut hi = ((max - origin) / s - 0.5).ceil() as i32 + 1;
    while hi > lo && origin + ((hi - 1) as f64 + 0.5) * s >= max {
        hi -= 1;
    }
    (lo, hi)
}

/// Cell index ranges of a region on a frame, per axis.
pub(crate) fn region_cells(frame: &GridFrame, region: &Region) -> [(i32, i32); 3] {
    let s = frame.resolution;
    [
        axis_range(frame.origin.x, s, region.min.x, region.max.x),
        axis_range(frame.origin.y, s, region.min.y, region.max.y),
        axis_range(frame.origin.z, s, region.min.z, region.max.z),
    ]
}

/// One surface voxel per in-region column, at the layer containing the
/// bilinearly sampled terrain height under the column center.
///
/// Columns outside the heightfield footprint are skipped; a region that
/// misses the heightfield yields an empty set.
pub fn voxelize_terrain(hf: &HeightField, region: &Region, s: f64) -> Result<VoxelSet> {
    let frame = GridFrame::snapped(region, s)?;
    let [(x0, x1), (y0, y1), _] = region_cells(&frame, region);
    let mut voxels = Vec::new();
    for ix in x0..x1 {
        for iy in y0..y1 {
            let probe = frame.center(VoxelIndex::new(ix, iy, 0));
            if !hf.contains(probe.x, probe.y) {
                continue;
            }
            let h = hf.height_at(probe.x, probe.y)?;
            let iz = ((h - frame.origin.z) / s).floor() as i32;
            let index = VoxelIndex::new(ix, iy, iz);
            voxels.push(Voxel {
                index,
                center: frame.center(index),
                kind: VoxelKind::TerrainSurface,
                surface_height: Some(h),
            });
        }
    }
    if voxels.is_empty() {
        log::warn!("region does not overlap the heightfield footprint");
    }
    voxels.sort_by_key(|v| v.index);
    Ok(VoxelSet { frame, voxels })
}

/// Voxels whose closed box touches at least one triangle of a mesh not
/// flagged `nav_excluded`. Candidates come from each triangle's bounding box.
pub fn voxelize_collision(meshes: &[CollisionMesh], region: &Region, s: f64) -> Result<VoxelSet> {
    let frame = GridFrame::snapped(region, s)?;
    let bounds = region_cells(&frame, region);
    let half = DVec3::splat(s * 0.5);
    let mut hits = BTreeSet::new();
    for mesh in meshes.iter().filter(|m| !m.nav_excluded) {
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangle(t);
            let lo = tri[0].min(tri[1]).min(tri[2]);
            let hi = tri[0].max(tri[1]).max(tri[2]);
            let mut range = [(0i32, 0i32); 3];
            for axis in 0..3 {
                // One cell of slack so boxes touching the bbox faces are tested.
                let a = ((lo[axis] - frame.origin[axis]) / s).floor() as i32 - 1;
                let b = ((hi[axis] - frame.origin[axis]) / s).floor() as i32 + 2;
                range[axis] = (a.max(bounds[axis].0), b.min(bounds[axis].1));
            }
            for ix in range[0].0..range[0].1 {
                for iy in range[1].0..range[1].1 {
                    for iz in range[2].0..range[2].1 {
                        let index = VoxelIndex::new(ix, iy, iz);
                        if hits.contains(&index) {
                            continue;
                        }
                        if super::triangle_box_overlap(frame.center(index), half, &tri) {
                            hits.insert(index);
                        }
                    }
                }
            }
        }
    }
    let voxels = hits
        .into_iter()
        .map(|index| Voxel {
            index,
            center: frame.center(index),
            kind: VoxelKind::Occupied,
            surface_height: None,
        })
        .collect();
    Ok(VoxelSet { frame, voxels })
}
