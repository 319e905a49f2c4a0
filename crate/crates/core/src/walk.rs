//! Walkability classification, the walkable voxel graph and seed reachability.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{GridFrame, HeightField, KdTree, VoxelGrid, VoxelIndex};

/// Agent constraints used to decide walkability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Maximum walkable slope, radians.
    pub theta_max: f64,
    /// Maximum step height between neighboring voxels, m.
    pub h_step: f64,
    /// Agent radius, m.
    pub r_agent: f64,
    /// Required vertical clearance, m.
    pub h_agent: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            theta_max: 45f64.to_radians(),
            h_step: 0.4,
            r_agent: 0.5,
            h_agent: 2.0,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.theta_max, self.h_step, self.r_agent, self.h_agent]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.theta_max >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Invalid(format!("invalid agent parameters {self:?}")));
        }
        Ok(())
    }
}

/// Neighbor radius used when none is configured: admits diagonals, excludes two-cell jumps.
pub fn default_neighbor_radius(s: f64) -> f64 {
    1.5 * s
}

/// Slope in radians of the terrain under `(x, y)`.
pub fn slope_at(hf: &HeightField, x: f64, y: f64) -> f64 {
    hf.normal_clamped(x, y).dot(DVec3::Z).clamp(-1.0, 1.0).acos()
}

pub fn surface_normal(hf: &HeightField, x: f64, y: f64) -> Result<DVec3> {
    hf.surface_normal(x, y)
}

/// Terrain surface voxels passing the slope, obstacle-distance and
/// vertical-clearance tests. The step test is applied per edge by
/// [`build_walk_graph`]. Returned indices are sorted.
pub fn classify_walkable(grid: &VoxelGrid, hf: &HeightField, params: &AgentParams) -> Vec<VoxelIndex> {
    grid.terrain()
        .iter()
        .filter(|v| {
            let h = v.surface_height.unwrap_or(v.center.z);
            slope_at(hf, v.center.x, v.center.y) <= params.theta_max
                && free_height(grid, v.index) >= params.h_agent
                && !obstacle_within(grid, v.index, v.center, h, params)
        })
        .map(|v| v.index)
        .collect()
}

/// Gap between the top of a surface voxel and the lowest occupied voxel
/// strictly above it in the same column; infinite when the column is open.
pub fn free_height(grid: &VoxelGrid, index: VoxelIndex) -> f64 {
    let layers = grid.occupied_layers(index.column());
    let above = layers.partition_point(|&z| z <= index.z);
    match layers.get(above) {
        Some(&z) => grid.frame().layer_bottom(z) - grid.frame().layer_bottom(index.z + 1),
        None => f64::INFINITY,
    }
}

/// Whether an occupied voxel overlapping the agent body interval
/// `[h + h_step, h + h_agent]` lies closer than `r_agent` horizontally.
fn obstacle_within(grid: &VoxelGrid, index: VoxelIndex, center: DVec3, h: f64, p: &AgentParams) -> bool {
    let frame = grid.frame();
    let s = frame.resolution;
    let (body_lo, body_hi) = (h + p.h_step, h + p.h_agent);
    let k = (p.r_agent / s).ceil() as i32;
    for dx in -k..=k {
        for dy in -k..=k {
            let column = (index.x + dx, index.y + dy);
            let layers = grid.occupied_layers(column);
            if layers.is_empty() {
                continue;
            }
            let other = frame.center(VoxelIndex::new(column.0, column.1, 0));
            let dist = (other.x - center.x).hypot(other.y - center.y);
            if dist >= p.r_agent {
                continue;
            }
            let hit = layers.iter().any(|&z| {
                let bottom = frame.layer_bottom(z);
                bottom <= body_hi && bottom + s >= body_lo
            });
            if hit {
                return true;
            }
        }
    }
    false
}

/// Graph over walkable voxels. Node ids follow voxel index order, and
/// adjacency lists are sorted.
#[derive(Debug, Clone)]
pub struct WalkGraph {
    frame: GridFrame,
    nodes: Vec<VoxelIndex>,
    centers: Vec<DVec3>,
    heights: Vec<f64>,
    adjacency: Vec<Vec<u32>>,
    by_column: HashMap<(i32, i32), u32>,
    radius: f64,
    spatial: KdTree<u32>,
}

/// Connects walkable voxels whose centers are within `r` and whose surface
/// heights differ by at most `h_step`.
///
/// A diagonal link between horizontally adjacent corners additionally needs
/// one of the two orthogonal cells in between to be linked to both ends, so
/// the agent never squeezes between two blocked cells.
pub fn build_walk_graph(
    walkable: &[VoxelIndex],
    grid: &VoxelGrid,
    params: &AgentParams,
    r: f64,
) -> Result<WalkGraph> {
    let frame = *grid.frame();
    let mut nodes = walkable.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let mut centers = Vec::with_capacity(nodes.len());
    let mut heights = Vec::with_capacity(nodes.len());
    let mut by_column = HashMap::with_capacity(nodes.len());
    for (id, idx) in nodes.iter().enumerate() {
        let v = grid
            .terrain_at(idx.column())
            .filter(|v| v.index == *idx)
            .ok_or_else(|| Error::Invalid(format!("walkable voxel {idx:?} is not a terrain surface voxel")))?;
        centers.push(v.center);
        heights.push(v.surface_height.unwrap_or(v.center.z));
        by_column.insert(idx.column(), id as u32);
    }

    let tol = 1e-9 * r.max(1.0);
    let linkable = |a: usize, b: usize| {
        centers[a].distance(centers[b]) <= r + tol && (heights[a] - heights[b]).abs() <= params.h_step
    };
    let lookup = |x: i32, y: i32| by_column.get(&(x, y)).map(|&id| id as usize);

    let k = (r / frame.resolution).floor() as i32 + 1;
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for a in 0..nodes.len() {
        let ia = nodes[a];
        for dx in -k..=k {
            for dy in -k..=k {
                if (dx, dy) == (0, 0) {
                    continue;
                }
                let Some(b) = lookup(ia.x + dx, ia.y + dy) else { continue };
                if b <= a || !linkable(a, b) {
                    continue;
                }
                if dx.abs() == 1 && dy.abs() == 1 {
                    let via = |m: Option<usize>| m.is_some_and(|m| linkable(a, m) && linkable(m, b));
                    if !via(lookup(ia.x + dx, ia.y)) && !via(lookup(ia.x, ia.y + dy)) {
                        continue;
                    }
                }
                adjacency[a].push(b as u32);
                adjacency[b].push(a as u32);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    let spatial = KdTree::build(centers.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect());
    Ok(WalkGraph {
        frame,
        nodes,
        centers,
        heights,
        adjacency,
        by_column,
        radius: r,
        spatial,
    })
}

impl WalkGraph {
    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn index(&self, id: u32) -> VoxelIndex {
        self.nodes[id as usize]
    }

    pub fn indices(&self) -> &[VoxelIndex] {
        &self.nodes
    }

    pub fn center(&self, id: u32) -> DVec3 {
        self.centers[id as usize]
    }

    pub fn height(&self, id: u32) -> f64 {
        self.heights[id as usize]
    }

    pub fn neighbors(&self, id: u32) -> &[u32] {
        &self.adjacency[id as usize]
    }

    pub fn id_of(&self, index: VoxelIndex) -> Option<u32> {
        self.by_column
            .get(&index.column())
            .copied()
            .filter(|&id| self.nodes[id as usize] == index)
    }

    pub fn id_at_column(&self, column: (i32, i32)) -> Option<u32> {
        self.by_column.get(&column).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(low, high)` ids.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |&&b| b as usize > a)
                .map(move |&b| (a as u32, b))
        })
    }

    /// Node nearest to `p` and its distance.
    pub fn nearest(&self, p: DVec3) -> Option<(u32, f64)> {
        self.spatial.nearest_with_distance(p).map(|(id, d2)| (id, d2.sqrt()))
    }

    /// Node ids within `radius` of `p`, sorted.
    pub fn within(&self, p: DVec3, radius: f64) -> Vec<u32> {
        self.spatial.within(p, radius)
    }

    /// Writes walkable voxels and edge midpoints as `x y z kind` lines.
    pub fn dump_points(&self, reach: Option<&ReachableSet>, path: &Path) -> Result<()> {
        let mut out = String::new();
        for id in 0..self.len() as u32 {
            let c = self.center(id);
            let kind = match reach {
                Some(r) if r.contains(id) => "reachable",
                _ => "walkable",
            };
            let _ = writeln!(out, "{} {} {} {kind}", c.x, c.y, c.z);
        }
        for (a, b) in self.edges() {
            let m = (self.center(a) + self.center(b)) * 0.5;
            let _ = writeln!(out, "{} {} {} edge", m.x, m.y, m.z);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Connected component of the walk graph containing the seed voxel.
#[derive(Debug, Clone)]
pub struct ReachableSet {
    seed: u32,
    order: Vec<u32>,
    mask: Vec<bool>,
}

impl ReachableSet {
    pub fn seed(&self) -> u32 {
        self.seed
    }

    /// Members in breadth-first order from the seed.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.mask.get(id as usize).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Members as sorted voxel indices.
    pub fn members(&self, graph: &WalkGraph) -> Vec<VoxelIndex> {
        let mut ids = self.order.clone();
        ids.sort_unstable();
        ids.into_iter().map(|id| graph.index(id)).collect()
    }
}

/// Breadth-first flood fill from the walkable voxel nearest to `seed_pos`.
pub fn flood_fill(graph: &WalkGraph, seed_pos: DVec3) -> Result<ReachableSet> {
    let limit = 2.0 * graph.radius;
    let seed = match graph.nearest(seed_pos) {
        Some((id, d)) if d <= limit => id,
        _ => {
            return Err(Error::SeedNotWalkable {
                x: seed_pos.x,
                y: seed_pos.y,
                z: seed_pos.z,
                radius: limit,
            })
        }
    };
    Ok(flood_fill_from(graph, seed))
}

pub fn flood_fill_from(graph: &WalkGraph, seed: u32) -> ReachableSet {
    let mut mask = vec![false; graph.len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([seed]);
    mask[seed as usize] = true;
    while let Some(id) = queue.pop_front() {
        order.push(id);
        for &n in graph.neighbors(id) {
            if !mask[n as usize] {
                mask[n as usize] = true;
                queue.push_back(n);
            }
        }
    }
    ReachableSet { seed, order, mask }
}
