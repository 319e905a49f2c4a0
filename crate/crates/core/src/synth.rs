//! Deterministic synthetic worlds: terrain, obstacles, markers, a reference
//! navmesh emitted from the walk graph, and defect injection with exact
//! ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use glam::{DVec2, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CollisionMesh, GridFrame, HeightField, Region, VoxelGrid, VoxelIndex};
use crate::importance::{markers_to_json, GameplayMarker, KindWeights, MarkerKind};
use crate::navmesh::NavMesh;
use crate::walk::{AgentParams, WalkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainProfile {
    Flat,
    /// Incline along +x.
    Ramp { slope_deg: f64 },
    /// Sum of three sinusoid products with seeded phases.
    Noise { amplitude: f64, frequency: f64 },
    /// Steps rising along +x every `tread` metres.
    Staircase { riser: f64, tread: f64 },
}

/// Terrain with its phases resolved, evaluable in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub profile: TerrainProfile,
    pub phases: [f64; 6],
}

impl Terrain {
    pub fn new(profile: TerrainProfile, rng: &mut impl Rng) -> Self {
        let mut phases = [0.0; 6];
        if matches!(profile, TerrainProfile::Noise { .. }) {
            for p in &mut phases {
                *p = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
        Terrain { profile, phases }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self.profile {
            TerrainProfile::Flat => 0.0,
            TerrainProfile::Ramp { slope_deg } => slope_deg.to_radians().tan() * x,
            TerrainProfile::Staircase { riser, tread } => riser * (x / tread).floor(),
            TerrainProfile::Noise { amplitude, frequency } => {
                let w = std::f64::consts::TAU * frequency;
                (1..=3)
                    .map(|k| {
                        let kf = k as f64;
                        let (a, b) = (self.phases[2 * k - 2], self.phases[2 * k - 1]);
                        (w * kf * x + a).sin() * (w * kf * y + b).cos() / kf
                    })
                    .sum::<f64>()
                    * amplitude
                    / 1.5
            }
        }
    }

    /// Analytic `(dz/dx, dz/dy)`; zero on staircase treads.
    pub fn gradient(&self, x: f64, y: f64) -> DVec2 {
        match self.profile {
            TerrainProfile::Flat | TerrainProfile::Staircase { .. } => DVec2::ZERO,
            TerrainProfile::Ramp { slope_deg } => DVec2::new(slope_deg.to_radians().tan(), 0.0),
            TerrainProfile::Noise { amplitude, frequency } => {
                let w = std::f64::consts::TAU * frequency;
                let mut g = DVec2::ZERO;
                for k in 1..=3 {
                    let kf = k as f64;
                    let (a, b) = (self.phases[2 * k - 2], self.phases[2 * k - 1]);
                    let (u, v) = (w * kf * x + a, w * kf * y + b);
                    g.x += w * u.cos() * v.cos();
                    g.y -= w * u.sin() * v.sin();
                }
                g * amplitude / 1.5
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleSpec {
    pub count: usize,
    pub min_size: f64,
    pub max_size: f64,
    pub height: f64,
    /// Minimum clearance between an obstacle and the seed, m.
    pub seed_clearance: f64,
    /// Spacing of internal floor slabs; they deny headroom inside the
    /// shell so interiors are not walkable. Zero leaves obstacles hollow.
    pub floor_spacing: f64,
}

impl Default for ObstacleSpec {
    fn default() -> Self {
        ObstacleSpec {
            count: 0,
            min_size: 2.0,
            max_size: 5.0,
            height: 3.0,
            seed_clearance: 3.0,
            floor_spacing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    /// Scatter of markers around their cluster center, m.
    pub spread: f64,
    pub radius: f64,
    /// Explicit cluster centers (x, y); random ones are added up to `clusters`.
    pub centers: Vec<DVec2>,
    /// Minimum distance of random cluster centers from the seed, m.
    pub min_seed_distance: f64,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        MarkerSpec {
            clusters: 0,
            per_cluster: 4,
            spread: 2.0,
            radius: 3.0,
            centers: Vec::new(),
            min_seed_distance: 8.0,
        }
    }
}

/// Axis-aligned rectangle in the xy plane, closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: DVec2,
    pub max: DVec2,
}

impl Rect {
    pub fn contains(&self, p: DVec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectInjection {
    /// Deletes the polygons of cells centered in the region.
    RemovePolygons { region: Rect },
    /// Deletes cells whose center lies within `margin` of the mesh boundary,
    /// optionally only inside a region.
    ShrinkMesh {
        margin: f64,
        #[serde(default)]
        region: Option<Rect>,
    },
    /// Adds polygons over terrain cells in the region that carry none,
    /// stitched to neighboring polygons.
    PhantomPolygons { region: Rect },
    /// Severs every polygon connection crossing the region boundary.
    DisconnectIsland { region: Rect },
}

impl DefectInjection {
    pub fn region(&self) -> Option<Rect> {
        match *self {
            DefectInjection::RemovePolygons { region }
            | DefectInjection::PhantomPolygons { region }
            | DefectInjection::DisconnectIsland { region } => Some(region),
            DefectInjection::ShrinkMesh { region, .. } => region,
        }
    }
}

/// Request for planner-chosen injections over the reconstructed world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomDefects {
    pub count: usize,
    /// Square side in cells.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    /// World size along x and y, m.
    pub extent: DVec2,
    pub resolution: f64,
    pub terrain: TerrainProfile,
    pub obstacles: ObstacleSpec,
    pub markers: MarkerSpec,
    pub defects: Vec<DefectInjection>,
    pub random_defects: Option<RandomDefects>,
    /// Seed position (x, y); defaults to the cell center nearest the world center.
    pub seed_position: Option<DVec2>,
    pub agent: AgentParams,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            extent: DVec2::new(24.0, 24.0),
            resolution: crate::geom::DEFAULT_RESOLUTION,
            terrain: TerrainProfile::Flat,
            obstacles: ObstacleSpec::default(),
            markers: MarkerSpec::default(),
            defects: Vec::new(),
            random_defects: None,
            seed_position: None,
            agent: AgentParams::default(),
        }
    }
}

impl WorldSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WorldSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.resolution;
        if !(s > 0.0 && self.extent.x >= 2.0 * s && self.extent.y >= 2.0 * s) {
            return Err(Error::Invalid("world extent must span at least two cells".into()));
        }
        self.agent.validate()?;
        let world = Rect {
            min: DVec2::ZERO,
            max: self.extent,
        };
        for d in &self.defects {
            if let Some(r) = d.region() {
                if !(world.contains(r.min) && world.contains(r.max) && r.min.x <= r.max.x && r.min.y <= r.max.y) {
                    return Err(Error::Invalid(format!("defect region {r:?} outside the world")));
                }
            }
        }
        Ok(())
    }
}

/// Generated world geometry.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub terrain: Terrain,
    pub heightfield: HeightField,
    pub obstacles: Vec<CollisionMesh>,
    pub markers: Vec<GameplayMarker>,
    pub seed_position: DVec3,
    pub region: Region,
}

/// Heightfield samples every half cell so voxel centers hit samples exactly.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.resolution;
    let terrain = Terrain::new(spec.terrain, &mut rng);
    let cell = s / 2.0;
    let w = (spec.extent.x / cell).round() as usize + 1;
    let d = (spec.extent.y / cell).round() as usize + 1;
    let heightfield = HeightField::from_fn(DVec3::ZERO, cell, w, d, |x, y| terrain.height(x, y))?;

    let seed_xy = match spec.seed_position {
        Some(p) => p,
        None => {
            let snap = |v: f64| ((v / s).floor() + 0.5) * s;
            DVec2::new(snap(spec.extent.x / 2.0), snap(spec.extent.y / 2.0))
        }
    };
    let seed_position = seed_xy.extend(heightfield.height_at(seed_xy.x, seed_xy.y)?);

    let obstacles = place_obstacles(spec, &terrain, seed_xy, &mut rng);
    let markers = place_markers(spec, &terrain, seed_xy, &mut rng);

    let (lo, hi) = heightfield
        .heights_world()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h), hi.max(h)));
    let region = Region::from_corners(
        DVec3::new(0.0, 0.0, lo - 2.0 * s),
        DVec3::new(spec.extent.x, spec.extent.y, hi + spec.obstacles.height + spec.agent.h_agent + 2.0),
    )?;
    Ok(World {
        spec: spec.clone(),
        terrain,
        heightfield,
        obstacles,
        markers,
        seed_position,
        region,
    })
}

fn place_obstacles(spec: &WorldSpec, terrain: &Terrain, seed: DVec2, rng: &mut ChaCha8Rng) -> Vec<CollisionMesh> {
    let o = &spec.obstacles;
    let mut boxes = Vec::new();
    for _ in 0..o.count {
        for _attempt in 0..100 {
            let size = DVec2::new(rng.gen_range(o.min_size..=o.max_size), rng.gen_range(o.min_size..=o.max_size));
            let margin = 1.0;
            let (lo_x, hi_x) = (margin, spec.extent.x - margin - size.x);
            let (lo_y, hi_y) = (margin, spec.extent.y - margin - size.y);
            if lo_x >= hi_x || lo_y >= hi_y {
                break;
            }
            let min = DVec2::new(rng.gen_range(lo_x..hi_x), rng.gen_range(lo_y..hi_y));
            let max = min + size;
            let gap = (min - seed).max(seed - max).max(DVec2::ZERO).length();
            if gap < o.seed_clearance {
                continue;
            }
            let base = terrain.height(min.x, min.y).min(terrain.height(max.x, max.y)) - 0.5;
            let top = terrain.height(min.x, min.y).max(terrain.height(max.x, max.y)) + o.height;
            let mut parts = vec![CollisionMesh::cuboid(min.extend(base), max.extend(top))];
            if o.floor_spacing > 0.0 {
                let mut z = base + o.floor_spacing;
                while z < top {
                    let quad = vec![
                        DVec3::new(min.x, min.y, z),
                        DVec3::new(max.x, min.y, z),
                        DVec3::new(max.x, max.y, z),
                        DVec3::new(min.x, max.y, z),
                    ];
                    parts.push(CollisionMesh::new(quad, vec![[0, 1, 2], [0, 2, 3]], false).expect("slab"));
                    z += o.floor_spacing;
                }
            }
            boxes.push(CollisionMesh::merge(&parts, false));
            break;
        }
    }
    boxes
}

fn place_markers(spec: &WorldSpec, terrain: &Terrain, seed: DVec2, rng: &mut ChaCha8Rng) -> Vec<GameplayMarker> {
    let m = &spec.markers;
    let mut centers = m.centers.clone();
    let mut attempts = 0;
    while centers.len() < m.clusters && attempts < 1000 {
        attempts += 1;
        let c = DVec2::new(rng.gen_range(0.0..spec.extent.x), rng.gen_range(0.0..spec.extent.y));
        if c.distance(seed) >= m.min_seed_distance {
            centers.push(c);
        }
    }
    let kinds = [MarkerKind::InteractionZone, MarkerKind::SpawnPoint, MarkerKind::PatrolPath];
    let weights = KindWeights::default();
    let mut markers = Vec::new();
    for (ci, c) in centers.iter().enumerate() {
        for k in 0..m.per_cluster {
            let offset = if k == 0 {
                DVec2::ZERO
            } else {
                DVec2::new(rng.gen_range(-m.spread..=m.spread), rng.gen_range(-m.spread..=m.spread))
            };
            let p = (*c + offset).clamp(DVec2::ZERO, spec.extent);
            let kind = kinds[(ci + k) % kinds.len()].clone();
            markers.push(GameplayMarker {
                weight: weights.defaults[kind.name()],
                kind,
                position: p.extend(terrain.height(p.x, p.y)),
                radius: m.radius,
            });
        }
    }
    markers
}

pub const HEIGHTFIELD_FILE: &str = "terrain.hf";
pub const OBSTACLES_FILE: &str = "obstacles.obj";
pub const MARKERS_FILE: &str = "markers.json";
pub const WORLD_FILE: &str = "world.json";

/// Writes heightfield, obstacle mesh (when any), markers and a world
/// descriptor echoing the `WorldSpec`, seed and terrain profile.
pub fn write_world(world: &World, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    world.heightfield.save(&dir.join(HEIGHTFIELD_FILE))?;
    if !world.obstacles.is_empty() {
        CollisionMesh::merge(&world.obstacles, false).save(&dir.join(OBSTACLES_FILE))?;
    }
    let markers_path = dir.join(MARKERS_FILE);
    std::fs::write(&markers_path, markers_to_json(&world.markers)).map_err(|e| Error::io(&markers_path, e))?;
    let descriptor = serde_json::json!({
        "spec": world.spec,
        "terrain": world.terrain,
        "seed_position": world.seed_position,
        "region": { "min": world.region.min, "max": world.region.max },
    });
    let path = dir.join(WORLD_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&descriptor)?).map_err(|e| Error::io(&path, e))
}

type Column = (i32, i32);

/// Cell-level navmesh model: one square cell per emitted column with its
/// surface height, and orthogonal links between cells whose polygons share
/// an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NavCells {
    frame: GridFrame,
    cells: BTreeMap<Column, f64>,
    links: BTreeSet<(Column, Column)>,
}

fn link_key(a: Column, b: Column) -> (Column, Column) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

const ORTHO: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

impl NavCells {
    /// Every walk-graph node, linked along orthogonal graph edges.
    pub fn from_graph(graph: &WalkGraph) -> Self {
        let mut cells = BTreeMap::new();
        for id in 0..graph.len() as u32 {
            cells.insert(graph.index(id).column(), graph.height(id));
        }
        let mut links = BTreeSet::new();
        for (a, b) in graph.edges() {
            let (ca, cb) = (graph.index(a).column(), graph.index(b).column());
            if (ca.0 - cb.0).abs() + (ca.1 - cb.1).abs() == 1 {
                links.insert(link_key(ca, cb));
            }
        }
        NavCells {
            frame: *graph.frame(),
            cells,
            links,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: Column) -> bool {
        self.cells.contains_key(&c)
    }

    pub fn columns(&self) -> impl Iterator<Item = Column> + '_ {
        self.cells.keys().copied()
    }

    pub fn linked(&self, a: Column, b: Column) -> bool {
        self.links.contains(&link_key(a, b))
    }

    fn center_xy(&self, c: Column) -> DVec2 {
        self.frame.center(VoxelIndex::new(c.0, c.1, 0)).truncate()
    }

    fn remove(&mut self, c: Column) {
        self.cells.remove(&c);
        for (dx, dy) in ORTHO {
            self.links.remove(&link_key(c, (c.0 + dx, c.1 + dy)));
        }
    }

    /// Cells in the same linked component as `seed`.
    pub fn component_of(&self, seed: Column) -> BTreeSet<Column> {
        let mut seen = BTreeSet::new();
        if !self.contains(seed) {
            return seen;
        }
        seen.insert(seed);
        let mut queue = VecDeque::from([seed]);
        while let Some(c) = queue.pop_front() {
            for (dx, dy) in ORTHO {
                let n = (c.0 + dx, c.1 + dy);
                if self.linked(c, n) && self.contains(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Emits the polygon mesh. Corners shared along links are merged and
    /// placed at the mean height of the cells meeting there. Cells whose
    /// corners all sit at their own height merge greedily into rectangles
    /// listing every boundary corner; the rest become four-triangle fans
    /// around a center vertex at the cell height.
    pub fn to_navmesh(&self) -> Result<NavMesh> {
        let cols: Vec<Column> = self.cells.keys().copied().collect();
        let index: HashMap<Column, usize> = cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        // Corner slots: cell i, corner k in (0,0), (1,0), (1,1), (0,1).
        const CORNERS: [(i32, i32); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
        let mut uf = UnionFind::new(cols.len() * 4);
        let slot = |cell: usize, lattice: Column, c: Column| -> usize {
            let k = CORNERS.iter().position(|&(dx, dy)| (c.0 + dx, c.1 + dy) == lattice).expect("corner of cell");
            cell * 4 + k
        };
        for &(a, b) in &self.links {
            let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else { continue };
            // Shared side endpoints.
            let side: [Column; 2] = if a.0 != b.0 {
                let x = a.0.max(b.0);
                [(x, a.1), (x, a.1 + 1)]
            } else {
                let y = a.1.max(b.1);
                [(a.0, y), (a.0 + 1, y)]
            };
            for p in side {
                uf.union(slot(ia, p, a), slot(ib, p, b));
            }
        }
        let roots: Vec<usize> = (0..cols.len() * 4).map(|s| uf.find(s)).collect();
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (s, &root) in roots.iter().enumerate() {
            members.entry(root).or_default().push(s);
        }
        let mut class_z = HashMap::new();
        for (root, slots) in &members {
            let hs: Vec<f64> = slots.iter().map(|s| self.cells[&cols[s / 4]]).collect();
            let z = if hs.iter().all(|&h| h == hs[0]) {
                hs[0]
            } else {
                hs.iter().sum::<f64>() / hs.len() as f64
            };
            class_z.insert(*root, z);
        }

        let s = self.frame.resolution;
        let origin = self.frame.origin;
        let lattice_xy = |p: Column| DVec2::new(origin.x + p.0 as f64 * s, origin.y + p.1 as f64 * s);
        let mut vertices: Vec<DVec3> = Vec::new();
        let mut vertex_of: HashMap<usize, u32> = HashMap::new();
        let mut corner_vertex = |cell: usize, k: usize, vertices: &mut Vec<DVec3>| -> u32 {
            let root = roots[cell * 4 + k];
            *vertex_of.entry(root).or_insert_with(|| {
                let c = cols[cell];
                let (dx, dy) = CORNERS[k];
                vertices.push(lattice_xy((c.0 + dx, c.1 + dy)).extend(class_z[&root]));
                (vertices.len() - 1) as u32
            })
        };

        let flat: Vec<bool> = (0..cols.len())
            .map(|i| (0..4).all(|k| class_z[&roots[i * 4 + k]] == self.cells[&cols[i]]))
            .collect();
        let mut assigned = vec![false; cols.len()];
        let mut polygons: Vec<Vec<u32>> = Vec::new();
        // Row-major sweep (y, then x) so rectangles grow in +x then +y.
        let mut order: Vec<usize> = (0..cols.len()).collect();
        order.sort_by_key(|&i| (cols[i].1, cols[i].0));
        for &i in &order {
            if assigned[i] {
                continue;
            }
            let c = cols[i];
            let h = self.cells[&c];
            if !flat[i] {
                assigned[i] = true;
                let center = vertices.len() as u32;
                vertices.push(self.center_xy(c).extend(h));
                let ring: Vec<u32> = (0..4).map(|k| corner_vertex(i, k, &mut vertices)).collect();
                for k in 0..4 {
                    polygons.push(vec![center, ring[k], ring[(k + 1) % 4]]);
                }
                continue;
            }
            let joinable = |from: Column, to: Column, assigned: &[bool]| -> bool {
                index.get(&to).is_some_and(|&j| !assigned[j] && flat[j] && self.cells[&to] == h && self.linked(from, to))
            };
            let mut w = 1;
            while joinable((c.0 + w - 1, c.1), (c.0 + w, c.1), &assigned) {
                w += 1;
            }
            let mut rows = 1;
            'grow: loop {
                let y = c.1 + rows;
                for dx in 0..w {
                    let cell = (c.0 + dx, y);
                    if !joinable((c.0 + dx, y - 1), cell, &assigned) {
                        break 'grow;
                    }
                    if dx > 0 && !self.linked((c.0 + dx - 1, y), cell) {
                        break 'grow;
                    }
                }
                rows += 1;
            }
            for dy in 0..rows {
                for dx in 0..w {
                    assigned[index[&(c.0 + dx, c.1 + dy)]] = true;
                }
            }
            // Boundary corners counter-clockwise, each taken from a rectangle
            // cell owning that corner.
            let mut poly = Vec::with_capacity(2 * (w + rows) as usize);
            for dx in 0..w {
                poly.push(corner_vertex(index[&(c.0 + dx, c.1)], 0, &mut vertices));
            }
            for dy in 0..rows {
                poly.push(corner_vertex(index[&(c.0 + w - 1, c.1 + dy)], 1, &mut vertices));
            }
            for dx in (0..w).rev() {
                poly.push(corner_vertex(index[&(c.0 + dx, c.1 + rows - 1)], 2, &mut vertices));
            }
            for dy in (0..rows).rev() {
                poly.push(corner_vertex(index[&(c.0, c.1 + dy)], 3, &mut vertices));
            }
            polygons.push(poly);
        }
        NavMesh::new(vertices, polygons)
    }
}

#[derive(Debug, Clone)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels stay deterministic.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Reference navmesh reproducing the walk graph's connectivity.
pub fn emit_reference_navmesh(graph: &WalkGraph) -> Result<NavMesh> {
    NavCells::from_graph(graph).to_navmesh()
}

/// Columns whose navmesh seed-component membership each injection changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub per_injection: Vec<Vec<VoxelIndex>>,
}

impl GroundTruth {
    pub fn all(&self) -> BTreeSet<VoxelIndex> {
        self.per_injection.iter().flatten().copied().collect()
    }
}

/// Applies injections in order. Each injection's ground truth is the set
/// of terrain voxels whose membership in the seed's cell component changed.
pub fn inject_defects(
    cells: &NavCells,
    injections: &[DefectInjection],
    grid: &VoxelGrid,
    seed: Column,
) -> Result<(NavCells, GroundTruth)> {
    let s = cells.frame.resolution;
    let seed_foot = {
        let c = cells.center_xy(seed);
        Rect {
            min: c - DVec2::splat(s / 2.0),
            max: c + DVec2::splat(s / 2.0),
        }
    };
    let mut out = cells.clone();
    let mut truth = GroundTruth::default();
    for (k, inj) in injections.iter().enumerate() {
        if inj.region().is_some_and(|r| r.intersects(&seed_foot)) {
            return Err(Error::InjectionTouchesSeed(k));
        }
        let before = out.component_of(seed);
        match *inj {
            DefectInjection::RemovePolygons { region } => {
                let doomed: Vec<Column> = out.columns().filter(|&c| region.contains(out.center_xy(c))).collect();
                for c in doomed {
                    out.remove(c);
                }
            }
            DefectInjection::ShrinkMesh { margin, region } => {
                let doomed = shrink_band(&out, margin, region);
                if doomed.contains(&seed) {
                    return Err(Error::InjectionTouchesSeed(k));
                }
                for c in doomed {
                    out.remove(c);
                }
            }
            DefectInjection::PhantomPolygons { region } => {
                let added: Vec<Column> = grid
                    .terrain()
                    .iter()
                    .map(|v| v.index.column())
                    .filter(|&c| !out.contains(c) && region.contains(out.center_xy(c)))
                    .collect();
                for &c in &added {
                    let v = grid.terrain_at(c).expect("terrain column");
                    out.cells.insert(c, v.surface_height.unwrap_or(v.center.z));
                }
                for &c in &added {
                    for (dx, dy) in ORTHO {
                        let n = (c.0 + dx, c.1 + dy);
                        if out.contains(n) {
                            out.links.insert(link_key(c, n));
                        }
                    }
                }
            }
            DefectInjection::DisconnectIsland { region } => {
                let frame = out.frame;
                let inside = |c: Column| region.contains(frame.center(VoxelIndex::new(c.0, c.1, 0)).truncate());
                out.links.retain(|&(a, b)| inside(a) == inside(b));
            }
        }
        let after = out.component_of(seed);
        let changed: Vec<VoxelIndex> = before
            .symmetric_difference(&after)
            .filter_map(|&c| grid.terrain_at(c).map(|v| v.index))
            .collect();
        truth.per_injection.push(changed);
    }
    Ok((out, truth))
}

/// Cells whose center lies within `margin` of a boundary side: a side
/// without a linked neighbor cell.
fn shrink_band(cells: &NavCells, margin: f64, region: Option<Rect>) -> BTreeSet<Column> {
    let s = cells.frame.resolution;
    let mut sides: Vec<(DVec2, DVec2)> = Vec::new();
    for c in cells.columns() {
        let o = cells.center_xy(c);
        for (dx, dy) in ORTHO {
            let n = (c.0 + dx, c.1 + dy);
            if cells.contains(n) && cells.linked(c, n) {
                continue;
            }
            let normal = DVec2::new(dx as f64, dy as f64);
            let mid = o + normal * (s / 2.0);
            let along = normal.perp() * (s / 2.0);
            sides.push((mid - along, mid + along));
        }
    }
    let reach = (margin / s).ceil() as i32 + 1;
    let mut by_cell: HashMap<Column, Vec<usize>> = HashMap::new();
    for (i, (a, b)) in sides.iter().enumerate() {
        let mid = (*a + *b) * 0.5;
        let cell = (
            ((mid.x - cells.frame.origin.x) / s).floor() as i32,
            ((mid.y - cells.frame.origin.y) / s).floor() as i32,
        );
        by_cell.entry(cell).or_default().push(i);
    }
    cells
        .columns()
        .filter(|&c| {
            let p = cells.center_xy(c);
            if region.is_some_and(|r| !r.contains(p)) {
                return false;
            }
            (-reach..=reach).any(|dx| {
                (-reach..=reach).any(|dy| {
                    by_cell.get(&(c.0 + dx, c.1 + dy)).is_some_and(|list| {
                        list.iter().any(|&i| segment_distance(p, sides[i].0, sides[i].1) <= margin + 1e-12)
                    })
                })
            })
        })
        .collect()
}

fn segment_distance(p: DVec2, a: DVec2, b: DVec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.length_squared()).clamp(0.0, 1.0);
    (a + ab * t).distance(p)
}

/// Picks `count` square injections of `size` cells: removals and
/// disconnections over the seed component, phantoms over polygon-free
/// terrain bordering it. Squares keep a three-cell gap from each other and
/// from the seed. Fewer may be returned when space runs out.
pub fn plan_injections(
    cells: &NavCells,
    grid: &VoxelGrid,
    seed: Column,
    count: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<DefectInjection> {
    let s = cells.frame.resolution;
    let comp = cells.component_of(seed);
    let comp_cols: Vec<Column> = comp.iter().copied().collect();
    let free_cols: Vec<Column> = grid
        .terrain()
        .iter()
        .map(|v| v.index.column())
        .filter(|c| !cells.contains(*c))
        .collect();
    let n = size as i32;
    let gap = 3;
    let mut taken: Vec<(Column, Column)> = vec![((seed.0 - gap, seed.1 - gap), (seed.0 + gap, seed.1 + gap))];
    let clear = |lo: Column, hi: Column, taken: &[(Column, Column)]| {
        taken.iter().all(|&(a, b)| hi.0 + gap < a.0 || b.0 + gap < lo.0 || hi.1 + gap < a.1 || b.1 + gap < lo.1)
    };
    let to_rect = |lo: Column, hi: Column| {
        let a = cells.center_xy(lo) - DVec2::splat(s / 4.0);
        let b = cells.center_xy(hi) + DVec2::splat(s / 4.0);
        Rect { min: a, max: b }
    };
    let mut out = Vec::new();
    let mut attempts = 0;
    let mut phantom_failures = 0;
    while out.len() < count && attempts < 40_000 {
        attempts += 1;
        // Every third slot is a phantom patch unless none can be found.
        let phantom = out.len() % 3 == 2 && !free_cols.is_empty() && phantom_failures < 5_000;
        let pool = if phantom { &free_cols } else { &comp_cols };
        if pool.is_empty() {
            break;
        }
        let lo = pool[rng.gen_range(0..pool.len())];
        let hi = (lo.0 + n - 1, lo.1 + n - 1);
        let square = (lo.0..=hi.0).flat_map(|x| (lo.1..=hi.1).map(move |y| (x, y)));
        let ok = clear(lo, hi, &taken)
            && if phantom {
                let mut all_free = true;
                let mut borders = false;
                for c in square {
                    all_free &= grid.terrain_at(c).is_some() && !cells.contains(c);
                    borders |= ORTHO.iter().any(|(dx, dy)| comp.contains(&(c.0 + dx, c.1 + dy)));
                }
                all_free && borders
            } else {
                // Whole square plus a one-cell ring inside the seed component.
                (lo.0 - 1..=hi.0 + 1).all(|x| (lo.1 - 1..=hi.1 + 1).all(|y| comp.contains(&(x, y))))
            };
        if !ok {
            phantom_failures += usize::from(phantom);
            continue;
        }
        taken.push((lo, hi));
        let region = to_rect(lo, hi);
        out.push(if phantom {
            DefectInjection::PhantomPolygons { region }
        } else if out.len() % 3 == 0 {
            DefectInjection::RemovePolygons { region }
        } else {
            DefectInjection::DisconnectIsland { region }
        });
    }
    out
}
