//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use navvox::geom::{
    build_grid, triangle_box_overlap, voxelize_collision, voxelize_terrain, CollisionMesh, DVec3, HeightField, Region,
    VoxelIndex,
};
use navvox::rl::Transition;
use navvox::validate::{Inconsistency, InconsistencyKind};
use navvox::walk::{build_walk_graph, classify_walkable, default_neighbor_radius, AgentParams, WalkGraph};
use rand::Rng;

/// Cells whose centers lie in `[min, max)` on the frame snapped to the region minimum.
pub fn region_cells(region: &Region, s: f64) -> (DVec3, Vec<VoxelIndex>) {
    let origin = DVec3::new(
        (region.min.x / s).floor() * s,
        (region.min.y / s).floor() * s,
        (region.min.z / s).floor() * s,
    );
    let axis = |o: f64, lo: f64, hi: f64| -> Vec<i32> {
        (-2..((hi - o) / s) as i32 + 2)
            .filter(|&i| {
                let c = o + (i as f64 + 0.5) * s;
                c >= lo && c < hi
            })
            .collect()
    };
    let xs = axis(origin.x, region.min.x, region.max.x);
    let ys = axis(origin.y, region.min.y, region.max.y);
    let zs = axis(origin.z, region.min.z, region.max.z);
    let mut cells = Vec::new();
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                cells.push(VoxelIndex::new(x, y, z));
            }
        }
    }
    (origin, cells)
}

/// All-pairs voxelization: every in-region cell against every triangle.
pub fn brute_voxelize(meshes: &[CollisionMesh], region: &Region, s: f64) -> BTreeSet<VoxelIndex> {
    let (origin, cells) = region_cells(region, s);
    let half = DVec3::splat(s * 0.5);
    cells
        .into_iter()
        .filter(|c| {
            let center = origin + (DVec3::new(c.x as f64, c.y as f64, c.z as f64) + 0.5) * s;
            meshes
                .iter()
                .filter(|m| !m.nav_excluded)
                .any(|m| (0..m.triangles.len()).any(|t| triangle_box_overlap(center, half, &m.triangle(t))))
        })
        .collect()
}

/// Closed-box overlap by clipping the triangle against the six box planes;
/// independent of the separating-axis formulation.
pub fn clip_overlap(center: DVec3, half: DVec3, tri: &[DVec3; 3]) -> bool {
    let mut poly: Vec<DVec3> = tri.iter().map(|p| *p - center).collect();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            // Keep points with sign * p[axis] <= half[axis].
            let inside = |p: &DVec3| sign * p[axis] <= half[axis];
            let mut out = Vec::new();
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                if inside(&a) {
                    out.push(a);
                }
                if inside(&a) != inside(&b) {
                    let t = (half[axis] - sign * a[axis]) / (sign * (b[axis] - a[axis]));
                    out.push(a + (b - a) * t);
                }
            }
            if out.is_empty() {
                return false;
            }
            poly = out;
        }
    }
    true
}

pub fn random_triangle(rng: &mut impl Rng, lo: DVec3, hi: DVec3) -> [DVec3; 3] {
    let mut p = || {
        DVec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        )
    };
    [p(), p(), p()]
}

/// Random triangle soup inside a box; small triangles mixed with large ones.
pub fn random_mesh(rng: &mut impl Rng, triangles: usize, lo: DVec3, hi: DVec3) -> CollisionMesh {
    let mut vertices = Vec::with_capacity(triangles * 3);
    let mut tris = Vec::with_capacity(triangles);
    while tris.len() < triangles {
        let t = if rng.gen_bool(0.5) {
            random_triangle(rng, lo, hi)
        } else {
            let c = random_triangle(rng, lo, hi)[0];
            let r = DVec3::splat(rng.gen_range(0.1..1.5));
            random_triangle(rng, (c - r).max(lo), (c + r).min(hi))
        };
        if (t[1] - t[0]).cross(t[2] - t[0]).length() < 1e-6 {
            continue;
        }
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&t);
        tris.push([base, base + 1, base + 2]);
    }
    CollisionMesh::new(vertices, tris, false).expect("valid mesh")
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Groups of members, each sorted, ordered by smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        by_root.into_values().collect()
    }
}

/// Plateau terrain: blocks of random height levels, so step and slope tests
/// cut the walk graph into several components.
pub fn plateau_heightfield(rng: &mut impl Rng, nx: usize, ny: usize, s: f64, block: usize, levels: &[f64]) -> HeightField {
    let bx = nx.div_ceil(block) + 1;
    let by = ny.div_ceil(block) + 1;
    let table: Vec<f64> = (0..bx * by).map(|_| levels[rng.gen_range(0..levels.len())]).collect();
    let step = s * 0.5;
    let w = 2 * nx + 1;
    let d = 2 * ny + 1;
    let mut heights = Vec::with_capacity(w * d);
    for j in 0..d {
        for i in 0..w {
            let cx = (i / 2).min(nx - 1) / block;
            let cy = (j / 2).min(ny - 1) / block;
            heights.push(table[cy * bx + cx]);
        }
    }
    HeightField::new(DVec3::ZERO, step, w, d, heights).expect("heightfield")
}

/// Walk graph of a random plateau world of `nx × ny` columns with a few
/// box obstacles.
pub fn random_world(rng: &mut impl Rng, nx: usize, ny: usize, obstacles: usize) -> WalkGraph {
    let s = 0.5;
    let block = rng.gen_range(2..6);
    let hf = plateau_heightfield(rng, nx, ny, s, block, &[0.0, 0.0, 0.3, 0.6, 1.2]);
    let ext = DVec3::new(nx as f64 * s, ny as f64 * s, 0.0);
    let meshes: Vec<CollisionMesh> = (0..obstacles)
        .map(|_| {
            let x = rng.gen_range(0.0..ext.x - 1.0);
            let y = rng.gen_range(0.0..ext.y - 1.0);
            let w = rng.gen_range(0.3..2.0);
            let h = rng.gen_range(0.3..2.0);
            CollisionMesh::cuboid(DVec3::new(x, y, -0.5), DVec3::new(x + w, y + h, 3.0))
        })
        .collect();
    let region = Region::from_corners(DVec3::new(0.0, 0.0, -1.0), DVec3::new(ext.x, ext.y, 4.0)).unwrap();
    let agent = AgentParams::default();
    let terrain = voxelize_terrain(&hf, &region, s).unwrap();
    let occupied = voxelize_collision(&meshes, &region, s).unwrap();
    let grid = build_grid(terrain, occupied).unwrap();
    let walkable = classify_walkable(&grid, &hf, &agent);
    build_walk_graph(&walkable, &grid, &agent, default_neighbor_radius(s)).unwrap()
}

/// Injection-level scoring of a report against the scene ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recall {
    pub found: usize,
    pub injected: usize,
    /// Clusters with no member within the tolerance band of any truth voxel.
    pub false_clusters: usize,
}

/// An injection counts as found when some clustered detection lies within
/// `band` (3D, voxel centers) of one of its truth voxels.
pub fn score_report(scene: &navvox::pipeline::Scene, report: &navvox::validate::DefectReport, band: f64) -> Recall {
    let frame = *scene.rec.grid.frame();
    let truth: Vec<Vec<DVec3>> = scene
        .truth
        .per_injection
        .iter()
        .map(|set| set.iter().map(|&v| frame.center(v)).collect())
        .collect();
    let near = |p: DVec3, set: &[DVec3]| set.iter().any(|q| q.distance(p) <= band + 1e-9);
    let clustered: Vec<DVec3> = report
        .defects
        .iter()
        .filter(|d| d.cluster_id.is_some())
        .map(|d| frame.center(d.voxel))
        .collect();
    let found = truth.iter().filter(|set| clustered.iter().any(|&p| near(p, set))).count();
    let false_clusters = report
        .clusters
        .iter()
        .filter(|c| {
            report
                .defects
                .iter()
                .filter(|d| d.cluster_id == Some(c.id))
                .all(|d| !truth.iter().any(|set| near(frame.center(d.voxel), set)))
        })
        .count();
    Recall {
        found,
        injected: truth.len(),
        false_clusters,
    }
}

/// Random defect-free world description.
pub fn random_clean_spec(rng: &mut impl Rng, seed: u64) -> navvox::synth::WorldSpec {
    use navvox::geom::DVec2;
    use navvox::synth::{ObstacleSpec, TerrainProfile, WorldSpec};
    let terrain = match rng.gen_range(0..4) {
        0 => TerrainProfile::Flat,
        1 => TerrainProfile::Ramp { slope_deg: rng.gen_range(0.0..30.0) },
        2 => TerrainProfile::Noise {
            amplitude: rng.gen_range(0.1..1.0),
            frequency: rng.gen_range(0.03..0.12),
        },
        _ => TerrainProfile::Staircase {
            riser: rng.gen_range(0.05..0.35),
            tread: rng.gen_range(0.5..2.0),
        },
    };
    WorldSpec {
        seed,
        extent: DVec2::new(rng.gen_range(10.0..30.0), rng.gen_range(10.0..30.0)),
        terrain,
        obstacles: ObstacleSpec {
            count: rng.gen_range(0..6),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Naive forward pass over the flattened parameter layout (per layer:
/// row-major `[out][in]` weights, then biases).
pub fn naive_forward(sizes: &[usize], p: &[f64], s: &[f64]) -> Vec<f64> {
    let mut x = s.to_vec();
    let mut k = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &p[k..k + n_in * n_out];
        let b = &p[k + n_in * n_out..k + n_in * n_out + n_out];
        k += n_in * n_out + n_out;
        let mut y = vec![0.0; n_out];
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += w[o * n_in + i] * x[i];
            }
            y[o] = if l + 2 < sizes.len() { acc.max(0.0) } else { acc };
        }
        x = y;
    }
    x
}

pub fn random_state(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_transition(rng: &mut impl Rng, d: usize, actions: usize) -> Transition {
    Transition {
        s: random_state(rng, d),
        a: rng.gen_range(0..actions),
        r: rng.gen_range(-1.0..1.0),
        s_next: random_state(rng, d),
        terminal: rng.gen_bool(0.2),
    }
}

/// Distinct random lattice voxels flagged as missing navmesh coverage.
pub fn lattice_items(rng: &mut impl Rng, n: usize, side: i32) -> Vec<Inconsistency> {
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    while items.len() < n {
        let v = VoxelIndex::new(rng.gen_range(0..side), rng.gen_range(0..side), rng.gen_range(0..2));
        if !seen.insert(v) {
            continue;
        }
        items.push(Inconsistency {
            voxel: v,
            position: DVec3::new(v.x as f64 + 0.5, v.y as f64 + 0.5, v.z as f64 + 0.5) * 0.5,
            kind: InconsistencyKind::MissingNavmesh,
            boundary_distance: 1.0,
        });
    }
    items
}

/// Smallest |pre-activation| over the hidden units for input `s`; central
/// differences are only valid when no ReLU sits within the step of its kink.
pub fn kink_margin(sizes: &[usize], p: &[f64], s: &[f64]) -> f64 {
    let mut x = s.to_vec();
    let mut k = 0;
    let mut margin = f64::INFINITY;
    for l in 0..sizes.len() - 2 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let (w, b) = (&p[k..k + n_in * n_out], &p[k + n_in * n_out..k + n_in * n_out + n_out]);
        k += n_in * n_out + n_out;
        x = (0..n_out)
            .map(|o| {
                let z = b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>();
                margin = margin.min(z.abs());
                z.max(0.0)
            })
            .collect();
    }
    margin
}

/// Relative error (vector 2-norm) between the analytic squared-TD gradient
/// and central differences of a naive loss, for a random net and batch.
/// Targets are held fixed at the unperturbed parameters, and batch states
/// are redrawn when a hidden unit lies within 1e-4 of its ReLU kink.
pub fn td_gradient_error(rng: &mut impl Rng, gamma: f64) -> f64 {
    use navvox::explore::{ACTION_COUNT, STATE_DIM};
    use navvox::rl::{td_loss_gradient, td_target, QNetwork};
    let sizes = [STATE_DIM, rng.gen_range(4..24), rng.gen_range(4..24), ACTION_COUNT];
    let net = QNetwork::random(&sizes, rng);
    let target = QNetwork::random(&sizes, rng);
    let n = rng.gen_range(1..16);
    let p0 = net.params();
    let batch: Vec<Transition> = (0..n)
        .map(|_| loop {
            let t = random_transition(rng, STATE_DIM, ACTION_COUNT);
            if kink_margin(&sizes, &p0, &t.s) > 1e-4 {
                break t;
            }
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let (loss, grad, deltas) = td_loss_gradient(&net, &target, &refs, &weights, gamma).unwrap();

    let ys: Vec<f64> = batch.iter().map(|t| td_target(&net, &target, t, gamma).unwrap()).collect();
    let scalar_loss = |p: &[f64]| {
        let mut l = 0.0;
        for ((t, y), w) in batch.iter().zip(&ys).zip(&weights) {
            let q = naive_forward(&sizes, p, &t.s)[t.a];
            l += w * 0.5 * (q - y) * (q - y);
        }
        l / n as f64
    };
    assert!((scalar_loss(&p0) - loss).abs() < 1e-12);
    for ((t, y), d) in batch.iter().zip(&ys).zip(&deltas) {
        let q = naive_forward(&sizes, &p0, &t.s)[t.a];
        assert!(((y - q).abs() - d).abs() < 1e-12);
    }

    let h = 1e-6;
    let analytic = grad.params();
    let mut numeric = vec![0.0; p0.len()];
    let mut p = p0.clone();
    for i in 0..p0.len() {
        p[i] = p0[i] + h;
        let up = scalar_loss(&p);
        p[i] = p0[i] - h;
        let down = scalar_loss(&p);
        p[i] = p0[i];
        numeric[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let norm_n: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm_a.max(norm_n).max(1e-12)
}
