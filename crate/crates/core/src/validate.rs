//! Consistency check between voxel reachability and navmesh reachability,
//! followed by tolerance filtering and defect clustering.

use std::collections::BTreeSet;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{run_strategy, traversal_order, ExploreEnv, RewardParams, StrategyKind, Trajectory};
use crate::geom::{KdTree, VoxelGrid, VoxelIndex};
use crate::importance::ImportanceField;
use crate::navmesh::{NavMesh, NavQueryConfig};
use crate::pipeline::Reconstruction;
use crate::rl::QNetwork;
use crate::walk::{ReachableSet, WalkGraph};

pub const REPORT_SCHEMA: &str = "navvox-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconsistencyKind {
    /// Reachable through voxels, not on the navmesh's seed component.
    MissingNavmesh,
    /// On the navmesh's seed component, not reachable through voxels.
    PhantomNavmesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub voxel: VoxelIndex,
    pub position: DVec3,
    pub kind: InconsistencyKind,
    /// Horizontal distance to the seed navmesh component (missing) or to the
    /// nearest reachable voxel footprint (phantom), m.
    pub boundary_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub epsilon: f64,
    pub tau: usize,
    /// Chebyshev radius, in cells, of terrain columns probed around each waypoint.
    pub probe_radius: i32,
    pub nav: NavQueryConfig,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig::for_resolution(crate::geom::DEFAULT_RESOLUTION, 0.4)
    }
}

impl ValidationConfig {
    pub fn for_resolution(s: f64, h_step: f64) -> Self {
        ValidationConfig {
            epsilon: s,
            tau: 3,
            probe_radius: 3,
            nav: NavQueryConfig::for_agent(s, h_step),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nav.validate()?;
        if !(self.epsilon >= 0.0) || self.tau == 0 || self.probe_radius < 0 {
            return Err(Error::Invalid(format!("invalid validation config {self:?}")));
        }
        Ok(())
    }
}

/// Immutable comparison context: voxel model, reachable set and navmesh.
#[derive(Debug)]
pub struct Validator<'a> {
    grid: &'a VoxelGrid,
    graph: &'a WalkGraph,
    reach: &'a ReachableSet,
    mesh: &'a NavMesh,
    cfg: ValidationConfig,
    seed_component: u32,
}

/// Stats of one sampling pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub samples: usize,
    pub probes: usize,
}

impl<'a> Validator<'a> {
    /// Fails when the seed's surface point does not project onto the mesh.
    pub fn new(
        grid: &'a VoxelGrid,
        graph: &'a WalkGraph,
        reach: &'a ReachableSet,
        mesh: &'a NavMesh,
        cfg: ValidationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let seed = surface_point(graph.center(reach.seed()), graph.height(reach.seed()));
        let poly = mesh.project_point(seed, &cfg.nav).ok_or(Error::SeedOffMesh {
            x: seed.x,
            y: seed.y,
            z: seed.z,
        })?;
        Ok(Validator {
            grid,
            graph,
            reach,
            mesh,
            cfg,
            seed_component: mesh.component(poly),
        })
    }

    pub fn config(&self) -> &ValidationConfig {
        &self.cfg
    }

    fn r_nav(&self, q: DVec3) -> bool {
        self.mesh
            .project_point(q, &self.cfg.nav)
            .is_some_and(|p| self.mesh.component(p) == self.seed_component)
    }

    fn r_vox(&self, column: (i32, i32)) -> bool {
        self.graph.id_at_column(column).is_some_and(|id| self.reach.contains(id))
    }

    /// Compares both reachability notions at the terrain surface of a column.
    pub fn check_column(&self, column: (i32, i32)) -> Option<Inconsistency> {
        let v = self.grid.terrain_at(column)?;
        let q = surface_point(v.center, v.surface_height.unwrap_or(v.center.z));
        let vox = self.r_vox(column);
        if vox == self.r_nav(q) {
            return None;
        }
        let (kind, boundary_distance) = if vox {
            let comp = self.seed_component;
            let d = self.mesh.distance_xy_to(q.truncate(), |p| self.mesh.component(p) == comp);
            (InconsistencyKind::MissingNavmesh, d)
        } else {
            (InconsistencyKind::PhantomNavmesh, self.distance_to_reachable(column, v.center))
        };
        Some(Inconsistency {
            voxel: v.index,
            position: v.center,
            kind,
            boundary_distance,
        })
    }

    /// Check for a walk-graph node.
    pub fn check_waypoint(&self, id: u32) -> Option<Inconsistency> {
        self.check_column(self.graph.index(id).column())
    }

    /// Horizontal distance from `p` to the nearest reachable voxel footprint,
    /// found by growing square rings of columns.
    fn distance_to_reachable(&self, column: (i32, i32), p: DVec3) -> f64 {
        let s = self.graph.frame().resolution;
        let half = 0.5 * s;
        let mut best = f64::INFINITY;
        let limit = 1 << 16;
        for k in 0..limit {
            for (dx, dy) in ring(k) {
                let c = (column.0 + dx, column.1 + dy);
                if let Some(id) = self.graph.id_at_column(c).filter(|&id| self.reach.contains(id)) {
                    let o = self.graph.center(id);
                    let gx = ((o.x - p.x).abs() - half).max(0.0);
                    let gy = ((o.y - p.y).abs() - half).max(0.0);
                    best = best.min(gx.hypot(gy));
                }
            }
            // Columns in later rings lie at least (k + 1/2) cells away.
            if best <= (k as f64 + 0.5) * s {
                break;
            }
        }
        best
    }

    /// Checks deduplicated waypoints plus unreachable terrain columns within
    /// the probe radius of any waypoint. Results are ordered by voxel index.
    pub fn check_samples(&self, waypoints: &[u32]) -> (Vec<Inconsistency>, SampleStats) {
        let ids: BTreeSet<u32> = waypoints.iter().copied().collect();
        let mut columns: BTreeSet<(i32, i32)> = BTreeSet::new();
        let mut probes: BTreeSet<(i32, i32)> = BTreeSet::new();
        let k = self.cfg.probe_radius;
        for &id in &ids {
            let c = self.graph.index(id).column();
            columns.insert(c);
            for dx in -k..=k {
                for dy in -k..=k {
                    let p = (c.0 + dx, c.1 + dy);
                    if !self.r_vox(p) && self.grid.terrain_at(p).is_some() {
                        probes.insert(p);
                    }
                }
            }
        }
        let stats = SampleStats {
            samples: columns.len(),
            probes: probes.len(),
        };
        let mut found: Vec<Inconsistency> = columns
            .iter()
            .chain(probes.iter())
            .filter_map(|&c| self.check_column(c))
            .collect();
        found.sort_by_key(|i| i.voxel);
        (found, stats)
    }
}

fn surface_point(center: DVec3, h: f64) -> DVec3 {
    DVec3::new(center.x, center.y, h)
}

/// Column offsets at Chebyshev distance exactly `k`.
fn ring(k: i32) -> Vec<(i32, i32)> {
    if k == 0 {
        return vec![(0, 0)];
    }
    let mut out = Vec::with_capacity(8 * k as usize);
    for d in -k..=k {
        out.push((d, -k));
        out.push((d, k));
    }
    for d in -k + 1..k {
        out.push((-k, d));
        out.push((k, d));
    }
    out
}

/// Drops items whose boundary distance is within `epsilon`.
pub fn tolerance_filter(raw: &[Inconsistency], epsilon: f64) -> Vec<Inconsistency> {
    raw.iter()
        .filter(|i| i.boundary_distance > epsilon + 1e-12)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectCluster {
    pub id: usize,
    /// Indices into the filtered list, ascending.
    pub members: Vec<usize>,
    pub centroid: DVec3,
    pub min: DVec3,
    pub max: DVec3,
    pub size: usize,
}

/// Connected components of items whose voxel centers lie within `radius`,
/// pruned below `tau` members, sorted by size descending then centroid.
pub fn cluster_defects(items: &[Inconsistency], radius: f64, tau: usize) -> Vec<DefectCluster> {
    let n = items.len();
    let tree = KdTree::build(items.iter().enumerate().map(|(i, it)| (it.position, i)).collect());
    let mut label = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let tol = 1e-9 * radius.max(1.0);
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let g = groups.len();
        label[start] = g;
        let mut members = vec![start];
        let mut k = 0;
        while k < members.len() {
            let cur = members[k];
            k += 1;
            for j in tree.within(items[cur].position, radius + tol) {
                if label[j] == usize::MAX {
                    label[j] = g;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    let mut clusters: Vec<DefectCluster> = groups
        .into_iter()
        .filter(|m| m.len() >= tau)
        .map(|members| {
            let pts: Vec<DVec3> = members.iter().map(|&i| items[i].position).collect();
            let centroid = pts.iter().sum::<DVec3>() / pts.len() as f64;
            let min = pts.iter().fold(DVec3::splat(f64::INFINITY), |a, p| a.min(*p));
            let max = pts.iter().fold(DVec3::splat(f64::NEG_INFINITY), |a, p| a.max(*p));
            DefectCluster {
                id: 0,
                size: members.len(),
                members,
                centroid,
                min,
                max,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.z.total_cmp(&b.centroid.z))
    });
    for (id, c) in clusters.iter_mut().enumerate() {
        c.id = id;
    }
    clusters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub position: DVec3,
    pub voxel: VoxelIndex,
    pub kind: InconsistencyKind,
    pub cluster_id: Option<usize>,
    pub boundary_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub centroid: DVec3,
    pub min: DVec3,
    pub max: DVec3,
    pub missing: usize,
    pub phantom: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub raw: usize,
    pub filtered: usize,
    pub clustered: usize,
    pub missing: usize,
    pub phantom: usize,
    pub clusters: usize,
    pub coverage: f64,
    pub samples: usize,
    pub probes: usize,
    pub reachable_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub schema: String,
    pub config: serde_json::Value,
    pub raw: Vec<Inconsistency>,
    pub defects: Vec<DefectRecord>,
    pub clusters: Vec<ClusterSummary>,
    pub metrics: ReportMetrics,
}

impl DefectReport {
    /// Assembles the report from raw detections.
    pub fn build(
        raw: Vec<Inconsistency>,
        cfg: &ValidationConfig,
        neighbor_radius: f64,
        stats: SampleStats,
        coverage: f64,
        reachable_voxels: usize,
        config: serde_json::Value,
    ) -> Self {
        let filtered = tolerance_filter(&raw, cfg.epsilon);
        let clusters = cluster_defects(&filtered, neighbor_radius, cfg.tau);
        let mut cluster_of = vec![None; filtered.len()];
        for c in &clusters {
            for &m in &c.members {
                cluster_of[m] = Some(c.id);
            }
        }
        let count = |kind| filtered.iter().filter(|i| i.kind == kind).count();
        let metrics = ReportMetrics {
            raw: raw.len(),
            filtered: filtered.len(),
            clustered: clusters.iter().map(|c| c.size).sum(),
            missing: count(InconsistencyKind::MissingNavmesh),
            phantom: count(InconsistencyKind::PhantomNavmesh),
            clusters: clusters.len(),
            coverage,
            samples: stats.samples,
            probes: stats.probes,
            reachable_voxels,
        };
        let summaries = clusters
            .iter()
            .map(|c| {
                let missing = c
                    .members
                    .iter()
                    .filter(|&&m| filtered[m].kind == InconsistencyKind::MissingNavmesh)
                    .count();
                ClusterSummary {
                    id: c.id,
                    size: c.size,
                    centroid: c.centroid,
                    min: c.min,
                    max: c.max,
                    missing,
                    phantom: c.size - missing,
                }
            })
            .collect();
        let defects = filtered
            .into_iter()
            .zip(cluster_of)
            .map(|(i, cluster_id)| DefectRecord {
                position: i.position,
                voxel: i.voxel,
                kind: i.kind,
                cluster_id,
                boundary_distance: i.boundary_distance,
            })
            .collect();
        DefectReport {
            schema: REPORT_SCHEMA.to_string(),
            config,
            raw,
            defects,
            clusters: summaries,
            metrics,
        }
    }

    /// Filtered detections that survived pruning, i.e. the reported defect set.
    pub fn clustered_voxels(&self) -> Vec<VoxelIndex> {
        self.defects.iter().filter(|d| d.cluster_id.is_some()).map(|d| d.voxel).collect()
    }

    pub fn has_defects(&self) -> bool {
        !self.clusters.is_empty()
    }

    /// CI exit status: 0 clean, 1 defects found.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.has_defects())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exploration budget in steps, or exhaustive sampling of the reachable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Steps(usize),
    /// The strategy runs for |V_r| steps, then every reachable voxel it
    /// missed is appended in breadth-first order.
    Exhaustive,
}

/// Inputs shared by every validation run on one scene.
#[derive(Debug, Clone, Copy)]
pub struct ValidationInputs<'a> {
    pub rec: &'a Reconstruction,
    /// Importance restricted to the reachable set.
    pub field: &'a ImportanceField,
    pub mesh: &'a NavMesh,
    pub cfg: ValidationConfig,
    pub rewards: RewardParams,
}

#[derive(Debug, Clone)]
pub struct ValidationRun {
    pub report: DefectReport,
    pub trajectory: Trajectory,
    /// Sampled waypoints, deduplicated and sorted.
    pub waypoints: Vec<u32>,
    pub elapsed_ms: f64,
}

/// Explores with `strategy`, checks every distinct waypoint (plus probes),
/// then filters and clusters the inconsistencies into a report.
pub fn run_validation(
    inputs: &ValidationInputs<'_>,
    strategy: StrategyKind,
    budget: Budget,
    seed: u64,
    policy: Option<&QNetwork>,
    config: serde_json::Value,
) -> Result<ValidationRun> {
    let start = std::time::Instant::now();
    let rec = inputs.rec;
    let validator = Validator::new(&rec.grid, &rec.graph, &rec.reach, inputs.mesh, inputs.cfg)?;
    let env = ExploreEnv::for_reach(&rec.graph, inputs.field, &rec.reach, inputs.rewards);
    let steps = match budget {
        Budget::Steps(n) => n,
        Budget::Exhaustive => rec.reach.len(),
    };
    let trajectory = run_strategy(&env, strategy, steps, seed, policy)?;
    let mut waypoints = trajectory.distinct();
    if budget == Budget::Exhaustive {
        let mut seen = vec![false; rec.graph.len()];
        for &w in &waypoints {
            seen[w as usize] = true;
        }
        waypoints.extend(traversal_order(&rec.graph, rec.reach.seed(), false).into_iter().filter(|&id| !seen[id as usize]));
        waypoints.sort_unstable();
    }
    let mut mask = vec![false; rec.graph.len()];
    for &w in &waypoints {
        mask[w as usize] = true;
    }
    let coverage = inputs.field.coverage(&mask);
    let (raw, stats) = validator.check_samples(&waypoints);
    let report = DefectReport::build(raw, &inputs.cfg, rec.graph.radius(), stats, coverage, rec.reach.len(), config);
    Ok(ValidationRun {
        report,
        trajectory,
        waypoints,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(x: f64, y: f64, d: f64) -> Inconsistency {
        Inconsistency {
            voxel: VoxelIndex::new((x * 2.0) as i32, (y * 2.0) as i32, 0),
            position: DVec3::new(x, y, 0.25),
            kind: InconsistencyKind::MissingNavmesh,
            boundary_distance: d,
        }
    }

    #[test]
    fn filter_examples() {
        let raw: Vec<_> = (0..4).map(|i| item(i as f64, 0.0, 0.1)).collect();
        assert_eq!(tolerance_filter(&raw, 0.0), raw);
        assert!(tolerance_filter(&raw, 0.2).is_empty());
    }

    #[test]
    fn cluster_examples() {
        assert!(cluster_defects(&[], 0.75, 1).is_empty());
        let mut items = Vec::new();
        for i in 0..10 {
            items.push(item(0.5 * i as f64, 0.0, 1.0));
        }
        items.push(item(20.0, 20.0, 1.0));
        items.push(item(20.5, 20.0, 1.0));
        let c = cluster_defects(&items, 0.75, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size, 10);
        let all = cluster_defects(&items, 0.75, 1);
        assert_eq!(all.iter().map(|c| c.size).collect::<Vec<_>>(), vec![10, 2]);
        assert_eq!(all[1].id, 1);
    }

    #[test]
    fn rings_cover_square() {
        let mut all: Vec<_> = (0..4).flat_map(ring).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 49);
        assert_eq!(ring(2).len(), 16);
    }

    #[test]
    fn report_exit_codes() {
        let cfg = ValidationConfig::default();
        let clean = DefectReport::build(vec![], &cfg, 0.75, SampleStats::default(), 1.0, 4, serde_json::json!({}));
        assert_eq!(clean.exit_code(), 0);
        let raw: Vec<_> = (0..3).map(|i| item(0.5 * i as f64, 0.0, 2.0)).collect();
        let dirty = DefectReport::build(raw, &cfg, 0.75, SampleStats::default(), 1.0, 4, serde_json::json!({}));
        assert_eq!(dirty.exit_code(), 1);
        assert_eq!(dirty.metrics.clusters, 1);
        let back: DefectReport = serde_json::from_str(&dirty.to_json()).unwrap();
        assert_eq!(back, dirty);
    }
}
