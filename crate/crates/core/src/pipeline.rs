//! Reconstruction driver and the shared pipeline configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::explore::RewardParams;
use crate::geom::{build_grid, voxelize_collision, voxelize_terrain, CollisionMesh, HeightField, Region, VoxelGrid, VoxelIndex};
use crate::importance::{compute_importance, GameplayMarker, ImportanceField, KindWeights};
use crate::navmesh::NavQueryConfig;
use crate::rl::TrainConfig;
use crate::validate::ValidationConfig;
use crate::walk::{build_walk_graph, classify_walkable, default_neighbor_radius, flood_fill, AgentParams, ReachableSet, WalkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    pub resolution: f64,
    pub agent: AgentParams,
    /// Walk-graph neighbor radius; defaults to 1.5 cells.
    pub neighbor_radius: Option<f64>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            resolution: crate::geom::DEFAULT_RESOLUTION,
            agent: AgentParams::default(),
            neighbor_radius: None,
        }
    }
}

impl ReconstructConfig {
    pub fn radius(&self) -> f64 {
        self.neighbor_radius.unwrap_or_else(|| default_neighbor_radius(self.resolution))
    }
}

/// Voxel model of walkable space reachable from the seed.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: VoxelGrid,
    pub walkable: Vec<VoxelIndex>,
    pub graph: WalkGraph,
    pub reach: ReachableSet,
    /// Wall-clock reconstruction time, ms.
    pub elapsed_ms: f64,
}

/// Voxelizes terrain and obstacles, classifies walkability, builds the walk
/// graph and flood-fills from the seed.
pub fn reconstruct(
    hf: &HeightField,
    meshes: &[CollisionMesh],
    region: &Region,
    seed: DVec3,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    let start = Instant::now();
    cfg.agent.validate()?;
    let terrain = voxelize_terrain(hf, region, cfg.resolution)?;
    let occupied = voxelize_collision(meshes, region, cfg.resolution)?;
    let grid = build_grid(terrain, occupied)?;
    let walkable = classify_walkable(&grid, hf, &cfg.agent);
    let graph = build_walk_graph(&walkable, &grid, &cfg.agent, cfg.radius())?;
    let reach = flood_fill(&graph, seed)?;
    log::info!(
        "reconstructed {} voxels: {} walkable, {} reachable",
        grid.len(),
        graph.len(),
        reach.len()
    );
    Ok(Reconstruction {
        grid,
        walkable,
        graph,
        reach,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Importance over all walkable voxels and its restriction to the reachable set.
pub fn importance_fields(rec: &Reconstruction, markers: &[GameplayMarker]) -> (ImportanceField, ImportanceField) {
    let full = compute_importance(&rec.graph, markers);
    let reach = full.restrict(rec.reach.mask());
    (full, reach)
}

/// Everything configurable from a `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub reconstruct: ReconstructConfig,
    pub epsilon: Option<f64>,
    pub tau: usize,
    pub probe_radius: i32,
    pub proj_radius: Option<f64>,
    pub height_tol: Option<f64>,
    /// Marker weight overrides by kind.
    pub weights: BTreeMap<String, f64>,
    pub rewards: Option<RewardParams>,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reconstruct: ReconstructConfig::default(),
            epsilon: None,
            tau: 3,
            probe_radius: 3,
            proj_radius: None,
            height_tol: None,
            weights: BTreeMap::new(),
            rewards: None,
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validation(&self) -> ValidationConfig {
        let s = self.reconstruct.resolution;
        let base = NavQueryConfig::for_agent(s, self.reconstruct.agent.h_step);
        ValidationConfig {
            epsilon: self.epsilon.unwrap_or(s),
            tau: self.tau,
            probe_radius: self.probe_radius,
            nav: NavQueryConfig {
                proj_radius: self.proj_radius.unwrap_or(base.proj_radius),
                height_tol: self.height_tol.unwrap_or(base.height_tol),
            },
        }
    }

    pub fn kind_weights(&self) -> KindWeights {
        let mut w = KindWeights::default();
        w.overrides.extend(self.weights.iter().map(|(k, v)| (k.clone(), *v)));
        w
    }

    pub fn rewards_for(&self, field: &ImportanceField) -> RewardParams {
        self.rewards.unwrap_or_else(|| RewardParams::scaled(field.max()))
    }
}

/// A generated world taken through reconstruction, reference navmesh
/// emission and defect injection.
#[derive(Debug, Clone)]
pub struct Scene {
    pub world: crate::synth::World,
    pub rec: Reconstruction,
    pub field: ImportanceField,
    pub field_reach: ImportanceField,
    pub reference: crate::navmesh::NavMesh,
    pub defective: crate::navmesh::NavMesh,
    pub injections: Vec<crate::synth::DefectInjection>,
    pub truth: crate::synth::GroundTruth,
}

impl Scene {
    pub fn build(spec: &crate::synth::WorldSpec) -> Result<Scene> {
        use crate::synth::{generate_world, inject_defects, plan_injections, NavCells};
        use rand::SeedableRng;

        let world = generate_world(spec)?;
        let cfg = ReconstructConfig {
            resolution: spec.resolution,
            agent: spec.agent,
            neighbor_radius: None,
        };
        let rec = reconstruct(&world.heightfield, &world.obstacles, &world.region, world.seed_position, &cfg)?;
        let (field, field_reach) = importance_fields(&rec, &world.markers);
        let cells = NavCells::from_graph(&rec.graph);
        let reference = cells.to_navmesh()?;
        let seed = rec.graph.index(rec.reach.seed()).column();
        let mut injections = spec.defects.clone();
        if let Some(r) = spec.random_defects {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_defe);
            injections.extend(plan_injections(&cells, &rec.grid, seed, r.count, r.size, &mut rng));
        }
        let (bad_cells, truth) = inject_defects(&cells, &injections, &rec.grid, seed)?;
        let defective = if injections.is_empty() {
            reference.clone()
        } else {
            bad_cells.to_navmesh()?
        };
        Ok(Scene {
            world,
            rec,
            field,
            field_reach,
            reference,
            defective,
            injections,
            truth,
        })
    }

    pub fn rewards(&self) -> RewardParams {
        RewardParams::scaled(self.field_reach.max())
    }

    pub fn inputs<'a>(&'a self, mesh: &'a crate::navmesh::NavMesh, cfg: ValidationConfig) -> crate::validate::ValidationInputs<'a> {
        crate::validate::ValidationInputs {
            rec: &self.rec,
            field: &self.field_reach,
            mesh,
            cfg,
            rewards: self.rewards(),
        }
    }
}

pub const NAVMESH_FILE: &str = "navmesh.nm";
pub const REFERENCE_FILE: &str = "reference.nm";
pub const TRUTH_FILE: &str = "truth.json";

impl Scene {
    /// Writes the world files plus the navmesh under test, the defect-free
    /// reference navmesh and the injected ground truth.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        crate::synth::write_world(&self.world, dir)?;
        self.defective.save(&dir.join(NAVMESH_FILE))?;
        self.reference.save(&dir.join(REFERENCE_FILE))?;
        let truth = serde_json::json!({
            "injections": self.injections,
            "per_injection": self.truth.per_injection,
        });
        let path = dir.join(TRUTH_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| crate::error::Error::io(&path, e))
    }
}

/// Inputs read back from a generated world directory.
#[derive(Debug, Clone)]
pub struct WorldDir {
    pub heightfield: HeightField,
    pub obstacles: Vec<CollisionMesh>,
    pub markers: Vec<GameplayMarker>,
    pub seed_position: DVec3,
    pub region: Region,
    pub navmesh: Option<crate::navmesh::NavMesh>,
}

impl WorldDir {
    pub fn load(dir: &std::path::Path, weights: &KindWeights) -> Result<WorldDir> {
        use crate::error::Error;
        use crate::synth::{HEIGHTFIELD_FILE, MARKERS_FILE, OBSTACLES_FILE, WORLD_FILE};

        let heightfield = crate::geom::load_heightfield(&dir.join(HEIGHTFIELD_FILE))?;
        let obj = dir.join(OBSTACLES_FILE);
        let obstacles = if obj.exists() {
            vec![crate::geom::load_collision_mesh(&obj)?]
        } else {
            Vec::new()
        };
        let markers_path = dir.join(MARKERS_FILE);
        let markers = if markers_path.exists() {
            crate::importance::load_markers(&markers_path, weights)?
        } else {
            Vec::new()
        };
        let world_path = dir.join(WORLD_FILE);
        let text = std::fs::read_to_string(&world_path).map_err(|e| Error::io(&world_path, e))?;
        let desc: serde_json::Value = serde_json::from_str(&text)?;
        let vec3 = |v: &serde_json::Value| -> Result<DVec3> {
            serde_json::from_value(v.clone()).map_err(Error::from)
        };
        let seed_position = vec3(&desc["seed_position"])?;
        let region = Region::from_corners(vec3(&desc["region"]["min"])?, vec3(&desc["region"]["max"])?)?;
        let nm = dir.join(NAVMESH_FILE);
        let navmesh = if nm.exists() {
            Some(crate::navmesh::load_navmesh(&nm)?)
        } else {
            None
        };
        Ok(WorldDir {
            heightfield,
            obstacles,
            markers,
            seed_position,
            region,
            navmesh,
        })
    }
}
