mod common;

use common::{random_clean_spec, score_report};
use navvox::bench::clustered_fixture;
use navvox::explore::StrategyKind;
use navvox::pipeline::{PipelineConfig, Scene};
use navvox::rl::QNetwork;
use navvox::synth::{RandomDefects, WorldSpec};
use navvox::validate::{run_validation, Budget, ValidationConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn strict_config(s: f64) -> ValidationConfig {
    PipelineConfig {
        epsilon: Some(s / 4.0),
        tau: 1,
        ..Default::default()
    }
    .validation()
}

#[test]
fn reference_navmesh_validates_clean() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for seed in 0..6 {
        let spec = random_clean_spec(&mut rng, seed);
        let scene = Scene::build(&spec).unwrap();
        let inputs = scene.inputs(&scene.reference, strict_config(spec.resolution));
        let run = run_validation(&inputs, StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null).unwrap();
        assert_eq!(run.report.metrics.filtered, 0, "seed {seed}: {:?}", run.report.raw.first());
        assert_eq!(run.report.exit_code(), 0);
    }
}

#[test]
fn exhaustive_validation_recovers_injections() {
    for seed in 0..4u64 {
        let spec = WorldSpec {
            seed,
            random_defects: Some(RandomDefects {
                count: 3 + seed as usize,
                size: 6,
            }),
            ..clustered_fixture()
        };
        let scene = Scene::build(&spec).unwrap();
        let vcfg = PipelineConfig::default().validation();
        let inputs = scene.inputs(&scene.defective, vcfg);
        let run = run_validation(&inputs, StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null).unwrap();
        let score = score_report(&scene, &run.report, vcfg.epsilon + scene.rec.graph.radius());
        assert_eq!(score.injected, scene.injections.len());
        assert_eq!(score.found, score.injected, "seed {seed}: {score:?}");
        assert_eq!(score.false_clusters, 0, "seed {seed}: {score:?}");
    }
}

#[test]
fn exhaustive_results_are_strategy_independent() {
    let spec = WorldSpec { seed: 3, ..clustered_fixture() };
    let scene = Scene::build(&spec).unwrap();
    let vcfg = PipelineConfig::default().validation();
    let inputs = scene.inputs(&scene.defective, vcfg);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let net = QNetwork::random(&QNetwork::default_architecture(), &mut rng);
    let mut reference = None;
    for kind in StrategyKind::ALL {
        let policy = (kind == StrategyKind::Rl).then_some(&net);
        let run = run_validation(&inputs, kind, Budget::Exhaustive, 5, policy, serde_json::Value::Null).unwrap();
        let detections: Vec<_> = run.report.defects.iter().map(|d| (d.voxel, d.kind, d.cluster_id)).collect();
        assert_eq!(run.waypoints.len(), scene.rec.reach.len());
        match &reference {
            None => reference = Some(detections),
            Some(r) => assert_eq!(&detections, r, "{kind} differs"),
        }
    }
    assert!(!reference.unwrap().is_empty());
}

#[test]
fn scene_artifacts_are_deterministic() {
    let spec = WorldSpec { seed: 9, ..clustered_fixture() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Scene::build(&spec).unwrap().write(a.path()).unwrap();
    Scene::build(&spec).unwrap().write(b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn world_directory_round_trip() {
    let spec = WorldSpec { seed: 4, ..clustered_fixture() };
    let scene = Scene::build(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    scene.write(dir.path()).unwrap();
    let loaded = navvox::pipeline::WorldDir::load(dir.path(), &PipelineConfig::default().kind_weights()).unwrap();
    assert_eq!(loaded.seed_position, scene.world.seed_position);
    assert_eq!(loaded.region, scene.world.region);
    assert_eq!(loaded.markers.len(), scene.world.markers.len());
    assert_eq!(loaded.navmesh.as_ref().unwrap().polygon_count(), scene.defective.polygon_count());
    let rec = navvox::pipeline::reconstruct(
        &loaded.heightfield,
        &loaded.obstacles,
        &loaded.region,
        loaded.seed_position,
        &navvox::pipeline::ReconstructConfig::default(),
    )
    .unwrap();
    assert_eq!(rec.graph.indices(), scene.rec.graph.indices());
    assert_eq!(rec.reach.mask(), scene.rec.reach.mask());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn budgeted_detections_are_subset_of_exhaustive(seed in 0u64..1000, pct in 0.1f64..0.9) {
        let spec = WorldSpec { seed, ..clustered_fixture() };
        let scene = Scene::build(&spec).unwrap();
        let vcfg = PipelineConfig::default().validation();
        let inputs = scene.inputs(&scene.defective, vcfg);
        let full = run_validation(&inputs, StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null).unwrap();
        let steps = (pct * scene.rec.reach.len() as f64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = [StrategyKind::Random, StrategyKind::Bfs, StrategyKind::Dfs, StrategyKind::Heuristic][rng.gen_range(0..4)];
        let part = run_validation(&inputs, kind, Budget::Steps(steps), seed, None, serde_json::Value::Null).unwrap();
        prop_assert!(part.waypoints.len() <= steps + 1);
        // Raw detections are per-voxel checks, so a subset of samples gives a subset.
        let all: std::collections::BTreeSet<_> = full.report.raw.iter().map(|i| (i.voxel, i.kind)).collect();
        for i in &part.report.raw {
            prop_assert!(all.contains(&(i.voxel, i.kind)));
        }
        prop_assert!((0.0..=1.0).contains(&part.report.metrics.coverage));
        prop_assert!(part.report.metrics.coverage <= full.report.metrics.coverage + 1e-12);
    }
}
