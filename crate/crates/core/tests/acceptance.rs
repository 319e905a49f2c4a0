//! Acceptance suite: one pass/fail line per criterion, then a non-zero exit
//! if any failed. Runs without the libtest harness so the lines always show.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{brute_voxelize, lattice_items, random_clean_spec, random_mesh, random_transition, random_world, score_report, td_gradient_error, UnionFind};
use navvox::bench::{clustered_fixture, corridor_fixture, run_benchmark, BenchConfig, BenchStrategy};
use navvox::explore::{ExploreEnv, StrategyKind};
use navvox::geom::{build_grid, voxelize_collision, voxelize_terrain, DVec2, DVec3, Region};
use navvox::pipeline::{reconstruct, PipelineConfig, ReconstructConfig, Scene};
use navvox::rl::{train, QNetwork, ReplayBuffer, TrainConfig};
use navvox::synth::{generate_world, ObstacleSpec, RandomDefects, TerrainProfile, WorldSpec};
use navvox::validate::{cluster_defects, run_validation, Budget, ValidationConfig};
use navvox::walk::{classify_walkable, flood_fill_from, AgentParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pass with a detail line, or fail with the reason.
type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strict_validation(s: f64) -> ValidationConfig {
    PipelineConfig {
        epsilon: Some(s / 4.0),
        tau: 1,
        ..Default::default()
    }
    .validation()
}

fn c1_voxelization() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for case in 0..100 {
        let s = [0.25, 0.5, 1.0][case % 3];
        let cells = rng.gen_range(8..=32) as f64;
        let min = DVec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let region = Region::from_corners(min, min + DVec3::splat(cells * s)).unwrap();
        let n = rng.gen_range(1..=200);
        let mesh = random_mesh(&mut rng, n, min - 1.0, min + cells * s + 1.0);
        let fast: BTreeSet<_> = voxelize_collision(std::slice::from_ref(&mesh), &region, s).unwrap().indices().collect();
        mismatches += usize::from(fast != brute_voxelize(&[mesh], &region, s));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(mismatches == 0 && secs < 60.0, format!("100 meshes, {mismatches} mismatches, {secs:.1} s (limit 60 s)"))
}

fn c2_flood_fill_and_clustering() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut graphs, mut largest, mut bad) = (0, 0, 0);
    while graphs < 100 {
        let side = if graphs % 10 == 0 { 100 } else { rng.gen_range(5..40) };
        let (ny, obstacles) = (rng.gen_range(5..=side), rng.gen_range(0..8));
        let graph = random_world(&mut rng, side, ny, obstacles);
        if graph.is_empty() || graph.len() > 10_000 {
            continue;
        }
        graphs += 1;
        largest = largest.max(graph.len());
        let mut uf = UnionFind::new(graph.len());
        for (a, b) in graph.edges() {
            uf.union(a as usize, b as usize);
        }
        let seed = rng.gen_range(0..graph.len() as u32);
        let reach = flood_fill_from(&graph, seed);
        let root = uf.find(seed as usize);
        bad += usize::from((0..graph.len() as u32).any(|v| reach.contains(v) != (uf.find(v as usize) == root)));
    }
    let mut cluster_bad = 0;
    for case in 0..100 {
        let side = rng.gen_range(4..40);
        let n = rng.gen_range(0..=(side * side) as usize).min(1500);
        let items = lattice_items(&mut rng, n, side);
        let (radius, tau) = ([0.5, 0.75, 1.0][case % 3], rng.gen_range(1..6));
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if items[i].position.distance(items[j].position) <= radius + 1e-9 {
                    uf.union(i, j);
                }
            }
        }
        let expected: BTreeSet<Vec<usize>> = uf.groups().into_iter().filter(|g| g.len() >= tau).collect();
        let got: BTreeSet<Vec<usize>> = cluster_defects(&items, radius, tau).into_iter().map(|c| c.members).collect();
        cluster_bad += usize::from(got != expected);
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        bad == 0 && cluster_bad == 0 && secs < 30.0,
        format!("100 graphs (largest {largest} nodes) + 100 clusterings, {bad}+{cluster_bad} mismatches, {secs:.1} s (limit 30 s)"),
    )
}

fn c3_walkability() -> Outcome {
    let agent = AgentParams::default();
    if agent.h_step != 0.4 {
        return Err(format!("default step height {} is not 0.4 m", agent.h_step));
    }
    let stairs = |riser: f64| {
        let spec = WorldSpec {
            extent: DVec2::new(8.0, 4.0),
            terrain: TerrainProfile::Staircase { riser, tread: 1.0 },
            agent,
            seed_position: Some(DVec2::new(0.75, 2.25)),
            ..Default::default()
        };
        let world = generate_world(&spec).unwrap();
        let cfg = ReconstructConfig {
            resolution: spec.resolution,
            agent,
            neighbor_radius: None,
        };
        reconstruct(&world.heightfield, &world.obstacles, &world.region, world.seed_position, &cfg).unwrap()
    };
    let low = stairs(0.3);
    let connected = low.walkable.len() == low.grid.terrain().len() && low.reach.len() == low.graph.len();
    let high = stairs(0.5);
    let treads: BTreeSet<u64> = (0..high.graph.len() as u32).map(|v| high.graph.height(v).to_bits()).collect();
    let mut uf = UnionFind::new(high.graph.len());
    let mut crossing = 0;
    for (a, b) in high.graph.edges() {
        uf.union(a as usize, b as usize);
        crossing += usize::from(high.graph.height(a) != high.graph.height(b));
    }
    let disconnected = crossing == 0 && uf.groups().len() == treads.len() && treads.len() > 1;

    let ramp = |theta_deg: f64| {
        let agent = AgentParams {
            theta_max: theta_deg.to_radians(),
            h_step: 0.6,
            ..Default::default()
        };
        let spec = WorldSpec {
            extent: DVec2::new(6.0, 4.0),
            terrain: TerrainProfile::Ramp { slope_deg: 45.0 },
            agent,
            ..Default::default()
        };
        let world = generate_world(&spec).unwrap();
        let terrain = voxelize_terrain(&world.heightfield, &world.region, spec.resolution).unwrap();
        let occupied = voxelize_collision(&world.obstacles, &world.region, spec.resolution).unwrap();
        let grid = build_grid(terrain, occupied).unwrap();
        (classify_walkable(&grid, &world.heightfield, &agent).len(), grid.terrain().len())
    };
    let (above, total) = ramp(45.0 + 1e-6);
    let (below, _) = ramp(45.0 - 1e-3);
    ensure(
        connected && disconnected && above == total && below == 0,
        format!(
            "riser 0.3: connected={connected}; riser 0.5: {} treads, {crossing} crossing edges; ramp 45°: {above}/{total} walkable at +1e-6, {below} at -1e-3",
            treads.len()
        ),
    )
}

fn c4_gradient() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let worst = (0..25).map(|_| td_gradient_error(&mut rng, 0.95)).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    ensure(worst <= 1e-4 && secs < 30.0, format!("25 cases, worst relative error {worst:.2e} (limit 1e-4), {secs:.1} s"))
}

fn c5_replay() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let t = random_transition(&mut rng, 2, 2);
    let mut buf = ReplayBuffer::new(2, 1.0, 1e-6);
    buf.push(t.clone());
    buf.push(t);
    buf.set_priority(0, 1.0);
    buf.set_priority(1, 3.0);
    let draws = 100_000;
    let mut hits = [0usize; 2];
    for _ in 0..draws / 2 {
        for i in buf.sample(2, 0.4, &mut rng).unwrap().indices {
            hits[i] += 1;
        }
    }
    let f0 = hits[0] as f64 / draws as f64;

    let k = 10;
    let mut uniform = ReplayBuffer::new(k, 0.0, 1e-6);
    for i in 0..k {
        uniform.push(random_transition(&mut rng, 2, 2));
        uniform.set_priority(i, 1.0 + 10.0 * i as f64);
    }
    let mut counts = vec![0usize; k];
    for _ in 0..draws / k {
        for i in uniform.sample(k, 1.0, &mut rng).unwrap().indices {
            counts[i] += 1;
        }
    }
    let e = draws as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
    ensure(
        (f0 - 0.25).abs() <= 0.02 && p > 0.01,
        format!("priorities [1,3], α=1: P(0)={f0:.4} (expect 0.25±0.02); α=0: χ²={chi2:.2}, p={p:.3} (> 0.01)"),
    )
}

fn c6_zero_defect() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut dirty = Vec::new();
    for seed in 0..20 {
        let spec = random_clean_spec(&mut rng, seed);
        let scene = Scene::build(&spec).unwrap();
        let inputs = scene.inputs(&scene.reference, strict_validation(spec.resolution));
        let run = run_validation(&inputs, StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null).unwrap();
        if run.report.metrics.filtered > 0 {
            dirty.push(seed);
        }
    }
    ensure(dirty.is_empty(), format!("20 clean worlds at ε=s/4, τ=1; non-empty reports for seeds {dirty:?}"))
}

fn c7_recall() -> Outcome {
    let (mut injected, mut found, mut false_clusters) = (0, 0, 0);
    for seed in 0..20u64 {
        let spec = WorldSpec {
            seed,
            random_defects: Some(RandomDefects {
                count: 3 + (seed % 8) as usize,
                size: 6,
            }),
            ..clustered_fixture()
        };
        let scene = Scene::build(&spec).unwrap();
        let vcfg = PipelineConfig::default().validation();
        let run = run_validation(&scene.inputs(&scene.defective, vcfg), StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null)
            .unwrap();
        let score = score_report(&scene, &run.report, vcfg.epsilon + scene.rec.graph.radius());
        injected += score.injected;
        found += score.found;
        false_clusters += score.false_clusters;
    }
    ensure(
        found == injected && false_clusters == 0,
        format!("20 seeds, 3–10 injections each: {found}/{injected} found, {false_clusters} false-positive clusters"),
    )
}

fn c8_strategy_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let net = QNetwork::random(&QNetwork::default_architecture(), &mut rng);
    let mut differing = Vec::new();
    let mut sizes = Vec::new();
    for seed in [3, 8] {
        let scene = Scene::build(&WorldSpec { seed, ..clustered_fixture() }).unwrap();
        let inputs = scene.inputs(&scene.defective, PipelineConfig::default().validation());
        let mut reference = None;
        for kind in StrategyKind::ALL {
            let policy = (kind == StrategyKind::Rl).then_some(&net);
            let run = run_validation(&inputs, kind, Budget::Exhaustive, 5, policy, serde_json::Value::Null).unwrap();
            let detections: Vec<_> = run.report.defects.iter().map(|d| (d.voxel, d.kind, d.cluster_id)).collect();
            match &reference {
                None => {
                    sizes.push(detections.len());
                    reference = Some(detections);
                }
                Some(r) if *r != detections => differing.push(format!("{kind}@{seed}")),
                Some(_) => {}
            }
        }
    }
    ensure(
        differing.is_empty() && sizes.iter().all(|&n| n > 0),
        format!("{} strategies × 2 fixtures, {sizes:?} filtered detections; differing: {differing:?}", StrategyKind::ALL.len()),
    )
}

fn c9_efficiency() -> Outcome {
    let strategies: Vec<BenchStrategy> = ["random", "heuristic", "rl-uniform", "rl"].iter().map(|s| s.parse().unwrap()).collect();
    let cfg = BenchConfig {
        strategies: strategies.clone(),
        budgets: vec![100.0],
        ..BenchConfig::default()
    };
    let results = run_benchmark(&cfg, None).map_err(|e| e.to_string())?;
    if !results.failures.is_empty() {
        return Err(format!("benchmark failures: {:?}", results.failures));
    }
    let median = |s: BenchStrategy| results.median_samples_to_85(s).unwrap_or(f64::INFINITY);
    let [random, heuristic, uniform, prio] = [strategies[0], strategies[1], strategies[2], strategies[3]].map(median);
    let train_max = results.training.iter().map(|r| r.train_ms / 1e3).fold(0.0, f64::max);
    let ordered = prio <= uniform && uniform <= heuristic && heuristic <= random;
    ensure(
        ordered && prio <= 0.8 * random && train_max < 15.0 * 60.0,
        format!(
            "{} seeds, median samples to 85%: rl {prio} ≤ rl-uniform {uniform} ≤ heuristic {heuristic} ≤ random {random}; slowest policy {train_max:.0} s (limit 900 s)",
            cfg.seeds.len()
        ),
    )
}

fn c10_learning_signal() -> Outcome {
    let scene = Scene::build(&corridor_fixture()).unwrap();
    let env = ExploreEnv::for_reach(&scene.rec.graph, &scene.field_reach, &scene.rec.reach, scene.rewards());
    // Episodes start at the seed so the coverage curve is comparable over training.
    let cfg = TrainConfig {
        random_starts: false,
        ..TrainConfig::default()
    };
    let median = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        navvox::bench::quantile(&v, 0.5).unwrap_or(0.0)
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let (_, log) = train(std::slice::from_ref(&env), &cfg, seed).map_err(|e| e.to_string())?;
        let cov = log.coverages();
        let (first, last) = (median(&cov[..50]), median(&cov[cov.len() - 50..]));
        ok &= last >= 1.25 * first && last > first;
        parts.push(format!("seed {seed}: {first:.3} → {last:.3}"));
    }
    ensure(ok, format!("median episode coverage, first 50 → last 50 episodes: {}", parts.join(", ")))
}

fn c11_throughput() -> Outcome {
    let spec = WorldSpec {
        seed: 5,
        extent: DVec2::new(224.0, 224.0),
        terrain: TerrainProfile::Noise {
            amplitude: 0.8,
            frequency: 0.03,
        },
        obstacles: ObstacleSpec {
            count: 60,
            ..Default::default()
        },
        random_defects: Some(RandomDefects { count: 8, size: 6 }),
        ..Default::default()
    };
    let scene = Scene::build(&spec).unwrap();
    let world = &scene.world;
    let cfg = ReconstructConfig {
        resolution: spec.resolution,
        agent: spec.agent,
        neighbor_radius: None,
    };
    let t = Instant::now();
    let rec = reconstruct(&world.heightfield, &world.obstacles, &world.region, world.seed_position, &cfg).unwrap();
    let recon = t.elapsed().as_secs_f64();
    let voxels = rec.grid.len();
    let inputs = scene.inputs(&scene.defective, PipelineConfig::default().validation());
    let net = QNetwork::random(&QNetwork::default_architecture(), &mut ChaCha8Rng::seed_from_u64(111));
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in [StrategyKind::Bfs, StrategyKind::Heuristic, StrategyKind::Rl] {
        let policy = (kind == StrategyKind::Rl).then_some(&net);
        let t = Instant::now();
        run_validation(&inputs, kind, Budget::Exhaustive, 0, policy, serde_json::Value::Null).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        worst = worst.max(recon + secs);
        parts.push(format!("{kind} {secs:.1} s"));
    }
    ensure(
        voxels >= 200_000 && worst < 300.0,
        format!("{voxels} voxels, reconstruct {recon:.1} s, exhaustive validation {}; worst total {worst:.1} s (limit 300 s)", parts.join(", ")),
    )
}

fn c12_determinism() -> Outcome {
    let mut differing = Vec::new();
    let spec = WorldSpec { seed: 12, ..clustered_fixture() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for dir in &dirs {
        let scene = Scene::build(&spec).unwrap();
        scene.write(dir.path()).unwrap();
        let inputs = scene.inputs(&scene.defective, PipelineConfig::default().validation());
        let run = run_validation(&inputs, StrategyKind::Heuristic, Budget::Steps(400), 12, None, serde_json::Value::Null).unwrap();
        reports.push((run.report.to_json(), run.trajectory.to_jsonl(&scene.rec.graph)));
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        if std::fs::read(dirs[0].path().join(name)).ok() != std::fs::read(dirs[1].path().join(name)).ok() {
            differing.push(name.to_string_lossy().into_owned());
        }
    }
    if reports[0] != reports[1] {
        differing.push("report".into());
    }

    let scene = Scene::build(&spec).unwrap();
    let env = ExploreEnv::for_reach(&scene.rec.graph, &scene.field_reach, &scene.rec.reach, scene.rewards());
    let short = TrainConfig {
        episodes: 6,
        steps_per_episode: 100,
        eval_interval: 3,
        ..TrainConfig::default()
    };
    let trained: Vec<_> = (0..2).map(|_| train(std::slice::from_ref(&env), &short, 4).unwrap()).collect();
    if trained[0].0.to_json() != trained[1].0.to_json() || trained[0].1.to_csv() != trained[1].1.to_csv() {
        differing.push("policy".into());
    }

    let bench = BenchConfig {
        strategies: ["random", "bfs", "heuristic"].iter().map(|s| s.parse().unwrap()).collect(),
        seeds: vec![0, 1],
        deterministic: true,
        ..BenchConfig::default()
    };
    let csv: Vec<_> = (0..2).map(|_| run_benchmark(&bench, None).unwrap().to_csv().unwrap()).collect();
    if csv[0] != csv[1] {
        differing.push("bench csv".into());
    }
    ensure(
        differing.is_empty(),
        format!("{} scene files, report, trajectory, policy, training log, bench CSV compared; differing: {differing:?}", names.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("voxelization oracle", c1_voxelization),
        ("flood fill / clustering oracle", c2_flood_fill_and_clustering),
        ("walkability thresholds", c3_walkability),
        ("TD gradient check", c4_gradient),
        ("prioritized replay distribution", c5_replay),
        ("zero-defect soundness", c6_zero_defect),
        ("exhaustive defect recall", c7_recall),
        ("strategy independence", c8_strategy_independence),
        ("efficiency ordering", c9_efficiency),
        ("learning signal", c10_learning_signal),
        ("throughput", c11_throughput),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("C{} PASS {name} — {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("C{} FAIL {name} — {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
