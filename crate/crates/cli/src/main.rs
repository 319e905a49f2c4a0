//! `navvox` command-line front end: world generation, voxelization,
//! validation, policy training and the strategy benchmark.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use navvox::bench::{run_benchmark, BenchConfig};
use navvox::explore::{ExploreEnv, StrategyKind};
use navvox::geom::{load_collision_mesh, load_heightfield, DVec3, Region};
use navvox::importance::load_markers;
use navvox::navmesh::load_navmesh;
use navvox::pipeline::{importance_fields, reconstruct, PipelineConfig, Reconstruction, Scene, WorldDir};
use navvox::rl::{load_policy, save_policy, train};
use navvox::synth::WorldSpec;
use navvox::validate::{run_validation, Budget, ValidationInputs};

const EXIT_USAGE: u8 = 64;
const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "navvox", version, about = "Validate navigation meshes against a voxel reconstruction of walkable space")]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file; echoed into every report.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world with injected navmesh defects.
    Gen {
        /// WorldSpec JSON file.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Reconstruct walkable voxels and print grid statistics.
    Voxelize {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Write walkable voxels and edges as `x y z kind` lines.
        #[arg(long)]
        dump_voxels: Option<PathBuf>,
    },
    /// Explore the reachable space and report navmesh inconsistencies.
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Navmesh under test (defaults to navmesh.nm in the world directory).
        #[arg(long)]
        navmesh: Option<PathBuf>,
        #[arg(long, default_value = "heuristic")]
        strategy: StrategyKind,
        /// Step budget, or `exhaustive`.
        #[arg(long, default_value = "exhaustive", value_parser = parse_budget)]
        budget: Budget,
        /// Trained policy, required for `--strategy rl`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Write the exploration trajectory as JSON lines.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Train an exploration policy on one or more worlds.
    Train {
        /// World directories to train on.
        #[arg(long = "world", required = true)]
        worlds: Vec<PathBuf>,
        #[command(flatten)]
        agent: AgentArgs,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the per-episode training log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare exploration strategies on generated fixtures.
    Bench {
        /// Override the number of benchmark seeds (0..N).
        #[arg(long)]
        seeds: Option<u64>,
        /// Override the strategy list.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// World directory written by `navvox gen`.
    #[arg(long, conflicts_with_all = ["terrain", "obstacles"])]
    world: Option<PathBuf>,
    /// Heightfield file.
    #[arg(long, requires_all = ["region", "seed_pos"])]
    terrain: Option<PathBuf>,
    /// Collision mesh OBJ files.
    #[arg(long)]
    obstacles: Vec<PathBuf>,
    /// Region of interest `minx,miny,minz,maxx,maxy,maxz`.
    #[arg(long, value_parser = parse_region)]
    region: Option<Region>,
    /// Seed position `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    seed_pos: Option<DVec3>,
    /// Gameplay markers JSON file.
    #[arg(long)]
    markers: Option<PathBuf>,
    /// Marker weight override `kind=value`; repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    weights: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
struct AgentArgs {
    /// Voxel edge length, m.
    #[arg(long)]
    resolution: Option<f64>,
    /// Maximum walkable slope, degrees.
    #[arg(long)]
    max_slope: Option<f64>,
    /// Maximum step height, m.
    #[arg(long)]
    step_height: Option<f64>,
    /// Agent radius, m.
    #[arg(long)]
    agent_radius: Option<f64>,
    /// Agent height, m.
    #[arg(long)]
    agent_height: Option<f64>,
}

fn parse_budget(s: &str) -> std::result::Result<Budget, String> {
    if s.eq_ignore_ascii_case("exhaustive") {
        return Ok(Budget::Exhaustive);
    }
    s.parse().map(Budget::Steps).map_err(|_| format!("`{s}` is neither a step count nor `exhaustive`"))
}

fn parse_floats<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_vec3(s: &str) -> std::result::Result<DVec3, String> {
    parse_floats::<3>(s).map(DVec3::from_array)
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let v = parse_floats::<6>(s)?;
    Region::from_corners(DVec3::new(v[0], v[1], v[2]), DVec3::new(v[3], v[4], v[5])).map_err(|e| e.to_string())
}

fn parse_weight(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected kind=value, got `{s}`"))?;
    let w: f64 = v.trim().parse().map_err(|_| format!("weight `{v}` is not a number"))?;
    if !(w.is_finite() && w >= 0.0) {
        return Err(format!("weight `{v}` must be finite and non-negative"));
    }
    Ok((k.trim().to_string(), w))
}

impl AgentArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let r = &mut cfg.reconstruct;
        if let Some(s) = self.resolution {
            r.resolution = s;
        }
        if let Some(deg) = self.max_slope {
            r.agent.theta_max = deg.to_radians();
        }
        if let Some(h) = self.step_height {
            r.agent.h_step = h;
        }
        if let Some(a) = self.agent_radius {
            r.agent.r_agent = a;
        }
        if let Some(h) = self.agent_height {
            r.agent.h_agent = h;
        }
    }
}

/// Pipeline configuration plus the raw file contents for the report echo.
struct LoadedConfig {
    cfg: PipelineConfig,
    raw: serde_json::Value,
}

fn load_config(path: Option<&Path>) -> Result<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            cfg: PipelineConfig::default(),
            raw: serde_json::Value::Null,
        });
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = PipelineConfig::from_json(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let raw = serde_json::from_str(&text)?;
    Ok(LoadedConfig { cfg, raw })
}

fn load_inputs(args: &InputArgs, cfg: &mut PipelineConfig) -> Result<WorldDir> {
    cfg.weights.extend(args.weights.iter().cloned());
    let weights = cfg.kind_weights();
    let mut world = match (&args.world, &args.terrain) {
        (Some(dir), _) => WorldDir::load(dir, &weights).with_context(|| format!("loading world {}", dir.display()))?,
        (None, Some(terrain)) => {
            let heightfield = load_heightfield(terrain)?;
            let obstacles = args.obstacles.iter().map(|p| load_collision_mesh(p)).collect::<navvox::Result<_>>()?;
            WorldDir {
                heightfield,
                obstacles,
                markers: Vec::new(),
                seed_position: args.seed_pos.expect("clap enforces --seed-pos"),
                region: args.region.expect("clap enforces --region"),
                navmesh: None,
            }
        }
        (None, None) => bail!(UsageError("either --world or --terrain is required".into())),
    };
    if let Some(region) = args.region {
        world.region = region;
    }
    if let Some(p) = args.seed_pos {
        world.seed_position = p;
    }
    if let Some(path) = &args.markers {
        world.markers = load_markers(path, &weights)?;
    }
    Ok(world)
}

fn reconstruct_world(world: &WorldDir, cfg: &PipelineConfig) -> Result<Reconstruction> {
    Ok(reconstruct(&world.heightfield, &world.obstacles, &world.region, world.seed_position, &cfg.reconstruct)?)
}

/// Usage problems detected after argument parsing; mapped to exit 64.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(cli: &Cli, spec_path: &Path) -> Result<u8> {
    let out = cli.out.as_deref().ok_or_else(|| UsageError("gen requires --out <dir>".into()))?;
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading spec {}", spec_path.display()))?;
    let mut spec = WorldSpec::from_json(&text).with_context(|| format!("parsing spec {}", spec_path.display()))?;
    if cli.seed != 0 {
        spec.seed = cli.seed;
    }
    let scene = Scene::build(&spec)?;
    scene.write(out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": out,
            "reachable_voxels": scene.rec.reach.len(),
            "reference_polygons": scene.reference.polygons().len(),
            "navmesh_polygons": scene.defective.polygons().len(),
            "injections": scene.injections.len(),
            "truth_voxels": scene.truth.all().len(),
        })
    );
    Ok(0)
}

fn cmd_voxelize(cli: &Cli, inputs: &InputArgs, agent: &AgentArgs, dump: Option<&Path>) -> Result<u8> {
    let mut loaded = load_config(cli.config.as_deref())?;
    agent.apply(&mut loaded.cfg);
    let world = load_inputs(inputs, &mut loaded.cfg)?;
    let rec = reconstruct_world(&world, &loaded.cfg)?;
    if let Some(path) = dump {
        rec.graph.dump_points(Some(&rec.reach), path)?;
    }
    let stats = serde_json::json!({
        "resolution": loaded.cfg.reconstruct.resolution,
        "occupied_voxels": rec.grid.len(),
        "walkable_voxels": rec.graph.len(),
        "walk_edges": rec.graph.edges().count(),
        "reachable_voxels": rec.reach.len(),
        "recon_ms": rec.elapsed_ms,
    });
    write_or_print(cli.out.as_deref(), &serde_json::to_string_pretty(&stats)?)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_validate(
    cli: &Cli,
    inputs: &InputArgs,
    agent: &AgentArgs,
    navmesh: Option<&Path>,
    strategy: StrategyKind,
    budget: Budget,
    policy: Option<&Path>,
    trajectory: Option<&Path>,
) -> Result<u8> {
    let mut loaded = load_config(cli.config.as_deref())?;
    agent.apply(&mut loaded.cfg);
    let mut world = load_inputs(inputs, &mut loaded.cfg)?;
    if let Some(p) = navmesh {
        world.navmesh = Some(load_navmesh(p).with_context(|| format!("loading navmesh {}", p.display()))?);
    }
    let Some(mesh) = world.navmesh.take() else {
        bail!(UsageError("no navmesh: pass --navmesh or a world directory containing one".into()));
    };
    let net = match (strategy, policy) {
        (StrategyKind::Rl, None) => bail!(UsageError("--strategy rl requires --policy".into())),
        (_, Some(p)) => Some(load_policy(p).with_context(|| format!("loading policy {}", p.display()))?),
        _ => None,
    };
    let cfg = &loaded.cfg;
    let rec = reconstruct_world(&world, cfg)?;
    let (_, field) = importance_fields(&rec, &world.markers);
    let vcfg = cfg.validation();
    vcfg.validate()?;
    let inputs = ValidationInputs {
        rec: &rec,
        field: &field,
        mesh: &mesh,
        cfg: vcfg,
        rewards: cfg.rewards_for(&field),
    };
    let echo = serde_json::json!({
        "file": loaded.raw,
        "effective": cfg,
        "strategy": strategy.name(),
        "budget": budget,
        "seed": cli.seed,
    });
    let run = run_validation(&inputs, strategy, budget, cli.seed, net.as_ref(), echo)?;
    if let Some(path) = trajectory {
        run.trajectory.save_jsonl(&rec.graph, path)?;
    }
    write_or_print(cli.out.as_deref(), &run.report.to_json())?;
    eprintln!(
        "{} samples, {} clusters, coverage {:.1}%",
        run.waypoints.len(),
        run.report.clusters.len(),
        run.report.metrics.coverage * 100.0
    );
    Ok(run.report.exit_code() as u8)
}

fn cmd_train(cli: &Cli, worlds: &[PathBuf], agent: &AgentArgs, episodes: Option<usize>, log: Option<&Path>) -> Result<u8> {
    let out = cli.out.as_deref().ok_or_else(|| UsageError("train requires --out <policy file>".into()))?;
    let mut loaded = load_config(cli.config.as_deref())?;
    agent.apply(&mut loaded.cfg);
    if let Some(n) = episodes {
        loaded.cfg.train.episodes = n;
    }
    let cfg = &loaded.cfg;
    let weights = cfg.kind_weights();
    let mut scenes = Vec::new();
    for dir in worlds {
        let world = WorldDir::load(dir, &weights).with_context(|| format!("loading world {}", dir.display()))?;
        let rec = reconstruct_world(&world, cfg)?;
        let (_, field) = importance_fields(&rec, &world.markers);
        scenes.push((rec, field));
    }
    let envs: Vec<ExploreEnv<'_>> = scenes
        .iter()
        .map(|(rec, field)| ExploreEnv::for_reach(&rec.graph, field, &rec.reach, cfg.rewards_for(field)))
        .collect();
    let (net, train_log) = train(&envs, &cfg.train, cli.seed)?;
    save_policy(&net, out)?;
    if let Some(path) = log {
        std::fs::write(path, train_log.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let last = train_log.episodes.last().map_or(0.0, |e| e.coverage);
    eprintln!(
        "trained {} episodes; final episode coverage {:.3}; selected checkpoint {:?}",
        train_log.episodes.len(),
        last,
        train_log.selected
    );
    Ok(0)
}

fn cmd_bench(cli: &Cli, seeds: Option<u64>, strategies: Option<&[String]>) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str::<BenchConfig>(&text).with_context(|| format!("parsing bench config {}", p.display()))?
        }
        None => BenchConfig::default(),
    };
    if let Some(n) = seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(list) = strategies {
        cfg.strategies = list
            .iter()
            .map(|s| s.parse())
            .collect::<navvox::Result<_>>()
            .map_err(|e| UsageError(e.to_string()))?;
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let results = run_benchmark(&cfg, None)?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("results.csv"), results.to_csv()?)?;
        std::fs::write(dir.join("results.json"), results.to_json())?;
        std::fs::write(dir.join("plot.json"), serde_json::to_string_pretty(&results.plot_data())?)?;
    }
    println!("{}", results.table());
    for f in &results.failures {
        eprintln!("run failed: {}", serde_json::to_string(f)?);
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Gen { spec } => cmd_gen(cli, spec),
        Command::Voxelize {
            inputs,
            agent,
            dump_voxels,
        } => cmd_voxelize(cli, inputs, agent, dump_voxels.as_deref()),
        Command::Validate {
            inputs,
            agent,
            navmesh,
            strategy,
            budget,
            policy,
            trajectory,
        } => cmd_validate(
            cli,
            inputs,
            agent,
            navmesh.as_deref(),
            *strategy,
            *budget,
            policy.as_deref(),
            trajectory.as_deref(),
        ),
        Command::Train {
            worlds,
            agent,
            episodes,
            log,
        } => cmd_train(cli, worlds, agent, *episodes, log.as_deref()),
        Command::Bench { seeds, strategies } => cmd_bench(cli, *seeds, strategies.as_deref()),
    }
}

/// Structured diagnostic printed on stderr for failed runs.
fn diagnostic(kind: &str, err: &anyhow::Error) -> String {
    let causes: Vec<String> = err.chain().map(|c| c.to_string()).collect();
    let io_path = err.chain().find_map(|c| match c.downcast_ref::<navvox::Error>() {
        Some(navvox::Error::Io { path, .. }) => Some(path.display().to_string()),
        _ => None,
    });
    serde_json::json!({
        "error": {
            "kind": kind,
            "message": err.to_string(),
            "causes": causes,
            "path": io_path,
        }
    })
    .to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("{}", diagnostic("usage", &e));
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("{}", diagnostic("runtime", &e));
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
