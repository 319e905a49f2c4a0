//! Strategy benchmark: validation under several exploration strategies and
//! budgets on generated fixtures, with per-run metrics, median/IQR
//! aggregation, CSV and plot data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{run_strategy, ExploreEnv, StrategyKind};
use crate::geom::{KdTree, VoxelIndex};
use crate::pipeline::Scene;
use crate::rl::{train, QNetwork, TrainConfig, TrainLog};
use crate::synth::{MarkerSpec, ObstacleSpec, RandomDefects, TerrainProfile, WorldSpec};
use crate::validate::{run_validation, Budget, ValidationConfig, ValidationRun};

/// A benchmarked strategy. The two RL entries differ only in replay:
/// prioritized (`rl`) or uniform (`rl-uniform`, α = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchStrategy {
    Plain(StrategyKind),
    RlPrioritized,
    RlUniform,
}

impl BenchStrategy {
    pub fn kind(self) -> StrategyKind {
        match self {
            BenchStrategy::Plain(k) => k,
            _ => StrategyKind::Rl,
        }
    }

    pub fn is_rl(self) -> bool {
        self.kind() == StrategyKind::Rl
    }
}

impl FromStr for BenchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rl" | "rl-prioritized" => Ok(BenchStrategy::RlPrioritized),
            "rl-uniform" => Ok(BenchStrategy::RlUniform),
            other => other.parse().map(BenchStrategy::Plain),
        }
    }
}

impl std::fmt::Display for BenchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchStrategy::Plain(k) => write!(f, "{k}"),
            BenchStrategy::RlPrioritized => f.write_str("rl"),
            BenchStrategy::RlUniform => f.write_str("rl-uniform"),
        }
    }
}

impl Serialize for BenchStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BenchStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Clustered-importance fixture: gentle noise terrain, a few obstacles,
/// three marker clusters and five injected defect patches.
pub fn clustered_fixture() -> WorldSpec {
    WorldSpec {
        extent: DVec2::new(30.0, 30.0),
        terrain: TerrainProfile::Noise {
            amplitude: 0.6,
            frequency: 0.08,
        },
        obstacles: ObstacleSpec {
            count: 4,
            ..ObstacleSpec::default()
        },
        markers: MarkerSpec {
            clusters: 3,
            per_cluster: 4,
            ..MarkerSpec::default()
        },
        random_defects: Some(RandomDefects { count: 5, size: 6 }),
        ..WorldSpec::default()
    }
}

/// Flat 40 m × 6 m corridor, seed at one end, one marker cluster at the other.
pub fn corridor_fixture() -> WorldSpec {
    WorldSpec {
        extent: DVec2::new(40.0, 6.0),
        seed_position: Some(DVec2::new(2.25, 3.25)),
        markers: MarkerSpec {
            clusters: 1,
            per_cluster: 4,
            spread: 1.5,
            centers: vec![DVec2::new(35.0, 3.0)],
            ..MarkerSpec::default()
        },
        ..WorldSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub strategies: Vec<BenchStrategy>,
    /// Budgets as percentages of the exhaustive sample count; 100 means the
    /// exhaustive budget.
    pub budgets: Vec<f64>,
    pub seeds: Vec<u64>,
    pub coverage_target: f64,
    /// Template world; its seed is replaced by each benchmark seed.
    pub fixture: WorldSpec,
    /// World seeds of the fixtures RL policies train on.
    pub training_worlds: Vec<u64>,
    /// One policy per entry and RL variant; benchmark seed i uses policy i mod K.
    pub policy_seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Step cap of the samples-to-target runs, in multiples of |V_r|.
    pub efficiency_cap: f64,
    /// Validation settings; defaults follow the fixture resolution.
    pub validation: Option<ValidationConfig>,
    /// Zero every wall-clock field so outputs are byte-reproducible.
    pub deterministic: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            strategies: vec![
                BenchStrategy::Plain(StrategyKind::Random),
                BenchStrategy::Plain(StrategyKind::Bfs),
                BenchStrategy::Plain(StrategyKind::Dfs),
                BenchStrategy::Plain(StrategyKind::Heuristic),
                BenchStrategy::RlUniform,
                BenchStrategy::RlPrioritized,
            ],
            budgets: vec![25.0, 50.0, 75.0, 100.0],
            seeds: (0..20).collect(),
            coverage_target: 0.85,
            fixture: clustered_fixture(),
            training_worlds: (1000..1004).collect(),
            policy_seeds: vec![7, 11],
            train: TrainConfig::default(),
            efficiency_cap: 4.0,
            validation: None,
            deterministic: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("benchmark needs at least one seed".into()));
        }
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return Err(Error::Invalid(format!("coverage target {} outside (0, 1]", self.coverage_target)));
        }
        if self.budgets.iter().any(|&b| !(b > 0.0 && b <= 100.0)) {
            return Err(Error::Invalid("budgets must lie in (0, 100]".into()));
        }
        if self.strategies.iter().any(|s| s.is_rl()) && (self.training_worlds.is_empty() || self.policy_seeds.is_empty()) {
            return Err(Error::Invalid("rl strategies need training worlds and policy seeds".into()));
        }
        if !(self.efficiency_cap > 0.0) {
            return Err(Error::Invalid("efficiency cap must be positive".into()));
        }
        self.fixture.validate()?;
        self.train.validate()
    }

    fn validation_for(&self, spec: &WorldSpec) -> ValidationConfig {
        self.validation
            .unwrap_or_else(|| ValidationConfig::for_resolution(spec.resolution, spec.agent.h_step))
    }

    /// Training settings of one RL variant.
    pub fn train_config(&self, strategy: BenchStrategy) -> TrainConfig {
        let mut cfg = self.train.clone();
        if strategy == BenchStrategy::RlUniform {
            cfg.alpha = 0.0;
        }
        cfg
    }
}

/// One (strategy, seed, budget) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strategy: BenchStrategy,
    pub seed: u64,
    pub budget_pct: f64,
    /// % of exhaustive-run clusters with at least one flagged voxel.
    pub detection_rate: f64,
    /// % of injected defects (of at least τ voxels) with a flagged voxel
    /// within the tolerance band.
    pub injected_detection_rate: f64,
    /// Importance-weighted coverage of the sampled waypoints, %.
    pub coverage: f64,
    /// Waypoints needed to reach the coverage target; `None` if the capped
    /// run never got there.
    pub samples_to_85: Option<usize>,
    pub samples_pct: f64,
    /// % of filtered detections farther than ε + r from every injected voxel.
    pub false_positive_rate: f64,
    pub clusters: usize,
    pub recon_ms: f64,
    pub validate_ms: f64,
}

/// Median and interquartile range; `None` marks an unbounded value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

impl Spread {
    /// Linear-interpolation quantiles; infinities sort last.
    pub fn of(values: &[f64]) -> Spread {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let finite = |x: f64| x.is_finite().then_some(x);
        Spread {
            median: quantile(&v, 0.5).and_then(finite),
            q1: quantile(&v, 0.25).and_then(finite),
            q3: quantile(&v, 0.75).and_then(finite),
        }
    }
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 || sorted[lo] == sorted[hi] {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: BenchStrategy,
    pub budget_pct: f64,
    pub runs: usize,
    pub detection_rate: Spread,
    pub injected_detection_rate: Spread,
    pub coverage: Spread,
    pub samples_to_85: Spread,
    pub samples_pct: Spread,
    pub false_positive_rate: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub samples: Vec<usize>,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub strategy: BenchStrategy,
    pub policy_seed: u64,
    pub episode_coverage: Vec<f64>,
    pub selected_after: Option<usize>,
    pub train_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub strategy: Option<BenchStrategy>,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResults {
    pub rows: Vec<Metrics>,
    pub summary: Vec<Summary>,
    /// Median coverage against sample count per strategy (capped runs).
    pub curves: BTreeMap<String, Curve>,
    pub training: Vec<TrainingRecord>,
    pub failures: Vec<BenchFailure>,
}

/// Trained policies per RL variant, indexed like `BenchConfig::policy_seeds`.
pub type Policies = BTreeMap<BenchStrategy, Vec<QNetwork>>;

/// Trains every RL variant in `cfg.strategies` on the training worlds.
pub fn train_policies(cfg: &BenchConfig) -> Result<(Policies, Vec<TrainingRecord>)> {
    let mut policies = Policies::new();
    let mut records = Vec::new();
    let variants: BTreeSet<BenchStrategy> = cfg.strategies.iter().copied().filter(|s| s.is_rl()).collect();
    if variants.is_empty() {
        return Ok((policies, records));
    }
    let scenes = cfg
        .training_worlds
        .iter()
        .map(|&seed| Scene::build(&WorldSpec { seed, ..cfg.fixture.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let envs: Vec<ExploreEnv<'_>> = scenes
        .iter()
        .map(|sc| ExploreEnv::for_reach(&sc.rec.graph, &sc.field_reach, &sc.rec.reach, sc.rewards()))
        .collect();
    for variant in variants {
        let tcfg = cfg.train_config(variant);
        for &pseed in &cfg.policy_seeds {
            let start = Instant::now();
            let (net, log): (QNetwork, TrainLog) = train(&envs, &tcfg, pseed)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            log::info!("trained {variant} (seed {pseed}) in {:.1} s", ms / 1e3);
            records.push(TrainingRecord {
                strategy: variant,
                policy_seed: pseed,
                episode_coverage: log.coverages(),
                selected_after: log.selected,
                train_ms: if cfg.deterministic { 0.0 } else { ms },
            });
            policies.entry(variant).or_default().push(net);
        }
    }
    Ok((policies, records))
}

/// Runs the benchmark, training RL policies first unless supplied.
pub fn run_benchmark(cfg: &BenchConfig, policies: Option<Policies>) -> Result<BenchResults> {
    cfg.validate()?;
    let (policies, training) = match policies {
        Some(p) => (p, Vec::new()),
        None => train_policies(cfg)?,
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut traces: BTreeMap<BenchStrategy, Vec<Vec<f64>>> = BTreeMap::new();
    let mut cap_max = 0usize;

    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let spec = WorldSpec { seed, ..cfg.fixture.clone() };
        let scene = match Scene::build(&spec) {
            Ok(s) => s,
            Err(e) => {
                failures.push(BenchFailure { strategy: None, seed: Some(seed), error: e.to_string() });
                continue;
            }
        };
        let vcfg = cfg.validation_for(&spec);
        let baseline = match SeedBaseline::new(&scene, vcfg, seed) {
            Ok(b) => b,
            Err(e) => {
                failures.push(BenchFailure { strategy: None, seed: Some(seed), error: e.to_string() });
                continue;
            }
        };
        cap_max = cap_max.max(baseline.cap(cfg.efficiency_cap));
        for &strategy in &cfg.strategies {
            let policy = if strategy.is_rl() {
                policies.get(&strategy).and_then(|p| (!p.is_empty()).then(|| &p[i % p.len()]))
            } else {
                None
            };
            let outcome = run_one(cfg, &scene, &baseline, vcfg, strategy, seed, policy);
            match outcome {
                Ok((mut r, coverage_trace)) => {
                    rows.append(&mut r);
                    traces.entry(strategy).or_default().push(coverage_trace);
                }
                Err(e) => failures.push(BenchFailure { strategy: Some(strategy), seed: Some(seed), error: e.to_string() }),
            }
        }
    }
    let summary = summarize(&rows, cfg);
    let curves = traces
        .into_iter()
        .map(|(s, t)| (s.to_string(), coverage_curve(&t, cap_max)))
        .collect();
    Ok(BenchResults { rows, summary, curves, training, failures })
}

/// Per-seed reference data: the exhaustive run and the injected truth.
struct SeedBaseline {
    reference_clusters: Vec<BTreeSet<VoxelIndex>>,
    truth: Vec<BTreeSet<VoxelIndex>>,
    truth_index: KdTree<usize>,
    band: f64,
    tau: usize,
    exhaustive_samples: usize,
}

impl SeedBaseline {
    fn new(scene: &Scene, vcfg: ValidationConfig, seed: u64) -> Result<Self> {
        let inputs = scene.inputs(&scene.defective, vcfg);
        let exhaustive = run_validation(&inputs, StrategyKind::Bfs, Budget::Exhaustive, seed, None, serde_json::Value::Null)?;
        let reference_clusters = exhaustive
            .report
            .clusters
            .iter()
            .map(|c| {
                exhaustive
                    .report
                    .defects
                    .iter()
                    .filter(|d| d.cluster_id == Some(c.id))
                    .map(|d| d.voxel)
                    .collect()
            })
            .collect();
        let frame = *scene.rec.grid.frame();
        let truth: Vec<BTreeSet<VoxelIndex>> = scene.truth.per_injection.iter().map(|v| v.iter().copied().collect()).collect();
        let points = truth
            .iter()
            .enumerate()
            .flat_map(|(k, set)| set.iter().map(move |&v| (frame.center(v), k)))
            .collect();
        Ok(SeedBaseline {
            reference_clusters,
            truth,
            truth_index: KdTree::build(points),
            band: vcfg.epsilon + scene.rec.graph.radius(),
            tau: vcfg.tau,
            exhaustive_samples: scene.rec.reach.len(),
        })
    }

    fn cap(&self, factor: f64) -> usize {
        (self.exhaustive_samples as f64 * factor).ceil() as usize
    }

    fn budget(&self, pct: f64) -> Budget {
        if pct >= 100.0 {
            Budget::Exhaustive
        } else {
            // The start node counts as a sample.
            let samples = (pct / 100.0 * self.exhaustive_samples as f64).round() as usize;
            Budget::Steps(samples.saturating_sub(1))
        }
    }
}

fn run_one(
    cfg: &BenchConfig,
    scene: &Scene,
    base: &SeedBaseline,
    vcfg: ValidationConfig,
    strategy: BenchStrategy,
    seed: u64,
    policy: Option<&QNetwork>,
) -> Result<(Vec<Metrics>, Vec<f64>)> {
    let env = ExploreEnv::for_reach(&scene.rec.graph, &scene.field_reach, &scene.rec.reach, scene.rewards());
    let long = run_strategy(&env, strategy.kind(), base.cap(cfg.efficiency_cap), seed, policy)?;
    let samples_to = long.samples_to(cfg.coverage_target);
    let inputs = scene.inputs(&scene.defective, vcfg);
    let frame = *scene.rec.grid.frame();
    let mut rows = Vec::new();
    for &pct in &cfg.budgets {
        let run: ValidationRun = run_validation(&inputs, strategy.kind(), base.budget(pct), seed, policy, serde_json::Value::Null)?;
        let flagged: BTreeSet<VoxelIndex> = run.report.defects.iter().map(|d| d.voxel).collect();
        let detected = base.reference_clusters.iter().filter(|c| c.iter().any(|v| flagged.contains(v))).count();
        let detection_rate = percent(detected, base.reference_clusters.len());

        let mut hit = vec![false; base.truth.len()];
        let mut outside = 0usize;
        for d in &run.report.defects {
            let near = base.truth_index.within(frame.center(d.voxel), base.band);
            if near.is_empty() {
                outside += 1;
            }
            for k in near {
                hit[k] = true;
            }
        }
        let significant: Vec<usize> = (0..base.truth.len()).filter(|&k| base.truth[k].len() >= base.tau).collect();
        let injected_detection_rate = percent(significant.iter().filter(|&&k| hit[k]).count(), significant.len());
        let false_positive_rate = if run.report.defects.is_empty() {
            0.0
        } else {
            percent(outside, run.report.defects.len())
        };
        rows.push(Metrics {
            strategy,
            seed,
            budget_pct: pct,
            detection_rate,
            injected_detection_rate,
            coverage: 100.0 * run.report.metrics.coverage,
            samples_to_85: samples_to,
            samples_pct: (100.0 * run.waypoints.len() as f64 / base.exhaustive_samples.max(1) as f64).min(100.0),
            false_positive_rate,
            clusters: run.report.metrics.clusters,
            recon_ms: if cfg.deterministic { 0.0 } else { scene.rec.elapsed_ms },
            validate_ms: if cfg.deterministic { 0.0 } else { run.elapsed_ms },
        });
    }
    Ok((rows, long.coverage))
}

/// Percentage, 100 when the denominator is zero (nothing to find).
fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn summarize(rows: &[Metrics], cfg: &BenchConfig) -> Vec<Summary> {
    let mut out = Vec::new();
    for &strategy in &cfg.strategies {
        for &pct in &cfg.budgets {
            let group: Vec<&Metrics> = rows.iter().filter(|r| r.strategy == strategy && r.budget_pct == pct).collect();
            if group.is_empty() {
                continue;
            }
            let spread = |f: &dyn Fn(&Metrics) -> f64| Spread::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            out.push(Summary {
                strategy,
                budget_pct: pct,
                runs: group.len(),
                detection_rate: spread(&|r| r.detection_rate),
                injected_detection_rate: spread(&|r| r.injected_detection_rate),
                coverage: spread(&|r| r.coverage),
                samples_to_85: spread(&|r| r.samples_to_85.map_or(f64::INFINITY, |s| s as f64)),
                samples_pct: spread(&|r| r.samples_pct),
                false_positive_rate: spread(&|r| r.false_positive_rate),
            });
        }
    }
    out
}

const CURVE_POINTS: usize = 50;

fn coverage_curve(traces: &[Vec<f64>], cap: usize) -> Curve {
    let samples: Vec<usize> = (0..=CURVE_POINTS).map(|k| 1 + k * cap.max(1) / CURVE_POINTS).collect();
    let mut curve = Curve {
        samples: samples.clone(),
        median: Vec::new(),
        q1: Vec::new(),
        q3: Vec::new(),
    };
    for &n in &samples {
        // A trace shorter than n has stopped; it keeps its final value.
        let mut v: Vec<f64> = traces.iter().filter_map(|t| t.get(n - 1).or(t.last()).copied()).collect();
        v.sort_by(f64::total_cmp);
        curve.median.push(quantile(&v, 0.5).unwrap_or(0.0));
        curve.q1.push(quantile(&v, 0.25).unwrap_or(0.0));
        curve.q3.push(quantile(&v, 0.75).unwrap_or(0.0));
    }
    curve
}

#[derive(Debug, Serialize)]
struct CsvRow {
    strategy: String,
    seed: u64,
    budget_pct: f64,
    detection_rate: f64,
    coverage: f64,
    samples_to_85: Option<usize>,
    false_positive_rate: f64,
    recon_ms: f64,
    validate_ms: f64,
}

impl BenchResults {
    /// Per-run metrics; an empty `samples_to_85` means the target was not reached.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                strategy: r.strategy.to_string(),
                seed: r.seed,
                budget_pct: r.budget_pct,
                detection_rate: r.detection_rate,
                coverage: r.coverage,
                samples_to_85: r.samples_to_85,
                false_positive_rate: r.false_positive_rate,
                recon_ms: r.recon_ms,
                validate_ms: r.validate_ms,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Coverage curves, sample-efficiency medians and training curves.
    pub fn plot_data(&self) -> serde_json::Value {
        let efficiency: BTreeMap<String, Option<f64>> = self
            .summary
            .iter()
            .filter(|s| s.budget_pct == self.summary.iter().map(|x| x.budget_pct).fold(0.0, f64::max))
            .map(|s| (s.strategy.to_string(), s.samples_to_85.median))
            .collect();
        serde_json::json!({
            "coverage_curves": self.curves,
            "samples_to_85_median": efficiency,
            "training": self.training,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    /// Median of the samples-to-target column over seeds for one strategy.
    pub fn median_samples_to_85(&self, strategy: BenchStrategy) -> Option<f64> {
        self.summary.iter().find(|s| s.strategy == strategy).and_then(|s| s.samples_to_85.median)
    }

    /// Fixed-width summary table, one line per (strategy, budget).
    pub fn table(&self) -> String {
        let fmt = |s: &Spread| match (s.median, s.q1, s.q3) {
            (Some(m), Some(a), Some(b)) => format!("{m:.1} [{a:.1}-{b:.1}]"),
            (Some(m), _, _) => format!("{m:.1}"),
            _ => "-".to_string(),
        };
        let mut out = format!(
            "{:<16} {:>6} {:>4}  {:<22} {:<22} {:<22} {:<22}\n",
            "strategy", "budget", "runs", "detection %", "coverage %", "samples to 85%", "false pos %"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<16} {:>5}% {:>4}  {:<22} {:<22} {:<22} {:<22}",
                s.strategy.to_string(),
                s.budget_pct,
                s.runs,
                fmt(&s.detection_rate),
                fmt(&s.coverage),
                fmt(&s.samples_to_85),
                fmt(&s.false_positive_rate),
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed: {:?} seed {:?}: {}", f.strategy.map(|s| s.to_string()), f.seed, f.error);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&[], 0.5), None);
        let s = Spread::of(&[3.0, f64::INFINITY, 1.0]);
        assert_eq!(s.median, Some(3.0));
        assert_eq!(s.q3, None);
    }

    #[test]
    fn strategy_names_round_trip() {
        for name in ["random", "random-teleport", "bfs", "dfs", "heuristic", "rl", "rl-uniform"] {
            let s: BenchStrategy = name.parse().unwrap();
            assert_eq!(s.to_string(), name);
        }
        assert!("greedy".parse::<BenchStrategy>().is_err());
    }

    #[test]
    fn budgets_map_to_samples() {
        let base = SeedBaseline {
            reference_clusters: Vec::new(),
            truth: Vec::new(),
            truth_index: KdTree::build(Vec::new()),
            band: 1.0,
            tau: 3,
            exhaustive_samples: 200,
        };
        assert_eq!(base.budget(25.0), Budget::Steps(49));
        assert_eq!(base.budget(100.0), Budget::Exhaustive);
    }
}
