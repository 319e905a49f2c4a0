//! Exploration MDP over the walk graph: state features, the directional step
//! rule, rewards, and the exploration strategies.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use glam::{DVec2, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::ImportanceField;
use crate::rl::QNetwork;
use crate::walk::{ReachableSet, WalkGraph};

pub const STATE_DIM: usize = 9;
pub const ACTION_COUNT: usize = 8;
/// Steps without reward that saturate the stagnation feature.
pub const K_STAG: usize = 50;
/// Path hops looked ahead when aiming the guidance direction.
pub const GUIDE_LOOKAHEAD: usize = 1;
/// Chance of a uniform action when rolling out a trained policy; it breaks
/// the short cycles an imperfect greedy policy can fall into.
pub const RL_EVAL_EPSILON: f64 = 0.02;
pub const HEURISTIC_HORIZON: usize = 30;

/// Compass moves N, NE, E, SE, S, SW, W, NW as unit 2D vectors.
pub fn action_direction(a: usize) -> DVec2 {
    const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
    [
        DVec2::new(0.0, 1.0),
        DVec2::new(D, D),
        DVec2::new(1.0, 0.0),
        DVec2::new(D, -D),
        DVec2::new(0.0, -1.0),
        DVec2::new(-D, -D),
        DVec2::new(-1.0, 0.0),
        DVec2::new(-D, D),
    ][a]
}

/// Neighbor best aligned with the action direction; ties within 1e-12 go to
/// the lowest id, and an isolated node stays put.
pub fn step(graph: &WalkGraph, current: u32, action: usize) -> u32 {
    let d = action_direction(action);
    let here = graph.center(current).truncate();
    let mut best: Option<(f64, u32)> = None;
    for &n in graph.neighbors(current) {
        let dir = (graph.center(n).truncate() - here).normalize_or_zero();
        let score = d.dot(dir);
        if best.is_none_or(|(b, _)| score > b + 1e-12) {
            best = Some((score, n));
        }
    }
    best.map_or(current, |(_, n)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda_step: f64,
    pub p_revisit: f64,
}

impl RewardParams {
    /// Default penalties scaled by the largest importance value.
    pub fn scaled(max_importance: f64) -> Self {
        let unit = if max_importance > 0.0 { max_importance } else { 1.0 };
        RewardParams {
            lambda_step: 0.01 * unit,
            p_revisit: 0.25 * unit,
        }
    }
}

/// First-visit importance minus step and revisit penalties.
pub fn reward(field: &ImportanceField, next: u32, visited: &[bool], p: &RewardParams) -> f64 {
    let seen = visited[next as usize];
    let gain = if seen { 0.0 } else { field.value(next) };
    gain - p.lambda_step - if seen { p.p_revisit } else { 0.0 }
}

/// Immutable exploration environment: graph, importance over the reachable
/// set, start node and reward parameters.
#[derive(Debug, Clone)]
pub struct ExploreEnv<'a> {
    pub graph: &'a WalkGraph,
    pub field: &'a ImportanceField,
    pub start: u32,
    pub rewards: RewardParams,
    diameter: f64,
    important: Vec<u32>,
    domain: Vec<u32>,
}

impl<'a> ExploreEnv<'a> {
    pub fn new(graph: &'a WalkGraph, field: &'a ImportanceField, start: u32, rewards: RewardParams) -> Self {
        let domain: Vec<u32> = (0..graph.len() as u32).filter(|&id| field.in_domain(id)).collect();
        let important = domain.iter().copied().filter(|&id| field.value(id) > 0.0).collect();
        let (lo, hi) = domain.iter().fold(
            (DVec3::splat(f64::INFINITY), DVec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), &id| (lo.min(graph.center(id)), hi.max(graph.center(id))),
        );
        let diameter = if domain.is_empty() { 0.0 } else { lo.distance(hi) };
        ExploreEnv {
            graph,
            field,
            start,
            rewards,
            diameter: diameter.max(graph.frame().resolution),
            important,
            domain,
        }
    }

    /// Environment over a reachable set with importance restricted to it.
    pub fn for_reach(graph: &'a WalkGraph, field: &'a ImportanceField, reach: &ReachableSet, rewards: RewardParams) -> Self {
        debug_assert!((0..graph.len() as u32).all(|id| !field.in_domain(id) || reach.contains(id)));
        ExploreEnv::new(graph, field, reach.seed(), rewards)
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Nodes of the exploration domain, sorted.
    pub fn domain(&self) -> &[u32] {
        &self.domain
    }
}

/// Waypoints `v_0..v_n` with per-step rewards and coverage after each waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<u32>,
    pub rewards: Vec<f64>,
    pub coverage: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage.last().copied().unwrap_or(0.0)
    }

    /// Distinct waypoints, sorted.
    pub fn distinct(&self) -> Vec<u32> {
        let mut ids = self.waypoints.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Number of waypoints needed to reach `target` coverage.
    pub fn samples_to(&self, target: f64) -> Option<usize> {
        self.coverage.iter().position(|&c| c >= target - 1e-12).map(|k| k + 1)
    }

    pub fn to_jsonl(&self, graph: &WalkGraph) -> String {
        let mut out = String::new();
        for (k, &id) in self.waypoints.iter().enumerate() {
            let i = graph.index(id);
            let reward = if k == 0 { 0.0 } else { self.rewards[k - 1] };
            let line = serde_json::json!({
                "step": k,
                "voxel": [i.x, i.y, i.z],
                "reward": reward,
                "coverage": self.coverage[k],
            });
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn save_jsonl(&self, graph: &WalkGraph, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl(graph)).map_err(|e| Error::io(path, e))
    }
}

/// Reusable breadth-first search buffers; a generation stamp marks the
/// nodes seen by the current search so nothing is cleared between calls.
#[derive(Debug, Clone, Default)]
struct Search {
    stamp: Vec<u32>,
    generation: u32,
    parent: Vec<u32>,
    depth: Vec<u32>,
    queue: VecDeque<u32>,
}

impl Search {
    fn begin(&mut self, n: usize, start: u32) {
        if self.stamp.len() != n || self.generation == u32::MAX {
            self.stamp = vec![0; n];
            self.parent = vec![0; n];
            self.depth = vec![0; n];
            self.generation = 0;
        }
        self.generation += 1;
        self.queue.clear();
        self.visit(start, start, 0);
    }

    fn seen(&self, id: u32) -> bool {
        self.stamp[id as usize] == self.generation
    }

    fn visit(&mut self, id: u32, parent: u32, depth: u32) {
        self.stamp[id as usize] = self.generation;
        self.parent[id as usize] = parent;
        self.depth[id as usize] = depth;
        self.queue.push_back(id);
    }

    fn expand(&mut self, graph: &WalkGraph, id: u32) {
        let d = self.depth[id as usize] + 1;
        for &m in graph.neighbors(id) {
            if !self.seen(m) {
                self.visit(m, id, d);
            }
        }
    }

    /// Node path from the search start to `target`.
    fn path_to(&self, target: u32) -> Vec<u32> {
        let mut path = vec![target];
        loop {
            let last = *path.last().unwrap();
            let p = self.parent[last as usize];
            if p == last {
                break;
            }
            path.push(p);
        }
        path.reverse();
        path
    }
}

/// Mutable state of one episode.
#[derive(Debug, Clone)]
pub struct Episode<'e, 'a> {
    env: &'e ExploreEnv<'a>,
    current: u32,
    visited: Vec<bool>,
    visited_in_domain: usize,
    covered: f64,
    steps_since_reward: usize,
    /// Whether the last move reached a node for the first time.
    arrived_fresh: bool,
    /// Unvisited important nodes.
    remaining: usize,
    traj: Trajectory,
    search: RefCell<Search>,
}

impl<'e, 'a> Episode<'e, 'a> {
    pub fn new(env: &'e ExploreEnv<'a>) -> Self {
        Episode::starting_at(env, env.start)
    }

    pub fn starting_at(env: &'e ExploreEnv<'a>, start: u32) -> Self {
        let mut ep = Episode {
            env,
            current: start,
            visited: vec![false; env.graph.len()],
            visited_in_domain: 0,
            covered: 0.0,
            steps_since_reward: 0,
            arrived_fresh: true,
            remaining: env.important.len(),
            traj: Trajectory {
                waypoints: Vec::new(),
                rewards: Vec::new(),
                coverage: Vec::new(),
            },
            search: RefCell::default(),
        };
        ep.mark(start);
        ep.traj.waypoints.push(start);
        ep.traj.coverage.push(ep.coverage());
        ep
    }

    fn mark(&mut self, id: u32) {
        if self.visited[id as usize] {
            return;
        }
        self.visited[id as usize] = true;
        if self.env.field.in_domain(id) {
            self.visited_in_domain += 1;
            self.covered += self.env.field.value(id);
            if self.env.field.value(id) > 0.0 {
                self.remaining -= 1;
            }
        }
    }

    pub fn current(&self) -> u32 {
        self.current
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    pub fn steps_since_reward(&self) -> usize {
        self.steps_since_reward
    }

    /// Number of unvisited important nodes.
    pub fn remaining_important(&self) -> usize {
        self.remaining
    }

    fn is_pending(&self, id: u32) -> bool {
        !self.visited[id as usize] && self.env.field.in_domain(id) && self.env.field.value(id) > 0.0
    }

    /// Importance coverage, falling back to the spatial fraction of the domain.
    pub fn coverage(&self) -> f64 {
        let f = self.env.field;
        if f.total() > 0.0 {
            (self.covered / f.total()).min(1.0)
        } else if f.domain_len() > 0 {
            self.visited_in_domain as f64 / f.domain_len() as f64
        } else {
            0.0
        }
    }

    fn importance_coverage(&self) -> f64 {
        let t = self.env.field.total();
        if t > 0.0 {
            (self.covered / t).min(1.0)
        } else {
            0.0
        }
    }

    /// Moves to `next` and returns the reward.
    pub fn advance(&mut self, next: u32) -> f64 {
        let r = reward(self.env.field, next, &self.visited, &self.env.rewards);
        self.arrived_fresh = !self.visited[next as usize];
        let gained = self.arrived_fresh && self.env.field.value(next) > 0.0;
        self.steps_since_reward = if gained { 0 } else { self.steps_since_reward + 1 };
        self.mark(next);
        self.current = next;
        self.traj.waypoints.push(next);
        self.traj.rewards.push(r);
        self.traj.coverage.push(self.coverage());
        r
    }

    /// Walk-graph guidance toward the unvisited important node fewest hops
    /// away (ties by breadth-first order): the target, the unit horizontal
    /// direction toward the path node `GUIDE_LOOKAHEAD` hops ahead, and the
    /// path length in metres.
    pub fn guidance(&self) -> Option<(u32, DVec2, f64)> {
        if self.remaining == 0 {
            return None;
        }
        let graph = self.env.graph;
        let start = self.current;
        let mut search = self.search.borrow_mut();
        search.begin(graph.len(), start);
        let mut target = None;
        while let Some(id) = search.queue.pop_front() {
            if id != start && self.is_pending(id) {
                target = Some(id);
                break;
            }
            search.expand(graph, id);
        }
        let target = target?;
        let path = search.path_to(target);
        let length: f64 = path.windows(2).map(|w| graph.center(w[0]).distance(graph.center(w[1]))).sum();
        let aim = path[GUIDE_LOOKAHEAD.min(path.len() - 1)];
        let dir = (graph.center(aim).truncate() - graph.center(start).truncate()).normalize_or_zero();
        Some((target, dir, length))
    }

    pub fn features(&self) -> [f64; STATE_DIM] {
        encode_state(self)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }
}

/// Nine features, all in [-1, 1]: importance collected on arriving at the
/// current node, coverage, mean and max first-visit importance over the
/// neighbors, unvisited important neighbors / 8, stagnation, unit
/// walk-graph guidance toward the nearest unvisited important node (see
/// [`Episode::guidance`]) and its path length over
/// the domain diameter.
pub fn encode_state(ep: &Episode<'_, '_>) -> [f64; STATE_DIM] {
    let env = ep.env;
    let imax = env.field.max();
    let norm = |v: f64| if imax > 0.0 { v / imax } else { 0.0 };
    let cur = ep.current;
    let nbrs = env.graph.neighbors(cur);
    let (mut sum, mut max, mut fresh) = (0.0, 0.0f64, 0usize);
    // Neighbor statistics use first-visit importance: what is still collectable.
    for &n in nbrs {
        if ep.visited[n as usize] {
            continue;
        }
        let i = env.field.value(n);
        sum += i;
        max = max.max(i);
        if i > 0.0 {
            fresh += 1;
        }
    }
    let mean = if nbrs.is_empty() { 0.0 } else { sum / nbrs.len() as f64 };
    let (dir, dist) = match ep.guidance() {
        Some((_, dir, length)) => (dir, (length / env.diameter).min(1.0)),
        None => (DVec2::ZERO, 1.0),
    };
    let here = if ep.arrived_fresh { env.field.value(cur) } else { 0.0 };
    [
        norm(here),
        ep.importance_coverage(),
        norm(mean),
        norm(max),
        (fresh as f64 / 8.0).min(1.0),
        (ep.steps_since_reward as f64 / K_STAG as f64).min(1.0),
        dir.x,
        dir.y,
        dist,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    RandomTeleport,
    Bfs,
    Dfs,
    Heuristic,
    Rl,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Random,
        StrategyKind::RandomTeleport,
        StrategyKind::Bfs,
        StrategyKind::Dfs,
        StrategyKind::Heuristic,
        StrategyKind::Rl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::RandomTeleport => "random-teleport",
            StrategyKind::Bfs => "bfs",
            StrategyKind::Dfs => "dfs",
            StrategyKind::Heuristic => "heuristic",
            StrategyKind::Rl => "rl",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-episode rng stream derived from a master seed.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Runs one strategy for `budget` steps from the environment start.
///
/// Random walks pick uniform actions; `random-teleport` samples domain
/// nodes uniformly; BFS and DFS enumerate nodes in traversal order (so their
/// waypoints need not be graph neighbors); the heuristic walks greedily
/// toward the most important unvisited node within the horizon; RL follows
/// the policy's greedy action.
pub fn run_strategy(
    env: &ExploreEnv<'_>,
    kind: StrategyKind,
    budget: usize,
    seed: u64,
    policy: Option<&QNetwork>,
) -> Result<Trajectory> {
    let mut ep = Episode::new(env);
    let mut rng = episode_rng(seed, 0);
    match kind {
        StrategyKind::Random => {
            for _ in 0..budget {
                let a = rng.gen_range(0..ACTION_COUNT);
                ep.advance(step(env.graph, ep.current(), a));
            }
        }
        StrategyKind::RandomTeleport => {
            if !env.domain.is_empty() {
                for _ in 0..budget {
                    let id = env.domain[rng.gen_range(0..env.domain.len())];
                    ep.advance(id);
                }
            }
        }
        StrategyKind::Bfs | StrategyKind::Dfs => {
            let order = traversal_order(env.graph, env.start, kind == StrategyKind::Dfs);
            for &id in order.iter().skip(1).take(budget) {
                ep.advance(id);
            }
        }
        StrategyKind::Heuristic => {
            for _ in 0..budget {
                let next = heuristic_next(&ep, HEURISTIC_HORIZON);
                ep.advance(next);
            }
        }
        StrategyKind::Rl => {
            let net = policy.ok_or_else(|| Error::Policy("rl strategy needs a trained policy".into()))?;
            net.check_input(STATE_DIM)?;
            policy_rollout(&mut ep, net, budget, RL_EVAL_EPSILON, &mut rng);
        }
    }
    Ok(ep.into_trajectory())
}

/// Follows `net` for `steps` moves, taking a uniform action with
/// probability `epsilon`.
pub fn policy_rollout(ep: &mut Episode<'_, '_>, net: &QNetwork, steps: usize, epsilon: f64, rng: &mut ChaCha8Rng) {
    for _ in 0..steps {
        let a = if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            rng.gen_range(0..ACTION_COUNT)
        } else {
            net.greedy_action(&ep.features())
        };
        ep.advance(step(ep.env.graph, ep.current(), a));
    }
}

/// Breadth- or depth-first preorder from `start`, neighbors in id order.
pub fn traversal_order(graph: &WalkGraph, start: u32, depth_first: bool) -> Vec<u32> {
    let mut seen = vec![false; graph.len()];
    let mut order = Vec::new();
    if depth_first {
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id as usize], true) {
                continue;
            }
            order.push(id);
            stack.extend(graph.neighbors(id).iter().rev().filter(|&&n| !seen[n as usize]));
        }
    } else {
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for &n in graph.neighbors(id) {
                if !std::mem::replace(&mut seen[n as usize], true) {
                    queue.push_back(n);
                }
            }
        }
    }
    order
}

/// Next hop toward the most important unvisited node within `horizon` graph
/// hops (ties by hop distance, then id). Beyond the horizon it heads to the
/// nearest unvisited important node, then to the nearest unvisited node.
pub fn heuristic_next(ep: &Episode<'_, '_>, horizon: usize) -> u32 {
    let graph = ep.env.graph;
    let field = ep.env.field;
    let start = ep.current();
    let horizon = horizon.min(u32::MAX as usize) as u32;
    let mut search = ep.search.borrow_mut();
    search.begin(graph.len(), start);
    // (importance, depth, id) of the best in-horizon candidate.
    let mut best: Option<(f64, u32, u32)> = None;
    // Shallowest (depth, id) beyond the horizon, and shallowest unvisited node.
    let mut nearest: Option<(u32, u32)> = None;
    let mut fallback: Option<(u32, u32)> = None;
    while let Some(id) = search.queue.pop_front() {
        let d = search.depth[id as usize];
        // Breadth-first order: every node shallower than `d` has been seen.
        let done = (best.is_some() && d > horizon)
            || nearest.is_some_and(|(nd, _)| d > nd)
            || (ep.remaining == 0 && fallback.is_some_and(|(fd, _)| d > fd));
        if done {
            break;
        }
        if ep.is_pending(id) {
            let i = field.value(id);
            if d <= horizon {
                if best.is_none_or(|(bi, bd, bid)| i > bi || (i == bi && (d, id) < (bd, bid))) {
                    best = Some((i, d, id));
                }
            } else if nearest.is_none_or(|n| (d, id) < n) {
                nearest = Some((d, id));
            }
        }
        if !ep.visited[id as usize] && field.in_domain(id) && fallback.is_none_or(|f| (d, id) < f) {
            fallback = Some((d, id));
        }
        search.expand(graph, id);
    }
    let target = best.map(|(_, _, id)| id).or(nearest.map(|n| n.1)).or(fallback.map(|f| f.1));
    match target {
        Some(t) => search.path_to(t)[1],
        None => start,
    }
}
