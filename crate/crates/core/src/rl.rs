//! Q-network with manual backpropagation, double-Q targets, prioritized
//! replay and the training loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{episode_rng, policy_rollout, step, Episode, ExploreEnv, ACTION_COUNT, STATE_DIM};

pub const POLICY_FORMAT: &str = "NAVVOX-POLICY v1";

/// Fully connected network with ReLU hidden layers and a linear output.
/// Weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs; `acts[0]` is the state, the last entry the output.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }
}

impl QNetwork {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&n| n > 0), "bad architecture {sizes:?}");
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        QNetwork {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// He-uniform hidden layers; the output layer is scaled down so initial
    /// values start near zero.
    pub fn random(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = QNetwork::zeros(sizes);
        let last = net.weights.len() - 1;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let fan_in = sizes[l] as f64;
            let mut lim = (6.0 / fan_in).sqrt();
            if l == last {
                lim *= 0.1;
            }
            for x in w.iter_mut() {
                *x = rng.gen_range(-lim..lim);
            }
        }
        net
    }

    pub fn default_architecture() -> Vec<usize> {
        vec![STATE_DIM, 64, 64, ACTION_COUNT]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn check_input(&self, d: usize) -> Result<()> {
        if d != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: d,
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, s: &[f64]) -> Result<ForwardCache> {
        self.check_input(s.len())?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(s.to_vec());
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            let w = &self.weights[l];
            let mut y = self.biases[l].clone();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                y[o] += dot(row, x);
                if l < last {
                    y[o] = y[o].max(0.0);
                }
            }
            acts.push(y);
        }
        Ok(ForwardCache { acts })
    }

    /// Action values for state `s`.
    pub fn q_forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(s)?.acts.pop().unwrap())
    }

    /// Argmax action, ties to the lowest index. Panics on a wrong input size.
    pub fn greedy_action(&self, s: &[f64]) -> usize {
        argmax(&self.q_forward(s).expect("state dimension checked by caller"))
    }

    /// Accumulates `scale * d(out)/d(params)` contracted with `d_out` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut QNetwork) {
        let mut delta = d_out.to_vec();
        for l in (0..self.weights.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &cache.acts[l];
            let gw = &mut grad.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad.biases[l][o] += d;
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // ReLU derivative from the stored post-activation.
            for (p, a) in prev.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_json(&self) -> String {
        let doc = PolicyFile {
            format: POLICY_FORMAT.to_string(),
            layers: self.sizes.clone(),
            activation: "relu".to_string(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        serde_json::to_string(&doc).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Policy(format!("unreadable policy: {e}")))?;
        if doc.format != POLICY_FORMAT {
            return Err(Error::Policy(format!("unsupported policy format `{}`", doc.format)));
        }
        if doc.activation != "relu" || doc.layers.len() < 2 || doc.layers.contains(&0) {
            return Err(Error::Policy("unsupported architecture".into()));
        }
        let mut net = QNetwork::zeros(&doc.layers);
        let shapes_ok = doc.weights.len() == net.weights.len()
            && doc.biases.len() == net.biases.len()
            && doc.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && doc.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len());
        if !shapes_ok {
            return Err(Error::Policy("parameter arrays do not match the architecture".into()));
        }
        net.weights = doc.weights;
        net.biases = doc.biases;
        if !net.is_finite() {
            return Err(Error::Policy("non-finite parameters".into()));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    layers: Vec<usize>,
    activation: String,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn save_policy(net: &QNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, net.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<QNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    QNetwork::from_json(&text)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
}

/// Guidance direction slots of the state vector.
const DIR_X: usize = 6;
const DIR_Y: usize = 7;

impl Transition {
    /// Image under element `g` of the square's symmetry group: `g % 4`
    /// quarter turns counter-clockwise, then a mirror in x when `g >= 4`.
    /// Only the guidance direction and the action change.
    pub fn transformed(&self, g: u8) -> Transition {
        let map_state = |s: &[f64]| {
            let mut s = s.to_vec();
            if s.len() > DIR_Y {
                let (mut x, mut y) = (s[DIR_X], s[DIR_Y]);
                for _ in 0..g % 4 {
                    (x, y) = (-y, x);
                }
                if g >= 4 {
                    x = -x;
                }
                s[DIR_X] = x;
                s[DIR_Y] = y;
            }
            s
        };
        // Actions run clockwise from north in 45° steps.
        let mut a = (self.a + ACTION_COUNT * 2 - 2 * (g as usize % 4)) % ACTION_COUNT;
        if g >= 4 {
            a = (ACTION_COUNT - a) % ACTION_COUNT;
        }
        Transition {
            s: map_state(&self.s),
            a,
            r: self.r,
            s_next: map_state(&self.s_next),
            terminal: self.terminal,
        }
    }
}

/// Double-Q target: the online net picks the next action, the target net
/// evaluates it.
pub fn td_target(net: &QNetwork, target: &QNetwork, t: &Transition, gamma: f64) -> Result<f64> {
    if t.terminal {
        return Ok(t.r);
    }
    let a_star = argmax(&net.q_forward(&t.s_next)?);
    Ok(t.r + gamma * target.q_forward(&t.s_next)?[a_star])
}

/// `|y - Q(s, a)|` with the double-Q target `y`.
pub fn td_error(net: &QNetwork, target: &QNetwork, t: &Transition, gamma: f64) -> Result<f64> {
    let y = td_target(net, target, t, gamma)?;
    Ok((y - net.q_forward(&t.s)?[t.a]).abs())
}

/// Importance-weighted squared TD loss `mean_i w_i (Q(s_i,a_i) - y_i)^2 / 2`.
pub fn td_loss(net: &QNetwork, target: &QNetwork, batch: &[&Transition], weights: &[f64], gamma: f64) -> Result<f64> {
    let mut loss = 0.0;
    for (t, w) in batch.iter().zip(weights) {
        let y = td_target(net, target, t, gamma)?;
        let q = net.q_forward(&t.s)?[t.a];
        loss += w * 0.5 * (q - y) * (q - y);
    }
    Ok(loss / batch.len() as f64)
}

/// Loss, gradient with respect to the online parameters (targets held
/// fixed) and per-sample TD errors.
pub fn td_loss_gradient(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    weights: &[f64],
    gamma: f64,
) -> Result<(f64, QNetwork, Vec<f64>)> {
    td_loss_gradient_with_q(net, target, batch, weights, gamma).map(|(l, g, d, _)| (l, g, d))
}

/// As [`td_loss_gradient`], also returning the mean |Q(s, a)| of the batch.
pub(crate) fn td_loss_gradient_with_q(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    weights: &[f64],
    gamma: f64,
) -> Result<(f64, QNetwork, Vec<f64>, f64)> {
    let mut grad = QNetwork::zeros(&net.sizes);
    let mut loss = 0.0;
    let mut q_abs = 0.0;
    let mut deltas = Vec::with_capacity(batch.len());
    let n = batch.len() as f64;
    for (t, w) in batch.iter().zip(weights) {
        let y = td_target(net, target, t, gamma)?;
        let cache = net.forward_cached(&t.s)?;
        let q = cache.output()[t.a];
        q_abs += q.abs();
        loss += w * 0.5 * (q - y) * (q - y);
        deltas.push((y - q).abs());
        let mut d_out = vec![0.0; net.output_dim()];
        d_out[t.a] = w * (q - y) / n;
        net.backward(&cache, &d_out, &mut grad);
    }
    Ok((loss / n, grad, deltas, q_abs / n))
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Binary sum tree over leaf priorities.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, p: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = p;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `u` in `[0, total)`.
    fn find(&self, mut u: f64, len: usize) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        // Rounding can land on an empty slot past the end.
        (k - self.leaves).min(len - 1)
    }
}

/// FIFO replay with proportional prioritization `P(i) ∝ p_i^α`, where
/// `p_i = δ_i + ε_p` and new entries take the largest priority seen.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    priority_eps: f64,
    entries: Vec<Transition>,
    next: usize,
    max_priority: f64,
    tree: SumTree,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, priority_eps: f64) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            alpha,
            priority_eps,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            max_priority: 1.0,
            tree: SumTree::new(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.entries[i]
    }

    pub fn push(&mut self, t: Transition) {
        let slot = self.next;
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            self.entries[slot] = t;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (slot + 1) % self.capacity;
    }

    /// Sets raw priorities directly (before the exponent).
    pub fn set_priority(&mut self, i: usize, p: f64) {
        assert!(p > 0.0 && i < self.entries.len());
        self.max_priority = self.max_priority.max(p);
        self.tree.set(i, p.powf(self.alpha));
    }

    pub fn update_priorities(&mut self, indices: &[usize], deltas: &[f64]) {
        for (&i, &d) in indices.iter().zip(deltas) {
            self.set_priority(i, d.abs() + self.priority_eps);
        }
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// `n` independent draws with probability `P(i)` and importance weights
    /// `(N P(i))^-β` normalized by the batch maximum.
    pub fn sample(&self, n: usize, beta: f64, rng: &mut impl Rng) -> Result<Batch> {
        if self.entries.len() < n || n == 0 {
            return Err(Error::Underfull {
                len: self.entries.len(),
                needed: n,
            });
        }
        let total = self.tree.total();
        let len = self.entries.len();
        let indices: Vec<usize> = (0..n).map(|_| self.tree.find(rng.gen::<f64>() * total, len)).collect();
        let mut weights: Vec<f64> = indices
            .iter()
            .map(|&i| (len as f64 * self.probability(i)).powf(-beta))
            .collect();
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok(Batch { indices, weights })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub batch_size: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    pub target_sync_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_frac: f64,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub priority_eps: f64,
    /// Apply a random rotation/reflection of the square lattice to each
    /// sampled transition (guidance direction and action together).
    pub symmetry_augmentation: bool,
    /// Start each episode at a uniformly drawn domain node instead of the seed.
    pub random_starts: bool,
    /// Episodes between policy evaluations; the best evaluated parameters
    /// are returned. Zero returns the final parameters.
    pub eval_interval: usize,
    pub eval_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            lr: 1e-4,
            optimizer: Optimizer::Sgd { momentum: 0.9 },
            hidden: vec![64, 64],
            buffer_capacity: 30_000,
            episodes: 200,
            steps_per_episode: 500,
            batch_size: 64,
            train_every: 1,
            target_sync_interval: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_frac: 0.6,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            priority_eps: 1e-3,
            symmetry_augmentation: true,
            random_starts: true,
            eval_interval: 20,
            eval_epsilon: crate::explore::RL_EVAL_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && self.lr > 0.0
            && self.batch_size > 0
            && self.buffer_capacity >= self.batch_size
            && self.train_every > 0
            && self.target_sync_interval > 0
            && self.alpha >= 0.0
            && self.priority_eps > 0.0;
        if !ok {
            return Err(Error::Invalid(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&self.hidden);
        sizes.push(ACTION_COUNT);
        sizes
    }

    fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.epsilon_decay_frac * self.episodes as f64).max(1.0);
        let t = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }

    fn beta(&self, episode: usize) -> f64 {
        let t = if self.episodes > 1 {
            episode as f64 / (self.episodes - 1) as f64
        } else {
            1.0
        };
        self.beta_start + (self.beta_end - self.beta_start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_reward: f64,
    pub coverage: f64,
    pub mean_td_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeLog>,
    /// (episodes completed, mean evaluation coverage) per evaluation.
    pub evaluations: Vec<(usize, f64)>,
    /// Episodes completed when the returned parameters were evaluated.
    pub selected: Option<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,total_reward,coverage,mean_td_error\n");
        for e in &self.episodes {
            let _ = writeln!(out, "{},{},{},{}", e.episode, e.total_reward, e.coverage, e.mean_td_error);
        }
        out
    }

    pub fn coverages(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.coverage).collect()
    }
}

/// Online and target networks plus optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub online: QNetwork,
    pub target: QNetwork,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Learner {
    pub fn new(net: QNetwork) -> Self {
        let n = net.param_count();
        Learner {
            target: net.clone(),
            online: net,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn apply(&mut self, grad: &QNetwork, cfg: &TrainConfig) {
        let g = grad.params();
        let mut p = self.online.params();
        self.t += 1;
        match cfg.optimizer {
            Optimizer::Sgd { momentum } => {
                for i in 0..p.len() {
                    self.m[i] = momentum * self.m[i] + g[i];
                    p[i] -= cfg.lr * self.m[i];
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..p.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= cfg.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
        self.online.set_params(&p);
    }
}

/// Trains a policy with ε-greedy exploration, cycling through `envs` one
/// episode at a time. Reproducible from `seed`.
pub fn train(envs: &[ExploreEnv<'_>], cfg: &TrainConfig, seed: u64) -> Result<(QNetwork, TrainLog)> {
    cfg.validate()?;
    if envs.is_empty() {
        return Err(Error::Invalid("training needs at least one environment".into()));
    }
    let mut init_rng = episode_rng(seed, u64::MAX);
    let mut learner = Learner::new(QNetwork::random(&cfg.architecture(), &mut init_rng));
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.alpha, cfg.priority_eps);
    let mut log = TrainLog::default();
    let mut total_steps = 0usize;
    let mut best: Option<(f64, QNetwork)> = None;

    for episode in 0..cfg.episodes {
        let env = &envs[episode % envs.len()];
        let mut rng: ChaCha8Rng = episode_rng(seed, episode as u64);
        let eps = cfg.epsilon(episode);
        let beta = cfg.beta(episode);
        let mut ep = if cfg.random_starts && !env.domain().is_empty() {
            Episode::starting_at(env, env.domain()[rng.gen_range(0..env.domain().len())])
        } else {
            Episode::new(env)
        };
        let mut s = ep.features().to_vec();
        let mut td_sum = 0.0;
        let mut td_count = 0usize;
        for _ in 0..cfg.steps_per_episode {
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..ACTION_COUNT)
            } else {
                learner.online.greedy_action(&s)
            };
            let next = step(env.graph, ep.current(), a);
            let r = ep.advance(next);
            let s_next = ep.features().to_vec();
            let terminal = env.field.total() > 0.0 && ep.remaining_important() == 0;
            buffer.push(Transition {
                s: std::mem::replace(&mut s, s_next.clone()),
                a,
                r,
                s_next,
                terminal,
            });
            total_steps += 1;

            if buffer.len() >= cfg.batch_size && total_steps % cfg.train_every == 0 {
                let batch = buffer.sample(cfg.batch_size, beta, &mut rng)?;
                let owned: Vec<Transition>;
                let ts: Vec<&Transition> = if cfg.symmetry_augmentation {
                    owned = batch.indices.iter().map(|&i| buffer.get(i).transformed(rng.gen_range(0..8))).collect();
                    owned.iter().collect()
                } else {
                    batch.indices.iter().map(|&i| buffer.get(i)).collect()
                };
                let (_, grad, deltas, mean_abs_q) =
                    td_loss_gradient_with_q(&learner.online, &learner.target, &ts, &batch.weights, cfg.gamma)?;
                if !mean_abs_q.is_finite() || mean_abs_q > 1e6 {
                    return Err(Error::Diverged { episode, mean_abs_q });
                }
                learner.apply(&grad, cfg);
                buffer.update_priorities(&batch.indices, &deltas);
                td_sum += deltas.iter().sum::<f64>();
                td_count += deltas.len();
            }
            if total_steps % cfg.target_sync_interval == 0 {
                learner.sync_target();
            }
            if terminal {
                break;
            }
        }
        let traj = ep.trajectory();
        log.episodes.push(EpisodeLog {
            episode,
            total_reward: traj.total_reward(),
            coverage: traj.final_coverage(),
            mean_td_error: if td_count > 0 { td_sum / td_count as f64 } else { 0.0 },
        });
        log::debug!(
            "episode {episode}: reward {:.3} coverage {:.3} eps {eps:.3}",
            traj.total_reward(),
            traj.final_coverage()
        );
        let done = episode + 1;
        if cfg.eval_interval > 0 && (done % cfg.eval_interval == 0 || done == cfg.episodes) {
            let score = evaluate(envs, &learner.online, cfg, seed, done);
            log.evaluations.push((done, score));
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, learner.online.clone()));
                log.selected = Some(done);
            }
        }
    }
    Ok((best.map_or(learner.online, |(_, net)| net), log))
}

/// Mean final coverage of seed-start rollouts over all environments.
fn evaluate(envs: &[ExploreEnv<'_>], net: &QNetwork, cfg: &TrainConfig, seed: u64, round: usize) -> f64 {
    let total: f64 = envs
        .iter()
        .enumerate()
        .map(|(i, env)| {
            let mut rng = episode_rng(seed ^ EVAL_SALT, (round * envs.len() + i) as u64);
            let mut ep = Episode::new(env);
            policy_rollout(&mut ep, net, cfg.steps_per_episode, cfg.eval_epsilon, &mut rng);
            ep.coverage()
        })
        .sum();
    total / envs.len() as f64
}

const EVAL_SALT: u64 = 0xe7a1_0a7e;
