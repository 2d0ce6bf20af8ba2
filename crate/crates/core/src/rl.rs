//! Minimal DDPG: actor/critic MLPs with manual backprop, Adam, replay and
//! soft target updates.
//!
//! Parameters of each network live in one flat vector, laid out per layer as
//! the `out × in` weight matrix (row-major) followed by the `out` biases.

use std::io::{BufRead, Write};

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Linear,
    /// `bound · tanh(z)`
    Tanh(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

/// Activations of every layer for one batch, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input, `acts[L]` the network output.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sign pattern of the hidden rectifiers.
    pub fn relu_mask(&self) -> Vec<bool> {
        self.acts[1..self.acts.len() - 1].iter().flatten().map(|&a| a > 0.0).collect()
    }
}

impl Mlp {
    /// Uniform `±1/√fan_in` init; the last layer uses `±final_bound` when
    /// given.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, final_bound: Option<f64>, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {sizes:?}")));
        }
        let n_layers = sizes.len() - 1;
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = match final_bound {
                Some(b) if l + 1 == n_layers => b,
                _ => 1.0 / (fan_in as f64).sqrt(),
            };
            let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Domain(e.to_string()))?;
            params.extend((0..fan_in * fan_out + fan_out).map(|_| dist.sample(rng)));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            output,
        })
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zero the final layer so the network outputs exactly zero (tanh head)
    /// or its bias (linear head).
    pub fn zero_output_layer(&mut self) {
        let l = self.sizes.len() - 2;
        let start = self.layer_offset(l);
        self.params[start..].iter_mut().for_each(|p| *p = 0.0);
    }

    fn layer_offset(&self, layer: usize) -> usize {
        Self::param_count(&self.sizes[..=layer])
    }

    /// `inputs` is `batch × input_dim`, row-major.
    pub fn forward(&self, inputs: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(inputs.len(), batch * self.input_dim(), "mlp input shape");
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(inputs.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let x = &acts[l];
            let mut y = vec![0.0; batch * n_out];
            let last = l + 1 == n_layers;
            for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                for o in 0..n_out {
                    let wr = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                    yr[o] = if !last {
                        z.max(0.0)
                    } else {
                        match self.output {
                            OutputActivation::Linear => z,
                            OutputActivation::Tanh(bound) => bound * z.tanh(),
                        }
                    };
                }
            }
            acts.push(y);
        }
        ForwardCache { batch, acts }
    }

    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input, 1).output().to_vec()
    }

    /// Accumulate `∂L/∂θ` into `grad` given `d_out = ∂L/∂output`; returns
    /// `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let batch = cache.batch;
        assert_eq!(d_out.len(), batch * self.output_dim(), "mlp d_out shape");
        assert_eq!(grad.len(), self.params.len(), "mlp grad shape");
        let n_layers = self.sizes.len() - 1;
        let mut delta = d_out.to_vec();
        if let OutputActivation::Tanh(bound) = self.output {
            for (d, &y) in delta.iter_mut().zip(cache.output()) {
                let t = y / bound;
                *d *= bound * (1.0 - t * t);
            }
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = self.layer_offset(l);
            let x = &cache.acts[l];
            let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let w = &self.params[offset..offset + n_in * n_out];
            let mut d_in = vec![0.0; batch * n_in];
            for ((xr, dr), dir) in x.chunks_exact(n_in).zip(delta.chunks_exact(n_out)).zip(d_in.chunks_exact_mut(n_in)) {
                for o in 0..n_out {
                    let g = dr[o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let gwr = &mut gw[o * n_in..(o + 1) * n_in];
                    let wr = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        gwr[i] += g * xr[i];
                        dir[i] += g * wr[i];
                    }
                }
            }
            if l > 0 {
                for (d, &a) in d_in.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }

    /// `θ_self ← τ θ_other + (1 − τ) θ_self`
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) {
        assert_eq!(self.sizes, other.sizes, "soft update shape");
        for (t, &s) in self.params.iter_mut().zip(&other.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// A sampled minibatch in flat row-major arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    len: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Domain("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            len: 0,
            head: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn store(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return crate::error::shape_err("replay transition", format!("obs {} act {}", self.obs_dim, self.act_dim), format!("obs {} act {}", t.obs.len(), t.action.len()));
        }
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.len += 1;
        } else {
            let i = self.head;
            self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
            self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        (i < self.len).then(|| Transition {
            obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.actions[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            reward: self.rewards[i],
            next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
        })
    }

    /// Uniform sample of distinct transitions.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if size > self.len {
            return Err(Error::Precondition(format!("batch of {size} requested from buffer of {}", self.len)));
        }
        let idx = rand::seq::index::sample(rng, self.len, size);
        let mut b = Batch {
            size,
            obs: Vec::with_capacity(size * self.obs_dim),
            actions: Vec::with_capacity(size * self.act_dim),
            rewards: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * self.obs_dim),
        };
        for i in idx.iter() {
            b.obs.extend_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.actions.extend_from_slice(&self.actions[i * self.act_dim..(i + 1) * self.act_dim]);
            b.rewards.push(self.rewards[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    /// Defaults to the environment's bound when absent.
    pub action_bound: Option<f64>,
    pub final_init: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-3,
            critic_lr: 2e-3,
            gamma: 0.99,
            tau: 5e-3,
            batch_size: 64,
            buffer_capacity: 500_000,
            hidden: vec![64, 64],
            action_bound: None,
            final_init: 3e-3,
        }
    }
}

impl DdpgConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.actor_lr >= 0.0 && self.actor_lr.is_finite()) {
            p.push(format!("ddpg.actor_lr must be finite and >= 0, got {}", self.actor_lr));
        }
        if !(self.critic_lr >= 0.0 && self.critic_lr.is_finite()) {
            p.push(format!("ddpg.critic_lr must be finite and >= 0, got {}", self.critic_lr));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            p.push(format!("ddpg.gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            p.push(format!("ddpg.tau must be in [0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 {
            p.push("ddpg.batch_size must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            p.push(format!("ddpg.buffer_capacity ({}) must be >= batch_size ({})", self.buffer_capacity, self.batch_size));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            p.push(format!("ddpg.hidden must list positive widths, got {:?}", self.hidden));
        }
        if let Some(b) = self.action_bound {
            if !(b > 0.0 && b.is_finite()) {
                p.push(format!("ddpg.action_bound must be positive, got {b}"));
            }
        }
        if !(self.final_init > 0.0 && self.final_init.is_finite()) {
            p.push(format!("ddpg.final_init must be positive, got {}", self.final_init));
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    cfg: DdpgConfig,
    action_bound: f64,
    obs_dim: usize,
    act_dim: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, action_bound: f64, cfg: DdpgConfig, rng: &mut R) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let bound = cfg.action_bound.unwrap_or(action_bound);
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, OutputActivation::Tanh(bound), Some(cfg.final_init), rng)?;
        let critic = Mlp::new(&critic_sizes, OutputActivation::Linear, None, rng)?;
        Ok(Self {
            actor_opt: Adam::new(actor.params.len(), cfg.actor_lr),
            critic_opt: Adam::new(critic.params.len(), cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            cfg,
            action_bound: bound,
            obs_dim,
            act_dim,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.cfg
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn policy_mean(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.predict(obs)
    }

    fn concat(&self, obs: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * (self.obs_dim + self.act_dim));
        for (o, a) in obs.chunks_exact(self.obs_dim).zip(actions.chunks_exact(self.act_dim)) {
            out.extend_from_slice(o);
            out.extend_from_slice(a);
        }
        out
    }

    /// Central-difference check of the critic loss and actor objective
    /// gradients on `b`, skipping coordinates whose perturbation flips a
    /// ReLU.
    pub fn gradient_check(&self, b: &Batch, step: f64, rel_tol: f64) -> (GradCheck, GradCheck) {
        let targets = self.critic_targets(b);
        let (_, g) = self.critic_loss_and_grad(&self.critic, b, &targets);
        let all: Vec<usize> = (0..g.len()).collect();
        let x = self.concat(&b.obs, &b.actions, b.size);
        let critic = finite_difference_check(self.critic.params(), &g, &all, step, rel_tol, |p| {
            let mut c = self.critic.clone();
            c.params_mut().copy_from_slice(p);
            let mask = c.forward(&x, b.size).relu_mask();
            (self.critic_loss_and_grad(&c, b, &targets).0, mask)
        });

        let (_, g) = self.actor_objective_and_grad(&self.actor, b);
        let all: Vec<usize> = (0..g.len()).collect();
        let actor = finite_difference_check(self.actor.params(), &g, &all, step, rel_tol, |p| {
            let mut act = self.actor.clone();
            act.params_mut().copy_from_slice(p);
            let ac = act.forward(&b.obs, b.size);
            let qc = self.critic.forward(&self.concat(&b.obs, ac.output(), b.size), b.size);
            let mut mask = ac.relu_mask();
            mask.extend(qc.relu_mask());
            (self.actor_objective_and_grad(&act, b).0, mask)
        });
        (critic, actor)
    }

    /// Bootstrapped regression targets `r + γ Q'(x', μ'(x'))`.
    pub fn critic_targets(&self, b: &Batch) -> Vec<f64> {
        let next_a = self.actor_target.forward(&b.next_obs, b.size);
        let q_next = self.critic_target.forward(&self.concat(&b.next_obs, next_a.output(), b.size), b.size);
        b.rewards.iter().zip(q_next.output()).map(|(r, q)| r + self.cfg.gamma * q).collect()
    }

    /// Mean squared TD error of `critic` against fixed `targets`, with its
    /// gradient.
    pub fn critic_loss_and_grad(&self, critic: &Mlp, b: &Batch, targets: &[f64]) -> (f64, Vec<f64>) {
        let cache = critic.forward(&self.concat(&b.obs, &b.actions, b.size), b.size);
        let n = b.size as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = cache
            .output()
            .iter()
            .zip(targets)
            .map(|(q, y)| {
                loss += (q - y) * (q - y);
                2.0 * (q - y) / n
            })
            .collect();
        let mut grad = vec![0.0; critic.params.len()];
        critic.backward(&cache, &d_out, &mut grad);
        (loss / n, grad)
    }

    /// Mean `Q(x, μ(x))` under `actor`, with its gradient w.r.t. the actor
    /// parameters.
    pub fn actor_objective_and_grad(&self, actor: &Mlp, b: &Batch) -> (f64, Vec<f64>) {
        let a_cache = actor.forward(&b.obs, b.size);
        let q_cache = self.critic.forward(&self.concat(&b.obs, a_cache.output(), b.size), b.size);
        let n = b.size as f64;
        let objective = q_cache.output().iter().sum::<f64>() / n;
        let mut scratch = vec![0.0; self.critic.params.len()];
        let d_in = self.critic.backward(&q_cache, &vec![1.0 / n; b.size], &mut scratch);
        let width = self.obs_dim + self.act_dim;
        let d_action: Vec<f64> = d_in.chunks_exact(width).flat_map(|r| r[self.obs_dim..].iter().copied()).collect();
        let mut grad = vec![0.0; actor.params.len()];
        actor.backward(&a_cache, &d_action, &mut grad);
        (objective, grad)
    }

    /// One critic step, one actor step, then soft target updates.
    pub fn train_on_batch(&mut self, b: &Batch) -> TrainStats {
        let targets = self.critic_targets(b);
        let (critic_loss, grad) = self.critic_loss_and_grad(&self.critic, b, &targets);
        self.critic_opt.step(&mut self.critic.params, &grad);
        let (actor_objective, mut grad) = self.actor_objective_and_grad(&self.actor, b);
        grad.iter_mut().for_each(|g| *g = -*g);
        self.actor_opt.step(&mut self.actor.params, &grad);
        self.actor_target.soft_update_from(&self.actor, self.cfg.tau);
        self.critic_target.soft_update_from(&self.critic, self.cfg.tau);
        TrainStats {
            critic_loss,
            actor_objective,
        }
    }

    /// No-op (with a warning) while the buffer holds fewer than a batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<Option<TrainStats>> {
        if buffer.len() < self.cfg.batch_size {
            log::warn!("replay buffer has {} < {} transitions; skipping update", buffer.len(), self.cfg.batch_size);
            return Ok(None);
        }
        let b = buffer.sample(self.cfg.batch_size, rng)?;
        Ok(Some(self.train_on_batch(&b)))
    }

    /// Text checkpoint of all four networks.
    ///
    /// ```text
    /// safe-explore-checkpoint 1
    /// network <name> sizes <n0> <n1> ... output <linear|tanh <bound>> params <count>
    /// <one parameter per line>
    /// ```
    pub fn save_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "safe-explore-checkpoint 1")?;
        for (name, net) in self.networks() {
            let sizes: Vec<String> = net.sizes.iter().map(|s| s.to_string()).collect();
            let output = match net.output {
                OutputActivation::Linear => "linear".to_string(),
                OutputActivation::Tanh(b) => format!("tanh {b:?}"),
            };
            writeln!(w, "network {name} sizes {} output {output} params {}", sizes.join(" "), net.params.len())?;
            for p in &net.params {
                writeln!(w, "{p:?}")?;
            }
        }
        Ok(())
    }

    /// Overwrite network parameters from a checkpoint with matching shapes.
    pub fn load_checkpoint<R: BufRead>(&mut self, r: R) -> Result<()> {
        let bad = |msg: String| Error::ConfigParse(format!("checkpoint: {msg}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        if header.trim() != "safe-explore-checkpoint 1" {
            return Err(bad(format!("unknown header {header:?}")));
        }
        let mut loaded = Vec::new();
        while let Some(line) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.first() != Some(&"network") || tok.len() < 4 {
                return Err(bad(format!("expected network line, got {line:?}")));
            }
            let name = tok[1].to_string();
            let count: usize = tok.last().and_then(|c| c.parse().ok()).ok_or_else(|| bad("bad parameter count".into()))?;
            let sizes_end = tok.iter().position(|t| *t == "output").ok_or_else(|| bad("missing output".into()))?;
            let sizes: Vec<usize> = tok[3..sizes_end].iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(|e| bad(format!("{e}")))?;
            let mut params = Vec::with_capacity(count);
            for _ in 0..count {
                let v = lines.next().ok_or_else(|| bad(format!("truncated network {name}")))??;
                params.push(v.trim().parse::<f64>().map_err(|e| bad(format!("{e}")))?);
            }
            loaded.push((name, sizes, params));
        }
        let mut nets: Vec<(&str, &mut Mlp)> = vec![
            ("actor", &mut self.actor),
            ("critic", &mut self.critic),
            ("actor_target", &mut self.actor_target),
            ("critic_target", &mut self.critic_target),
        ];
        for (name, net) in nets.iter_mut() {
            let (_, sizes, params) = loaded
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| bad(format!("missing network {name}")))?;
            if *sizes != net.sizes || params.len() != net.params.len() {
                return Err(bad(format!("shape of {name} is {sizes:?}, expected {:?}", net.sizes)));
            }
            net.params.clone_from(params);
        }
        Ok(())
    }

    fn networks(&self) -> [(&'static str, &Mlp); 4] {
        [
            ("actor", &self.actor),
            ("critic", &self.critic),
            ("actor_target", &self.actor_target),
            ("critic_target", &self.critic_target),
        ]
    }
}

/// `(Σ γ^k c_{k+1}, Σ c_{k+1})`
pub fn episode_return(costs: &[f64], gamma: f64) -> (f64, f64) {
    let mut disc = 0.0;
    let mut g = 1.0;
    for c in costs {
        disc += g * c;
        g *= gamma;
    }
    (disc, costs.iter().sum())
}

/// Central-difference comparison of an analytic gradient, skipping
/// coordinates whose perturbation flips a rectifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    /// Coordinates whose discrepancy is below the rounding error of the
    /// central difference itself (`4ε·|f|/h`); the numeric value carries no
    /// relative information there.
    pub roundoff_limited: usize,
    /// Largest relative error among resolvable coordinates.
    pub max_rel_error: f64,
    pub failures: usize,
}

/// `f` returns the objective and the rectifier mask at the given parameters.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    rel_tol: f64,
    mut f: impl FnMut(&[f64]) -> (f64, Vec<bool>),
) -> GradCheck {
    let (_, mask0) = f(params);
    let mut p = params.to_vec();
    let mut out = GradCheck {
        checked: 0,
        skipped: 0,
        roundoff_limited: 0,
        max_rel_error: 0.0,
        failures: 0,
    };
    for &i in indices {
        p[i] = params[i] + step;
        let (fp, mp) = f(&p);
        p[i] = params[i] - step;
        let (fm, mm) = f(&p);
        p[i] = params[i];
        if mp != mask0 || mm != mask0 {
            out.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let diff = (a - numeric).abs();
        let rel = diff / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
        // a summed objective carries a few ulps of rounding, not one
        let noise = 4.0 * f64::EPSILON * fp.abs().max(fm.abs()) / step;
        out.checked += 1;
        if rel <= rel_tol {
            out.max_rel_error = out.max_rel_error.max(rel);
        } else if diff <= noise {
            out.roundoff_limited += 1;
        } else {
            out.max_rel_error = out.max_rel_error.max(rel);
            out.failures += 1;
        }
    }
    out
}
