//! Exact and Monte Carlo oracles for the safety guarantees, and the named
//! verification suites built on them.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::linalg::{add_vec, Matrix};
use crate::model::{ConstraintSet, GaussianNoise, LinearModel};
use crate::safety::SafetyLayer;

/// Two-sided 99% normal quantile used for Wilson intervals.
pub const WILSON_Z99: f64 = 2.5758293035489004;

/// Width of the one-sided acceptance band in standard errors.
pub const BAND_SE: f64 = 3.0;

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainSpec {
    rho: Vec<f64>,
    tau: usize,
    horizon: usize,
}

impl MarkovChainSpec {
    /// `rho[i]` is the probability of jumping to the safe state from state
    /// `i + 1`; the chain otherwise moves one state further (saturating at
    /// `τ + 2`).
    pub fn new(rho: Vec<f64>, tau: usize, horizon: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Domain("tau must be at least 1".into()));
        }
        if rho.len() != tau + 2 {
            return crate::error::shape_err("MarkovChainSpec rho", tau + 2, rho.len());
        }
        if let Some(r) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Domain(format!("return probability {r} outside [0, 1]")));
        }
        Ok(Self { rho, tau, horizon })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Probability of returning to the safe state within `τ` steps after
    /// leaving it: `ρ₂ + Σ_{i=3}^{τ+1} ρ_i Π_{j=2}^{i−1}(1 − ρ_j)`.
    pub fn return_within_tau(&self) -> f64 {
        let mut total = 0.0;
        let mut stay_out = 1.0;
        for &r in &self.rho[1..=self.tau] {
            total += r * stay_out;
            stay_out *= 1.0 - r;
        }
        total
    }

    /// `ξ^k ρ₁^τ`
    pub fn lower_bound(&self, xi: f64, k: usize) -> f64 {
        xi.powi(k as i32) * self.rho[0].powi(self.tau as i32)
    }

    /// Random spec whose return-within-τ probability is at least `xi`.
    pub fn random_satisfying<R: Rng + ?Sized>(rng: &mut R, tau: usize, horizon: usize, xi: f64) -> Result<Self> {
        // 1 − return_within_tau = Π (1 − ρ_j), so pick that product ≤ 1 − ξ
        // and split it into τ random factors.
        let budget = (1.0 - xi).max(f64::MIN_POSITIVE);
        let log_p = budget.ln() * rng.random_range(1.0..4.0);
        let mut weights: Vec<f64> = (0..tau).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        let mut rho = Vec::with_capacity(tau + 2);
        rho.push(rng.random_range(0.5..1.0));
        rho.extend(weights.iter().map(|w| (1.0 - (log_p * w).exp()).clamp(1e-12, 1.0 - 1e-15)));
        rho.push(rng.random_range(0.01..0.99));
        Self::new(rho, tau, horizon)
    }

    fn next_state(&self, i: usize) -> usize {
        (i + 1).min(self.tau + 1)
    }
}

/// `p_k^{(1)}` for `k = 0..=T`, starting from the safe state.
pub fn markov_exact(spec: &MarkovChainSpec) -> Vec<f64> {
    let s = spec.tau + 2;
    let mut p = vec![0.0; s];
    p[0] = 1.0;
    let mut out = Vec::with_capacity(spec.horizon + 1);
    out.push(1.0);
    for _ in 0..spec.horizon {
        let mut next = vec![0.0; s];
        for i in 0..s {
            next[0] += spec.rho[i] * p[i];
            next[spec.next_state(i)] += (1.0 - spec.rho[i]) * p[i];
        }
        p = next;
        out.push(p[0]);
    }
    out
}

const MC_CHUNK: usize = 4096;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(MC_CHUNK)).map(|c| (c, MC_CHUNK.min(n - c * MC_CHUNK))).collect()
}

/// Empirical `p_k^{(1)}` over independent chains.
pub fn markov_simulate(spec: &MarkovChainSpec, n_chains: usize, seed: u64) -> Vec<f64> {
    let counts = chunks(n_chains)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut counts = vec![0usize; spec.horizon + 1];
            for _ in 0..len {
                let mut state = 0;
                counts[0] += 1;
                for count in counts.iter_mut().skip(1) {
                    state = if rng.random::<f64>() < spec.rho[state] { 0 } else { spec.next_state(state) };
                    *count += usize::from(state == 0);
                }
            }
            counts
        })
        .reduce(|| vec![0; spec.horizon + 1], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    counts.iter().map(|&c| c as f64 / n_chains as f64).collect()
}

/// Joint and per-row safety counts over Monte Carlo samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyFrequency {
    pub n: usize,
    pub joint: usize,
    pub per_row: Vec<usize>,
}

impl SafetyFrequency {
    pub fn joint_frequency(&self) -> f64 {
        self.joint as f64 / self.n as f64
    }

    pub fn row_frequency(&self, j: usize) -> f64 {
        self.per_row[j] as f64 / self.n as f64
    }

    pub fn min_row_frequency(&self) -> f64 {
        (0..self.per_row.len()).map(|j| self.row_frequency(j)).fold(1.0, f64::min)
    }

    /// `joint ≥ Σ_j rows − (n_c − 1)·n`; holds for any sample set.
    pub fn bonferroni_holds(&self) -> bool {
        let rows: usize = self.per_row.iter().sum();
        let slack = (self.per_row.len().saturating_sub(1)) * self.n;
        self.joint + slack >= rows
    }

    fn merge(mut self, other: Self) -> Self {
        self.n += other.n;
        self.joint += other.joint;
        for (a, b) in self.per_row.iter_mut().zip(other.per_row) {
            *a += b;
        }
        self
    }
}

/// Rows with `h_jᵀ x + offset_j ≤ d_j`.
pub fn rows_safe(cs: &ConstraintSet<f64>, x: &[f64], row_offsets: &[f64]) -> Vec<bool> {
    (0..cs.len())
        .map(|j| crate::linalg::dot(cs.row(j), x) + row_offsets[j] <= cs.d()[j])
        .collect()
}

/// Transition `(x, u, w) ↦ x⁺`.
pub type StepFn<'a> = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Sync + 'a;

fn mc_safety(
    step: &StepFn<'_>,
    cs: &ConstraintSet<f64>,
    row_offsets: &[f64],
    x: &[f64],
    inputs: &[GaussianNoise<f64>],
    noise: &GaussianNoise<f64>,
    n: usize,
    seed: u64,
) -> Result<SafetyFrequency> {
    if row_offsets.len() != cs.len() {
        return crate::error::shape_err("row offsets", cs.len(), row_offsets.len());
    }
    if x.len() != cs.state_dim() || noise.dim() != x.len() {
        return crate::error::shape_err("mc state", cs.state_dim(), x.len());
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let zero = SafetyFrequency {
        n: 0,
        joint: 0,
        per_row: vec![0; cs.len()],
    };
    let out = chunks(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut acc = zero.clone();
            for _ in 0..len {
                let mut state = x.to_vec();
                for input in inputs {
                    let u = input.sample(&mut rng);
                    let w = noise.sample(&mut rng);
                    state = step(&state, &u, &w);
                }
                let rows = rows_safe(cs, &state, row_offsets);
                acc.n += 1;
                acc.joint += usize::from(rows.iter().all(|r| *r));
                for (a, r) in acc.per_row.iter_mut().zip(&rows) {
                    *a += usize::from(*r);
                }
            }
            acc
        })
        .reduce(|| zero.clone(), SafetyFrequency::merge);
    Ok(out)
}

/// Safety of `x⁺` with the input drawn from `input` and the disturbance
/// from `noise`, independently.
pub fn mc_one_step_safety(
    step: &StepFn<'_>,
    cs: &ConstraintSet<f64>,
    row_offsets: &[f64],
    x: &[f64],
    input: &GaussianNoise<f64>,
    noise: &GaussianNoise<f64>,
    n: usize,
    seed: u64,
) -> Result<SafetyFrequency> {
    mc_safety(step, cs, row_offsets, x, std::slice::from_ref(input), noise, n, seed)
}

/// Safety of the state reached after applying the stacked `inputs` in
/// order, with a fresh disturbance each step.
pub fn mc_tau_step_safety(
    step: &StepFn<'_>,
    cs: &ConstraintSet<f64>,
    row_offsets: &[f64],
    x: &[f64],
    inputs: &[f64],
    input_dim: usize,
    noise: &GaussianNoise<f64>,
    n: usize,
    seed: u64,
) -> Result<SafetyFrequency> {
    if input_dim == 0 || inputs.len() % input_dim != 0 {
        return crate::error::shape_err("mc input sequence", format!("multiple of {input_dim}"), inputs.len());
    }
    let fixed: Vec<GaussianNoise<f64>> = inputs
        .chunks_exact(input_dim)
        .map(|u| GaussianNoise::new(u.to_vec(), Matrix::zeros(input_dim, input_dim)))
        .collect::<Result<_>>()?;
    mc_safety(step, cs, row_offsets, x, &fixed, noise, n, seed)
}

/// `A x + B u + w`
pub fn linear_step(model: &LinearModel<f64>) -> impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Sync + '_ {
    move |x, u, w| {
        let ax = model.a().mul_vec(x).expect("state shape");
        let bu = model.b().mul_vec(u).expect("input shape");
        add_vec(&add_vec(&ax, &bu), w)
    }
}

/// Per-step safety frequencies pooled over episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyReport {
    pub threshold: f64,
    pub totals: Vec<usize>,
    pub safe_counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub wilson_lower: Vec<f64>,
    pub wilson_upper: Vec<f64>,
    pub min_frequency: f64,
    pub mean_frequency: f64,
    /// `min_k (frequency_k + 3 SE_k) ≥ threshold`, SE at the threshold.
    pub pass_band: bool,
    /// `min_k frequency_k ≥ threshold`
    pub pass_strict: bool,
}

/// `flags[e][k]` is whether episode `e` was safe at its `k`-th recorded
/// step. Episodes may have different lengths.
pub fn frequency_report(flags: &[Vec<bool>], threshold: f64) -> Result<FrequencyReport> {
    let len = flags.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::Domain("no safety flags to summarize".into()));
    }
    let mut totals = vec![0usize; len];
    let mut safe = vec![0usize; len];
    for ep in flags {
        for (k, &f) in ep.iter().enumerate() {
            totals[k] += 1;
            safe[k] += usize::from(f);
        }
    }
    let frequencies: Vec<f64> = safe.iter().zip(&totals).map(|(&s, &t)| s as f64 / t as f64).collect();
    let (wilson_lower, wilson_upper) = safe.iter().zip(&totals).map(|(&s, &t)| wilson_interval(s, t, WILSON_Z99)).unzip();
    let min_frequency = frequencies.iter().copied().fold(1.0, f64::min);
    let mean_frequency = frequencies.iter().sum::<f64>() / len as f64;
    let pass_band = frequencies
        .iter()
        .zip(&totals)
        .all(|(&f, &t)| f + BAND_SE * binomial_se(threshold, t) >= threshold);
    Ok(FrequencyReport {
        threshold,
        totals,
        safe_counts: safe,
        frequencies,
        wilson_lower,
        wilson_upper,
        min_frequency,
        mean_frequency,
        pass_band,
        pass_strict: min_frequency >= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Lemma1,
    Lemma2,
    Theorem1Stay,
    Theorem1Back,
    Theorem2,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Lemma2, Suite::Theorem1Stay, Suite::Theorem1Back, Suite::Theorem2];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Theorem1Stay => "theorem1-stay",
            Suite::Theorem1Back => "theorem1-back",
            Suite::Theorem2 => "theorem2",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Validation(vec![format!("unknown suite {s:?}")]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Monte Carlo samples per check.
    pub samples: usize,
    /// Random states per environment.
    pub states: usize,
    /// Random chains for the Markov suite.
    pub specs: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100_000,
            states: 20,
            specs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["suite", "check", "pass", "detail"])?;
        for c in &self.checks {
            w.write_record([self.suite.as_str(), &c.name, if c.pass { "1" } else { "0" }, &c.detail])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {} {}: {}", if c.pass { "PASS" } else { "FAIL" }, self.suite, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{}: {} checks, {} failed", self.suite, self.checks.len(), failed)
    }
}

pub fn run_suite(suite: Suite, cfg: &ExperimentConfig, opts: &SuiteOptions) -> Result<SuiteReport> {
    cfg.validate()?;
    let checks = match suite {
        Suite::Lemma2 => lemma2_checks(cfg, opts)?,
        Suite::Theorem2 => theorem2_checks(cfg)?,
        other => {
            let env = cfg.environment();
            let layer = env.safety_layer(cfg.safety.eta, cfg.safety.xi, cfg.safety.tau, cfg.steps)?;
            match other {
                Suite::Lemma1 => lemma1_checks(env.as_ref(), &layer, opts)?,
                Suite::Theorem1Stay => stay_checks(env.as_ref(), &layer, opts)?,
                Suite::Theorem1Back => back_checks(env.as_ref(), &layer, opts)?,
                _ => unreachable!(),
            }
        }
    };
    Ok(SuiteReport { suite, checks })
}

fn band(q: f64, n: usize) -> f64 {
    q - BAND_SE * binomial_se(q, n)
}

fn sample_box<R: Rng + ?Sized>(rng: &mut R, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half..half)).collect()
}

/// Safe states where exploration is possible, with a policy mean and a step.
fn exploratory_states<R: Rng + ?Sized>(
    env: &dyn Environment,
    layer: &SafetyLayer<f64>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<f64>, Vec<f64>, usize)>> {
    let bound = env.default_action_bound();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 1_000_000 {
            return Err(Error::Precondition("could not find exploratory states".into()));
        }
        let x = sample_box(rng, env.state_dim(), 6.0);
        let mu = sample_box(rng, env.input_dim(), bound);
        let k = rng.random_range(0..layer.config().horizon());
        if layer.is_safe(&x)? && layer.exploration_feasible(&x, &mu, k)? {
            out.push((x, mu, k));
        }
    }
    Ok(out)
}

fn lemma1_checks(env: &dyn Environment, layer: &SafetyLayer<f64>, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cs = layer.constraints();
    let worst = layer.config().delta_bar().to_vec();
    let no_offset = vec![0.0; cs.len()];
    let lin = linear_step(layer.model());
    let plant = |x: &[f64], u: &[f64], w: &[f64]| env.step(x, u, w);
    let m = env.input_dim();
    let mut checks = Vec::new();
    for (i, (x, mu, k)) in exploratory_states(env, layer, opts.states, &mut rng)?.into_iter().enumerate() {
        let cov = layer.max_exploration_cov(&x, &mu, k, &Matrix::identity(m), 1e6)?;
        let sigma_ok = layer.check_sigma(&x, &mu, k, &cov.cov)?;
        let input = GaussianNoise::new(mu.clone(), cov.cov.clone())?;
        let q_row = layer.eta_prime(k)?;
        let q_joint = layer.q_stay(k)?;
        let seed = opts.seed.wrapping_add(1000 + i as u64);
        let f_lin = mc_one_step_safety(&lin, cs, &worst, &x, &input, layer.noise(), opts.samples, seed)?;
        let f_true = mc_one_step_safety(&plant, cs, &no_offset, &x, &input, layer.noise(), opts.samples, seed + 7919)?;
        let n = opts.samples;
        let pass = sigma_ok
            && f_lin.min_row_frequency() >= band(q_row, n)
            && f_lin.joint_frequency() >= band(q_joint, n)
            && f_true.min_row_frequency() >= band(q_row, n)
            && f_true.joint_frequency() >= band(q_joint, n)
            && f_lin.bonferroni_holds()
            && f_true.bonferroni_holds();
        checks.push(Check {
            name: format!("{} state {i}", env.name()),
            pass,
            detail: format!(
                "k={k} s={:.4} row>={:.5}: linear {:.5} plant {:.5}; joint>={:.5}: linear {:.5} plant {:.5}",
                cov.scale,
                band(q_row, n),
                f_lin.min_row_frequency(),
                f_true.min_row_frequency(),
                band(q_joint, n),
                f_lin.joint_frequency(),
                f_true.joint_frequency()
            ),
        });
    }
    Ok(checks)
}

fn safe_states<R: Rng + ?Sized>(env: &dyn Environment, layer: &SafetyLayer<f64>, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![env.initial_state()];
    while out.len() < count {
        let x = sample_box(rng, env.state_dim(), 6.0);
        if layer.is_safe(&x)? {
            out.push(x);
        }
    }
    out.truncate(count.max(1));
    Ok(out)
}

fn stay_checks(env: &dyn Environment, layer: &SafetyLayer<f64>, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cs = layer.constraints();
    let worst = layer.config().delta_bar().to_vec();
    let no_offset = vec![0.0; cs.len()];
    let lin = linear_step(layer.model());
    let plant = |x: &[f64], u: &[f64], w: &[f64]| env.step(x, u, w);
    let m = env.input_dim();
    let mut checks = Vec::new();
    for (i, x) in safe_states(env, layer, opts.states, &mut rng)?.into_iter().enumerate() {
        let k = if i == 0 { 0 } else { rng.random_range(0..layer.config().horizon()) };
        let q = layer.q_stay(k)?;
        let closed = env.stay_input(&x, layer.noise().mean());
        let lp = layer.solve_stay_input(&x, q)?;
        let mut candidates = vec![("closed-form", Some(closed))];
        candidates.push(("lp", lp.feasible()));
        for (label, u) in candidates {
            let name = format!("{} state {i} {label}", env.name());
            let Some(u) = u else {
                checks.push(Check {
                    name,
                    pass: false,
                    detail: "lp reported infeasible".into(),
                });
                continue;
            };
            let exact = layer.stay_condition_holds(&x, &u, q)?;
            let input = GaussianNoise::new(u.clone(), Matrix::zeros(m, m))?;
            let seed = opts.seed.wrapping_add(2000 + 2 * i as u64 + u64::from(label == "lp"));
            let f_lin = mc_one_step_safety(&lin, cs, &worst, &x, &input, layer.noise(), opts.samples, seed)?;
            let f_true = mc_one_step_safety(&plant, cs, &no_offset, &x, &input, layer.noise(), opts.samples, seed + 7919)?;
            let need = band(q, opts.samples);
            checks.push(Check {
                name,
                pass: exact && f_lin.joint_frequency() >= need && f_true.joint_frequency() >= need,
                detail: format!(
                    "k={k} condition {exact}; joint>={need:.5}: linear {:.5} plant {:.5}",
                    f_lin.joint_frequency(),
                    f_true.joint_frequency()
                ),
            });
        }
    }
    Ok(checks)
}

fn back_checks(env: &dyn Environment, layer: &SafetyLayer<f64>, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cs = layer.constraints();
    let worst = layer.config().big_delta_bar().to_vec();
    let no_offset = vec![0.0; cs.len()];
    let lin = linear_step(layer.model());
    let plant = |x: &[f64], u: &[f64], w: &[f64]| env.step(x, u, w);
    let m = env.input_dim();
    let tau = layer.config().tau();
    let xi = layer.config().xi();
    let mut states = Vec::new();
    while states.len() < opts.states {
        let x = sample_box(&mut rng, env.state_dim(), 12.0);
        if !layer.is_safe(&x)? {
            states.push(x);
        }
    }
    let mut checks = Vec::new();
    for (i, x) in states.into_iter().enumerate() {
        let mut candidates = Vec::new();
        if tau == env.closed_form_tau() {
            candidates.push(("closed-form", Some(env.back_sequence(&x, layer.noise().mean()))));
        }
        candidates.push(("lp", layer.solve_back_sequence(&x, xi)?.feasible()));
        for (label, seq) in candidates {
            let name = format!("{} state {i} {label}", env.name());
            let Some(seq) = seq else {
                checks.push(Check {
                    name,
                    pass: false,
                    detail: "lp reported infeasible".into(),
                });
                continue;
            };
            let exact = layer.back_condition_holds(&x, &seq, xi)?;
            let seed = opts.seed.wrapping_add(3000 + 2 * i as u64 + u64::from(label == "lp"));
            let f_lin = mc_tau_step_safety(&lin, cs, &worst, &x, &seq, m, layer.noise(), opts.samples, seed)?;
            let f_true = mc_tau_step_safety(&plant, cs, &no_offset, &x, &seq, m, layer.noise(), opts.samples, seed + 7919)?;
            let need = band(xi, opts.samples);
            checks.push(Check {
                name,
                pass: exact && f_lin.joint_frequency() >= need && f_true.joint_frequency() >= need,
                detail: format!(
                    "x={x:.3?} condition {exact}; joint>={need:.5}: linear {:.5} plant {:.5}",
                    f_lin.joint_frequency(),
                    f_true.joint_frequency()
                ),
            });
        }
    }
    Ok(checks)
}

fn lemma2_checks(cfg: &ExperimentConfig, opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let xi = cfg.safety.xi;
    let horizon = cfg.steps;
    let mut violations = 0;
    let mut worst_ratio = f64::INFINITY;
    let mut composite_ok = true;
    for _ in 0..opts.specs {
        let tau = rng.random_range(1..=4);
        let spec = MarkovChainSpec::random_satisfying(&mut rng, tau, horizon, xi)?;
        composite_ok &= spec.return_within_tau() >= xi;
        for (k, p) in markov_exact(&spec).iter().enumerate().skip(1) {
            let bound = spec.lower_bound(xi, k);
            worst_ratio = worst_ratio.min(p / bound);
            if !(*p > bound) {
                violations += 1;
            }
        }
    }
    let mut checks = vec![Check {
        name: format!("exact bound over {} random chains", opts.specs),
        pass: violations == 0 && composite_ok,
        detail: format!("violations {violations}, min p/bound {worst_ratio:.6}, return condition held: {composite_ok}"),
    }];

    let spec = MarkovChainSpec::random_satisfying(&mut rng, cfg.safety.tau, horizon, xi)?;
    let exact = markov_exact(&spec);
    let sim = markov_simulate(&spec, opts.samples, opts.seed.wrapping_add(4000));
    let mut worst_z: f64 = 0.0;
    for (p, s) in exact.iter().zip(&sim) {
        let se = binomial_se(*p, opts.samples);
        if se > 0.0 {
            worst_z = worst_z.max((p - s).abs() / se);
        } else if p != s {
            worst_z = f64::INFINITY;
        }
    }
    checks.push(Check {
        name: "simulation agrees with exact recursion".into(),
        pass: worst_z <= BAND_SE,
        detail: format!("max |sim - exact| / SE = {worst_z:.3} over {} steps", exact.len()),
    });
    Ok(checks)
}

fn theorem2_checks(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let r = run_experiment(cfg)?;
    let rep = &r.report;
    let n = rep.totals.iter().copied().min().unwrap_or(0);
    Ok(vec![
        Check {
            name: format!("{} per-step band", cfg.environment),
            pass: rep.pass_band,
            detail: format!(
                "min frequency {:.4} (band {:.4}, n={n})",
                rep.min_frequency,
                band(rep.threshold, n)
            ),
        },
        Check {
            name: format!("{} mean over steps", cfg.environment),
            pass: rep.mean_frequency >= rep.threshold,
            detail: format!("mean frequency {:.4} vs {}", rep.mean_frequency, rep.threshold),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Pendulum;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn absorbing_chain_stays_safe() {
        let spec = MarkovChainSpec::new(vec![1.0; 4], 2, 50).unwrap();
        assert!(markov_exact(&spec).iter().all(|p| *p == 1.0));
        assert!(markov_simulate(&spec, 1000, 1).iter().all(|p| *p == 1.0));
    }

    #[test]
    fn one_step_chain_by_hand() {
        let (p, r, s) = (0.7, 0.4, 0.2);
        let spec = MarkovChainSpec::new(vec![p, r, s], 1, 3).unwrap();
        let e = markov_exact(&spec);
        assert_eq!(e[1], p);
        // p2 = p·p + (1 − p)·r
        assert!((e[2] - (p * p + (1.0 - p) * r)).abs() < 1e-15);
        // state 3 at k=2 holds (1 − p)(1 − r)
        let p3 = (p * p + (1.0 - p) * r) * p + (p * (1.0 - p)) * r + (1.0 - p) * (1.0 - r) * s;
        assert!((e[3] - p3).abs() < 1e-15);
    }

    #[test]
    fn reference_chain_exceeds_bound() {
        let spec = MarkovChainSpec::new(vec![0.9747, 0.999, 0.999, 0.999], 2, 100).unwrap();
        for (k, p) in markov_exact(&spec).iter().enumerate().skip(1) {
            assert!(*p > spec.lower_bound(0.9998, k));
        }
    }

    #[test]
    fn simulation_matches_exact_and_is_seeded() {
        let spec = MarkovChainSpec::new(vec![0.8, 0.6, 0.5, 0.3], 2, 30).unwrap();
        let exact = markov_exact(&spec);
        let sim = markov_simulate(&spec, 100_000, 3);
        assert_eq!(sim, markov_simulate(&spec, 100_000, 3));
        for (p, s) in exact.iter().zip(&sim) {
            assert!((p - s).abs() <= 3.0 * binomial_se(*p, 100_000) + 1e-12, "{p} {s}");
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MarkovChainSpec::new(vec![0.5; 3], 2, 10).is_err());
        assert!(MarkovChainSpec::new(vec![1.5, 0.5, 0.5], 1, 10).is_err());
        assert!(MarkovChainSpec::new(vec![0.5; 2], 0, 10).is_err());
    }

    proptest! {
        #[test]
        fn lemma2_bound_holds_for_random_specs(seed in any::<u64>(), tau in 1usize..5, xi in 0.99f64..0.99999) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = MarkovChainSpec::random_satisfying(&mut rng, tau, 100, xi).unwrap();
            prop_assert!(spec.return_within_tau() >= xi);
            for (k, p) in markov_exact(&spec).iter().enumerate().skip(1) {
                prop_assert!(*p > spec.lower_bound(xi, k));
            }
        }

        #[test]
        fn exact_chain_is_a_distribution(seed in any::<u64>(), tau in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho: Vec<f64> = (0..tau + 2).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
            let spec = MarkovChainSpec::new(rho, tau, 40).unwrap();
            prop_assert!(markov_exact(&spec).iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn zero_noise_exact_placement_is_always_safe() {
        let env = Pendulum::default();
        let model = env.linear_model();
        let cs = env.constraints();
        let noise = GaussianNoise::zero(2);
        let step = linear_step(&model);
        let x = [0.0, 2.0];
        let input = GaussianNoise::new(vec![-2.0 / 0.15], Matrix::zeros(1, 1)).unwrap();
        let f = mc_one_step_safety(&step, &cs, &[0.0, 0.0], &x, &input, &noise, 1000, 1).unwrap();
        assert_eq!(f.joint, 1000);
        let f = mc_tau_step_safety(&step, &cs, &[0.0, 0.0], &x, &[-2.0 / 0.15, 0.0], 1, &noise, 1000, 1).unwrap();
        assert_eq!(f.joint, 1000);
    }

    #[test]
    fn tau_one_matches_one_step() {
        let env = Pendulum::default();
        let model = env.linear_model();
        let cs = env.constraints();
        let step = linear_step(&model);
        let x = [PI, 5.0];
        let input = GaussianNoise::new(vec![-1.0], Matrix::zeros(1, 1)).unwrap();
        let a = mc_one_step_safety(&step, &cs, &[0.0, 0.0], &x, &input, &env.noise(), 20_000, 4).unwrap();
        let b = mc_tau_step_safety(&step, &cs, &[0.0, 0.0], &x, &[-1.0], 1, &env.noise(), 20_000, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimator_brackets_closed_form_gaussian_probability() {
        // ζ⁺ ~ N(5.5, 0.1²) against ζ ≤ 6 (the lower row is never active)
        let env = Pendulum::default();
        let model = env.linear_model();
        let cs = env.constraints();
        let step = linear_step(&model);
        let exact = crate::normal::normal_cdf(0.5 / 0.1).unwrap();
        let exact_tight = crate::normal::normal_cdf(0.05 / 0.1).unwrap();
        let input = GaussianNoise::new(vec![0.0], Matrix::zeros(1, 1)).unwrap();
        for (zeta, p) in [(5.0, exact), (5.45, exact_tight)] {
            let mut inside = 0;
            for seed in 0..8 {
                let f = mc_one_step_safety(&step, &cs, &[0.0, 0.0], &[PI, zeta], &input, &env.noise(), 20_000, seed).unwrap();
                let se = binomial_se(p, 20_000);
                inside += usize::from((f.joint_frequency() - p).abs() <= 3.0 * se + 1e-12);
                assert!(f.bonferroni_holds());
            }
            assert!(inside >= 7, "{zeta}: {inside}");
        }
    }

    #[test]
    fn frequency_report_examples() {
        let all_safe = vec![vec![true; 10]; 20];
        let r = frequency_report(&all_safe, 0.95).unwrap();
        assert!(r.pass_band && r.pass_strict);
        assert_eq!(r.frequencies, vec![1.0; 10]);

        let mut dip = vec![vec![true; 5]; 1000];
        for ep in dip.iter_mut().take(100) {
            ep[2] = false;
        }
        let r = frequency_report(&dip, 0.95).unwrap();
        assert!(!r.pass_band && !r.pass_strict);
        assert!((r.min_frequency - 0.9).abs() < 1e-12);
        assert!(r.wilson_lower[2] < 0.9 && r.wilson_upper[2] > 0.9);
        assert!(frequency_report(&[], 0.95).is_err());
    }

    #[test]
    fn wilson_reference_values() {
        // 95 of 100 at z = 1.96: (0.8883, 0.9784)
        let (lo, hi) = wilson_interval(95, 100, 1.959963984540054);
        assert!((lo - 0.88830).abs() < 1e-4 && (hi - 0.97845).abs() < 1e-4, "{lo} {hi}");
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("lemma3".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        let cfg = ExperimentConfig::default();
        let opts = SuiteOptions {
            samples: 20_000,
            states: 3,
            specs: 20,
            ..SuiteOptions::default()
        };
        for suite in [Suite::Lemma1, Suite::Lemma2, Suite::Theorem1Stay, Suite::Theorem1Back] {
            let r = run_suite(suite, &cfg, &opts).unwrap();
            assert!(r.passed(), "{r}");
        }
    }
}
