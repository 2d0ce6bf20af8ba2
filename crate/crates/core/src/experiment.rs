//! Configuration-driven training runs with the safety layer in the loop, and
//! their CSV artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Manipulator, Pendulum};
use crate::error::{Error, Result};
use crate::explorer::{Case, ConservativeInputs, Explorer, ExplorerSettings};
use crate::linalg::Matrix;
use crate::model::{GaussianNoise, SafetyConfig};
use crate::rl::{episode_return, DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use crate::safety::SafetyLayer;
use crate::verify::{frequency_report, FrequencyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentId {
    #[default]
    Pendulum,
    Manipulator,
}

impl FromStr for EnvironmentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "manipulator" => Ok(Self::Manipulator),
            other => Err(Error::Validation(vec![format!("unknown environment {other:?} (pendulum | manipulator)")])),
        }
    }
}

impl fmt::Display for EnvironmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pendulum => "pendulum",
            Self::Manipulator => "manipulator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Proposed,
    /// Same switching rule with the disturbance model removed from the
    /// safety layer and a zero stay input.
    Baseline,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "baseline" => Ok(Self::Baseline),
            other => Err(Error::Validation(vec![format!("unknown method {other:?} (proposed | baseline)")])),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Proposed => "proposed",
            Self::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySettings {
    pub eta: f64,
    pub xi: f64,
    pub tau: usize,
    /// Cap on the exploration scale `s` in `Σ_k = s² Σ_base`.
    pub s_max: f64,
    /// Per-action standard deviations of `Σ_base`; empty means all ones.
    pub sigma_base_std: Vec<f64>,
    /// Use the environment's hand-derived stay/back inputs when available.
    pub closed_form: bool,
    pub resolve_back_each_step: bool,
}

impl Default for SafetySettings {
    fn default() -> Self {
        Self {
            eta: 0.95,
            xi: 0.9998,
            tau: 2,
            s_max: 1.0,
            sigma_base_std: Vec::new(),
            closed_form: true,
            resolve_back_each_step: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub train_steps_per_env_step: usize,
    /// Also learn from stay/back transitions.
    pub store_conservative: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            train_steps_per_env_step: 1,
            store_conservative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentId,
    pub method: Method,
    pub seed: u64,
    pub runs: usize,
    pub episodes: usize,
    pub steps: usize,
    pub output_dir: Option<PathBuf>,
    pub safety: SafetySettings,
    pub training: TrainingSettings,
    pub ddpg: DdpgConfig,
    pub pendulum: Pendulum,
    pub manipulator: Manipulator,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentId::Pendulum,
            method: Method::Proposed,
            seed: 0,
            runs: 10,
            episodes: 100,
            steps: 100,
            output_dir: None,
            safety: SafetySettings::default(),
            training: TrainingSettings::default(),
            ddpg: DdpgConfig::default(),
            pendulum: Pendulum::default(),
            manipulator: Manipulator::default(),
        }
    }
}

fn positive(p: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        p.push(format!("{name} must be positive and finite, got {v}"));
    }
}

fn length(p: &mut Vec<String>, name: &str, v: &[f64], n: usize) {
    if v.len() != n {
        p.push(format!("{name} must have {n} entries, got {}", v.len()));
    } else if v.iter().any(|x| !x.is_finite()) {
        p.push(format!("{name} must be finite"));
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn environment(&self) -> Box<dyn Environment> {
        match self.environment {
            EnvironmentId::Pendulum => Box::new(self.pendulum.clone()),
            EnvironmentId::Manipulator => Box::new(self.manipulator.clone()),
        }
    }

    /// Every violated field, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        for (name, v) in [("runs", self.runs), ("episodes", self.episodes), ("steps", self.steps)] {
            if v == 0 {
                p.push(format!("{name} must be positive"));
            }
        }
        let s = &self.safety;
        if !(s.eta > 0.5 && s.eta < 1.0) {
            p.push(format!("safety.eta must lie in (0.5, 1), got {}", s.eta));
        }
        if self.steps > 0 && s.eta > 0.0 && s.eta < 1.0 {
            let lo = s.eta.powf(1.0 / self.steps as f64);
            if !(s.xi > lo && s.xi < 1.0) {
                p.push(format!("safety.xi must lie in (eta^(1/steps), 1) = ({lo}, 1), got {}", s.xi));
            }
        }
        if s.tau == 0 {
            p.push("safety.tau must be at least 1".into());
        }
        if !(s.s_max >= 0.0 && s.s_max.is_finite()) {
            p.push(format!("safety.s_max must be finite and >= 0, got {}", s.s_max));
        }
        if s.sigma_base_std.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            p.push("safety.sigma_base_std entries must be finite and >= 0".into());
        }
        if self.training.train_steps_per_env_step > 1000 {
            p.push("training.train_steps_per_env_step must be at most 1000".into());
        }
        p.extend(self.ddpg.problems());

        let pe = &self.pendulum;
        positive(&mut p, "pendulum.m", pe.params.m);
        positive(&mut p, "pendulum.l", pe.params.l);
        positive(&mut p, "pendulum.g", pe.params.g);
        positive(&mut p, "pendulum.ts", pe.params.ts);
        positive(&mut p, "pendulum.zeta_max", pe.zeta_max);
        length(&mut p, "pendulum.x0", &pe.x0, 2);
        length(&mut p, "pendulum.mu_w", &pe.mu_w, 2);
        length(&mut p, "pendulum.sigma_w", &pe.sigma_w, 2);
        if pe.sigma_w.iter().any(|v| *v < 0.0) {
            p.push("pendulum.sigma_w entries must be >= 0".into());
        }
        let ma = &self.manipulator;
        let mp = &ma.params;
        for (name, v) in [
            ("manipulator.m11_hat", mp.m11_hat),
            ("manipulator.m22_hat", mp.m22_hat),
            ("manipulator.d11_hat", mp.d11_hat),
            ("manipulator.d22_hat", mp.d22_hat),
            ("manipulator.v1", mp.v1),
            ("manipulator.v2", mp.v2),
            ("manipulator.alpha", mp.alpha),
            ("manipulator.ts", mp.ts),
            ("manipulator.omega_max", ma.omega_max),
        ] {
            positive(&mut p, name, v);
        }
        length(&mut p, "manipulator.x0", &ma.x0, 4);
        length(&mut p, "manipulator.mu_w", &ma.mu_w, 4);
        length(&mut p, "manipulator.sigma_w", &ma.sigma_w, 4);
        if ma.sigma_w.iter().any(|v| *v < 0.0) {
            p.push("manipulator.sigma_w entries must be >= 0".into());
        }
        if !p.is_empty() {
            return p;
        }

        let env = self.environment();
        if !s.sigma_base_std.is_empty() && s.sigma_base_std.len() != env.input_dim() {
            p.push(format!(
                "safety.sigma_base_std must be empty or have {} entries, got {}",
                env.input_dim(),
                s.sigma_base_std.len()
            ));
        }
        let x0 = env.initial_state();
        if !env.constraints().is_safe(&x0).unwrap_or(false) {
            p.push(format!("{}.x0 = {x0:?} lies outside the safe set", self.environment));
        }
        if s.closed_form && s.tau != env.closed_form_tau() {
            log::debug!("closed-form inputs assume tau = {}; the LP will be used", env.closed_form_tau());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Safety layer as seen by the chosen method.
    pub fn safety_layer(&self, env: &dyn Environment) -> Result<SafetyLayer<f64>> {
        let (db, big) = env.error_bounds(self.safety.tau);
        let cfg = SafetyConfig::new(self.safety.eta, self.safety.xi, self.safety.tau, self.steps, db, big)?;
        let noise = match self.method {
            Method::Proposed => env.noise(),
            Method::Baseline => GaussianNoise::zero(env.state_dim()),
        };
        SafetyLayer::new(env.linear_model(), env.constraints(), cfg, noise)
    }

    pub fn explorer_settings(&self, input_dim: usize) -> Result<ExplorerSettings<f64>> {
        let std = if self.safety.sigma_base_std.is_empty() {
            vec![1.0; input_dim]
        } else {
            self.safety.sigma_base_std.clone()
        };
        let var: Vec<f64> = std.iter().map(|s| s * s).collect();
        ExplorerSettings::new(Matrix::from_diagonal(&var), self.safety.s_max, self.safety.resolve_back_each_step)
    }
}

/// Hand-derived inputs of an environment, evaluated with the disturbance
/// mean the chosen method believes in.
struct EnvClosedForm {
    env: Box<dyn Environment>,
    mu_w: Vec<f64>,
    zero_stay: bool,
    use_formulas: bool,
}

impl ConservativeInputs<f64> for EnvClosedForm {
    fn stay(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.zero_stay {
            Some(vec![0.0; self.env.input_dim()])
        } else if self.use_formulas {
            Some(self.env.stay_input(x, &self.mu_w))
        } else {
            None
        }
    }

    fn back(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.use_formulas.then(|| self.env.back_sequence(x, &self.mu_w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub run: usize,
    pub episode: usize,
    pub step: usize,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub case: Case,
    pub safe: bool,
    pub next_safe: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub run: usize,
    pub episode: usize,
    pub cumulative_cost: f64,
    pub discounted_cost: f64,
    pub explore_steps: usize,
    pub stay_steps: usize,
    pub back_steps: usize,
    pub unsafe_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub report: FrequencyReport,
}

impl ExperimentResult {
    /// Undiscounted episode costs of one run, in episode order.
    pub fn run_costs(&self, run: usize) -> Vec<f64> {
        self.episodes.iter().filter(|e| e.run == run).map(|e| e.cumulative_cost).collect()
    }
}

fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

struct RunOutput {
    steps: Vec<StepRecord>,
    episodes: Vec<EpisodeRecord>,
}

fn run_one(cfg: &ExperimentConfig, layer: &Arc<SafetyLayer<f64>>, run: usize) -> Result<RunOutput> {
    let env = cfg.environment();
    let n = env.state_dim();
    let m = env.input_dim();
    let mut rng = run_rng(cfg.seed, run);
    let plant_noise = env.noise();
    let believed_mu = layer.noise().mean().to_vec();
    let use_formulas = cfg.safety.closed_form && cfg.safety.tau == env.closed_form_tau();
    let closed = EnvClosedForm {
        env: cfg.environment(),
        mu_w: believed_mu,
        zero_stay: cfg.method == Method::Baseline,
        use_formulas,
    };
    let mut explorer = Explorer::new(Arc::clone(layer), cfg.explorer_settings(m)?)?;
    if use_formulas || cfg.method == Method::Baseline {
        explorer = explorer.with_closed_form(Arc::new(closed));
    }
    let obs_dim = env.features(&env.initial_state()).len();
    let mut agent = DdpgAgent::new(obs_dim, m, env.default_action_bound(), cfg.ddpg.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.ddpg.buffer_capacity, obs_dim, m)?;

    let mut steps = Vec::with_capacity(cfg.episodes * cfg.steps);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        explorer.reset();
        let mut x = env.initial_state();
        let mut costs = Vec::with_capacity(cfg.steps);
        let mut counts = [0usize; 3];
        let mut unsafe_steps = 0;
        for step in 0..cfg.steps {
            let obs = env.features(&x);
            let mean = agent.policy_mean(&obs);
            let decision = explorer.decide(&x, &mean, &mut rng).map_err(|e| match e {
                Error::Infeasible(reason) => Error::UnrecoverableSafety {
                    run,
                    episode,
                    step,
                    reason,
                },
                other => other,
            })?;
            let w = plant_noise.sample(&mut rng);
            let x_next = env.step(&x, &decision.input, &w);
            let cost = env.cost(&x, &decision.input);
            costs.push(cost);
            let safe = layer.is_safe(&x)?;
            let next_safe = layer.is_safe(&x_next)?;
            counts[decision.case as usize] += 1;
            unsafe_steps += usize::from(!next_safe);
            if decision.case == Case::Exploratory || cfg.training.store_conservative {
                buffer.store(&Transition {
                    obs,
                    action: decision.input.clone(),
                    reward: -cost,
                    next_obs: env.features(&x_next),
                })?;
            }
            for _ in 0..cfg.training.train_steps_per_env_step {
                if buffer.len() >= cfg.ddpg.batch_size {
                    agent.train_step(&buffer, &mut rng)?;
                }
            }
            steps.push(StepRecord {
                run,
                episode,
                step,
                state: x.clone(),
                input: decision.input,
                case: decision.case,
                safe,
                next_safe,
                cost,
            });
            explorer.advance();
            x = x_next;
            debug_assert_eq!(x.len(), n);
        }
        let (discounted, cumulative) = episode_return(&costs, cfg.ddpg.gamma);
        if episode % 10 == 9 {
            log::info!("{} {} run {run} episode {}: cost {cumulative:.1}", cfg.environment, cfg.method, episode + 1);
        }
        episodes.push(EpisodeRecord {
            run,
            episode,
            cumulative_cost: cumulative,
            discounted_cost: discounted,
            explore_steps: counts[Case::Exploratory as usize],
            stay_steps: counts[Case::Stay as usize],
            back_steps: counts[Case::Back as usize],
            unsafe_steps,
        });
    }
    Ok(RunOutput { steps, episodes })
}

/// Runs are independent and seed-split, so the result does not depend on
/// thread scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let env = cfg.environment();
    let layer = Arc::new(cfg.safety_layer(env.as_ref())?);
    let outputs: Vec<RunOutput> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_one(cfg, &layer, r))
        .collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(cfg.runs * cfg.episodes * cfg.steps);
    let mut episodes = Vec::with_capacity(cfg.runs * cfg.episodes);
    for o in outputs {
        steps.extend(o.steps);
        episodes.extend(o.episodes);
    }
    let flags = next_safe_by_step(&steps, cfg.steps);
    let report = frequency_report(&flags, cfg.safety.eta)?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        steps,
        episodes,
        report,
    })
}

/// Column `k` holds the safety of `x_{k+1}` for every episode.
fn next_safe_by_step(steps: &[StepRecord], horizon: usize) -> Vec<Vec<bool>> {
    steps.chunks(horizon).map(|ep| ep.iter().map(|s| s.next_safe).collect()).collect()
}

pub const STEPS_CSV: &str = "steps.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const CONFIG_ECHO: &str = "config.toml";

/// `steps.csv`, `episodes.csv`, `aggregate.csv` and the resolved config.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = result.steps.first().map_or(0, |s| s.state.len());
    let m = result.steps.first().map_or(0, |s| s.input.len());

    let mut w = csv::Writer::from_path(dir.join(STEPS_CSV))?;
    let mut header = vec!["run".to_string(), "episode".into(), "step".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend(["case", "safe", "next_safe", "cost"].map(String::from));
    w.write_record(&header)?;
    for s in &result.steps {
        let mut row = vec![s.run.to_string(), s.episode.to_string(), s.step.to_string()];
        row.extend(s.state.iter().map(|v| v.to_string()));
        row.extend(s.input.iter().map(|v| v.to_string()));
        row.push(s.case.to_string());
        row.push(u8::from(s.safe).to_string());
        row.push(u8::from(s.next_safe).to_string());
        row.push(s.cost.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(EPISODES_CSV))?;
    w.write_record([
        "run",
        "episode",
        "cumulative_cost",
        "discounted_cost",
        "explore_steps",
        "stay_steps",
        "back_steps",
        "unsafe_steps",
    ])?;
    for e in &result.episodes {
        w.write_record([
            e.run.to_string(),
            e.episode.to_string(),
            e.cumulative_cost.to_string(),
            e.discounted_cost.to_string(),
            e.explore_steps.to_string(),
            e.stay_steps.to_string(),
            e.back_steps.to_string(),
            e.unsafe_steps.to_string(),
        ])?;
    }
    w.flush()?;

    let r = &result.report;
    let mut w = csv::Writer::from_path(dir.join(AGGREGATE_CSV))?;
    w.write_record(["step", "trials", "safe", "frequency", "wilson_lower", "wilson_upper", "eta"])?;
    for k in 0..r.frequencies.len() {
        w.write_record([
            (k + 1).to_string(),
            r.totals[k].to_string(),
            r.safe_counts[k].to_string(),
            r.frequencies[k].to_string(),
            r.wilson_lower[k].to_string(),
            r.wilson_upper[k].to_string(),
            r.threshold.to_string(),
        ])?;
    }
    w.flush()?;

    fs::write(dir.join(CONFIG_ECHO), result.config.to_toml_string()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(env: EnvironmentId, method: Method) -> ExperimentConfig {
        ExperimentConfig {
            environment: env,
            method,
            runs: 2,
            episodes: 2,
            steps: 30,
            seed: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str("environment = \"manipulator\"\n[safety]\neta = 0.9\n").unwrap();
        assert_eq!(partial.environment, EnvironmentId::Manipulator);
        assert_eq!(partial.safety.eta, 0.9);
        assert_eq!(partial.safety.xi, 0.9998);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut cfg = ExperimentConfig::default();
        cfg.runs = 0;
        cfg.safety.eta = 1.2;
        cfg.pendulum.params.m = -1.0;
        cfg.ddpg.batch_size = 0;
        match cfg.validate() {
            Err(Error::Validation(p)) => {
                assert!(p.len() >= 4, "{p:?}");
                assert!(p.iter().any(|s| s.contains("runs")));
                assert!(p.iter().any(|s| s.contains("eta")));
                assert!(p.iter().any(|s| s.contains("pendulum.m")));
                assert!(p.iter().any(|s| s.contains("batch_size")));
            }
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::default();
        cfg.safety.xi = 0.999;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.pendulum.x0 = vec![0.0, 7.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        for env in [EnvironmentId::Pendulum, EnvironmentId::Manipulator] {
            let cfg = small(env, Method::Proposed);
            let a = run_experiment(&cfg).unwrap();
            let b = run_experiment(&cfg).unwrap();
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.episodes, b.episodes);
            assert_eq!(a.steps.len(), 2 * 2 * 30);
        }
    }

    #[test]
    fn back_rows_follow_unsafe_states_only() {
        for method in [Method::Proposed, Method::Baseline] {
            let r = run_experiment(&small(EnvironmentId::Pendulum, method)).unwrap();
            for s in &r.steps {
                assert_eq!(s.case == Case::Back, !s.safe, "{s:?}");
            }
            for pair in r.steps.windows(2) {
                if pair[1].step > 0 {
                    assert_eq!(pair[0].next_safe, pair[1].safe);
                }
            }
        }
    }

    #[test]
    fn lp_path_matches_contract() {
        let mut cfg = small(EnvironmentId::Manipulator, Method::Proposed);
        cfg.safety.closed_form = false;
        cfg.runs = 1;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.steps.len(), 60);
    }

    #[test]
    fn artifacts_are_written() {
        let r = run_experiment(&small(EnvironmentId::Pendulum, Method::Proposed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(&r, dir.path()).unwrap();
        let steps = fs::read_to_string(dir.path().join(STEPS_CSV)).unwrap();
        assert!(steps.starts_with("run,episode,step,x0,x1,u0,case,safe,next_safe,cost\n"));
        assert_eq!(steps.lines().count(), 1 + 120);
        let agg = fs::read_to_string(dir.path().join(AGGREGATE_CSV)).unwrap();
        assert_eq!(agg.lines().count(), 1 + 30);
        let echoed = ExperimentConfig::load(&dir.path().join(CONFIG_ECHO)).unwrap();
        assert_eq!(echoed, r.config);
    }
}
