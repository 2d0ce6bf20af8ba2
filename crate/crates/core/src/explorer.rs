//! Per-step switching between exploratory, stay and back inputs.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{add_vec, Matrix};
use crate::lp::LpOutcome;
use crate::safety::SafetyLayer;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Exploratory,
    Stay,
    Back,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Exploratory => "explore",
            Case::Stay => "stay",
            Case::Back => "back",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Decision<T> {
    pub case: Case,
    pub input: Vec<T>,
    /// Zero unless the case is exploratory.
    pub sigma_used: Matrix<T>,
    pub epsilon: Vec<T>,
    pub back_index: Option<usize>,
    pub k: usize,
}

/// Hand-derived conservative inputs for a specific plant. Returning `None`
/// defers to the LP.
pub trait ConservativeInputs<T>: Send + Sync {
    fn stay(&self, x: &[T]) -> Option<Vec<T>>;
    fn back(&self, x: &[T]) -> Option<Vec<T>>;
}

#[derive(Debug, Clone)]
pub struct ExplorerSettings<T> {
    sigma_base: Matrix<T>,
    sigma_base_sqrt: Matrix<T>,
    s_max: T,
    resolve_back_each_step: bool,
}

impl<T: Real> ExplorerSettings<T> {
    pub fn new(sigma_base: Matrix<T>, s_max: T, resolve_back_each_step: bool) -> Result<Self> {
        if !sigma_base.is_square() {
            return shape_err("ExplorerSettings sigma_base", "square", format!("{:?}", sigma_base.shape()));
        }
        if !(s_max >= T::zero()) || !s_max.is_finite() {
            return Err(Error::Domain(format!("s_max must be finite and nonnegative, got {s_max}")));
        }
        let sigma_base_sqrt = sigma_base.psd_sqrt()?;
        Ok(Self {
            sigma_base,
            sigma_base_sqrt,
            s_max,
            resolve_back_each_step,
        })
    }

    /// Identity base covariance with per-action standard deviation `s_max`.
    pub fn isotropic(m: usize, s_max: T) -> Result<Self> {
        Self::new(Matrix::identity(m), s_max, false)
    }

    pub fn sigma_base(&self) -> &Matrix<T> {
        &self.sigma_base
    }

    pub fn s_max(&self) -> T {
        self.s_max
    }

    pub fn resolve_back_each_step(&self) -> bool {
        self.resolve_back_each_step
    }
}

#[derive(Debug, Clone)]
struct PendingBack<T> {
    sequence: Vec<T>,
    cursor: usize,
}

/// One per episode.
pub struct Explorer<T> {
    layer: Arc<SafetyLayer<T>>,
    settings: ExplorerSettings<T>,
    closed_form: Option<Arc<dyn ConservativeInputs<T>>>,
    k: usize,
    pending: Option<PendingBack<T>>,
    last_case: Option<Case>,
}

impl<T: Real> Explorer<T> {
    pub fn new(layer: Arc<SafetyLayer<T>>, settings: ExplorerSettings<T>) -> Result<Self> {
        let m = layer.input_dim();
        if settings.sigma_base.rows() != m {
            return shape_err("Explorer sigma_base", format!("{m}x{m}"), format!("{:?}", settings.sigma_base.shape()));
        }
        Ok(Self {
            layer,
            settings,
            closed_form: None,
            k: 0,
            pending: None,
            last_case: None,
        })
    }

    pub fn with_closed_form(mut self, inputs: Arc<dyn ConservativeInputs<T>>) -> Self {
        self.closed_form = Some(inputs);
        self
    }

    pub fn layer(&self) -> &SafetyLayer<T> {
        &self.layer
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_pending_back(&self) -> bool {
        self.pending.is_some()
    }

    /// Rewind to step 0 for a new episode.
    pub fn reset(&mut self) {
        self.k = 0;
        self.pending = None;
        self.last_case = None;
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, x: &[T], policy_mean: &[T], rng: &mut R) -> Result<Decision<T>> {
        let layer = Arc::clone(&self.layer);
        let horizon = layer.config().horizon();
        if self.k >= horizon {
            return Err(Error::Precondition(format!("episode horizon {horizon} reached")));
        }
        let m = layer.input_dim();
        if policy_mean.len() != m {
            return shape_err("decide policy_mean", m, policy_mean.len());
        }
        let k = self.k;
        let zero_sigma = Matrix::zeros(m, m);

        if !layer.is_safe(x)? {
            let (input, index) = self.next_back_input(x)?;
            self.last_case = Some(Case::Back);
            return Ok(Decision {
                case: Case::Back,
                input,
                sigma_used: zero_sigma,
                epsilon: vec![T::zero(); m],
                back_index: Some(index),
                k,
            });
        }
        self.pending = None;

        if layer.exploration_feasible(x, policy_mean, k)? {
            let cov = layer.max_exploration_cov(x, policy_mean, k, &self.settings.sigma_base, self.settings.s_max)?;
            let z: Vec<T> = (0..m).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let epsilon: Vec<T> = self.settings.sigma_base_sqrt.mul_vec(&z)?.into_iter().map(|e| e * cov.scale).collect();
            self.last_case = Some(Case::Exploratory);
            return Ok(Decision {
                case: Case::Exploratory,
                input: add_vec(policy_mean, &epsilon),
                sigma_used: cov.cov,
                epsilon,
                back_index: None,
                k,
            });
        }

        let input = match self.closed_form.as_ref().and_then(|c| c.stay(x)) {
            Some(u) => u,
            None => {
                let q = layer.q_stay(k)?;
                match layer.solve_stay_input(x, q)? {
                    LpOutcome::Feasible(u) => u,
                    LpOutcome::Infeasible { violation } => {
                        return Err(Error::Infeasible(format!(
                            "no stay input at step {k} (min violation {violation})"
                        )))
                    }
                }
            }
        };
        self.last_case = Some(Case::Stay);
        Ok(Decision {
            case: Case::Stay,
            input,
            sigma_used: zero_sigma,
            epsilon: vec![T::zero(); m],
            back_index: None,
            k,
        })
    }

    fn next_back_input(&mut self, x: &[T]) -> Result<(Vec<T>, usize)> {
        let tau = self.layer.config().tau();
        let m = self.layer.input_dim();
        let exhausted = self.pending.as_ref().is_none_or(|p| p.cursor >= tau);
        if exhausted || self.settings.resolve_back_each_step {
            let sequence = self.fresh_back_sequence(x)?;
            if sequence.len() != m * tau {
                return shape_err("back sequence", m * tau, sequence.len());
            }
            self.pending = Some(PendingBack { sequence, cursor: 0 });
        }
        let p = self.pending.as_ref().expect("pending sequence set above");
        let i = p.cursor;
        Ok((p.sequence[i * m..(i + 1) * m].to_vec(), i))
    }

    fn fresh_back_sequence(&self, x: &[T]) -> Result<Vec<T>> {
        if let Some(seq) = self.closed_form.as_ref().and_then(|c| c.back(x)) {
            return Ok(seq);
        }
        let xi = self.layer.config().xi();
        match self.layer.solve_back_sequence(x, xi)? {
            LpOutcome::Feasible(seq) => Ok(seq),
            LpOutcome::Infeasible { violation } => Err(Error::Infeasible(format!(
                "no back sequence at step {} (min violation {violation})",
                self.k
            ))),
        }
    }

    /// Move to the next step after the decided input has been applied.
    pub fn advance(&mut self) {
        self.k += 1;
        if self.last_case == Some(Case::Back) {
            if let Some(p) = self.pending.as_mut() {
                p.cursor += 1;
            }
        } else {
            self.pending = None;
        }
        self.last_case = None;
    }
}
