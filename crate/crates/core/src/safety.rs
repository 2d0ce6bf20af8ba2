use crate::conservative::{build_horizon, HorizonModel};
use crate::error::{shape_err, Result};
use crate::model::{predict_mean_next, ConstraintSet, GaussianNoise, LinearModel, SafetyConfig};
use crate::scalar::Real;

/// Everything the safety rule needs to know about the plant, bundled and
/// validated once: linear model, safe set, probability schedule and
/// disturbance model, plus per-row quantities that never change.
#[derive(Debug, Clone)]
pub struct SafetyLayer<T> {
    model: LinearModel<T>,
    constraints: ConstraintSet<T>,
    config: SafetyConfig<T>,
    noise: GaussianNoise<T>,
    horizon: HorizonModel<T>,
    /// `h_jᵀ B`
    pub(crate) row_gain: Vec<Vec<T>>,
    /// `‖h_jᵀ Σ_w^{1/2}‖₂`
    pub(crate) row_noise_std: Vec<T>,
    /// `‖h_jᵀ Ĉ blockdiag(Σ_w, …)^{1/2}‖₂`
    pub(crate) row_horizon_noise_std: Vec<T>,
}

impl<T: Real> SafetyLayer<T> {
    pub fn new(
        model: LinearModel<T>,
        constraints: ConstraintSet<T>,
        config: SafetyConfig<T>,
        noise: GaussianNoise<T>,
    ) -> Result<Self> {
        let n = model.state_dim();
        if noise.dim() != n {
            return shape_err("SafetyLayer noise", n, noise.dim());
        }
        constraints.check_input_coupling(&model)?;
        let nc = constraints.len();
        if config.delta_bar().len() != nc {
            return shape_err("SafetyLayer delta_bar", nc, config.delta_bar().len());
        }
        let horizon = build_horizon(&model, &noise, config.tau())?;
        let mut row_gain = Vec::with_capacity(nc);
        let mut row_noise_std = Vec::with_capacity(nc);
        let mut row_horizon_noise_std = Vec::with_capacity(nc);
        for j in 0..nc {
            let h = constraints.row(j);
            row_gain.push(model.b().left_mul_vec(h)?);
            row_noise_std.push(noise.projected_std(h)?);
            row_horizon_noise_std.push(horizon.projected_std(h)?);
        }
        Ok(Self {
            model,
            constraints,
            config,
            noise,
            horizon,
            row_gain,
            row_noise_std,
            row_horizon_noise_std,
        })
    }

    pub fn model(&self) -> &LinearModel<T> {
        &self.model
    }

    pub fn constraints(&self) -> &ConstraintSet<T> {
        &self.constraints
    }

    pub fn config(&self) -> &SafetyConfig<T> {
        &self.config
    }

    pub fn noise(&self) -> &GaussianNoise<T> {
        &self.noise
    }

    pub fn horizon(&self) -> &HorizonModel<T> {
        &self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_safe(&self, x: &[T]) -> Result<bool> {
        self.constraints.is_safe(x)
    }

    pub fn predict_mean_next(&self, x: &[T], u_mean: &[T]) -> Result<Vec<T>> {
        predict_mean_next(&self.model, &self.noise, x, u_mean)
    }

    /// Per-row noise level `‖h_jᵀ Σ_w^{1/2}‖₂`.
    pub fn row_noise_std(&self) -> &[T] {
        &self.row_noise_std
    }
}
