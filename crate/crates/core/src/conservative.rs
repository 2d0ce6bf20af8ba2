//! Conservative inputs: a one-step input that keeps a safe state safe with a
//! prescribed probability, and a τ-step sequence that returns an unsafe
//! state to the safe set.
//!
//! Both conditions are linear in the inputs once the Gaussian tail is
//! replaced by its quantile, so they are assembled as feasibility problems
//! and handed to [`solve_lp_feasible`].

use crate::chance::{check_level, per_row_level};
use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::lp::{solve_lp_feasible, LinearFeasibilityProblem, LpOutcome};
use crate::model::{GaussianNoise, LinearModel};
use crate::normal::normal_cdf_inv;
use crate::safety::SafetyLayer;
use crate::scalar::Real;

/// τ-step stacked model `x_{k+τ} = A^τ x_k + B̂ U_k + Ĉ (W_k + E_k)`.
///
/// `U_k` stacks `u_k, …, u_{k+τ−1}` in time order, so `B̂ = [A^{τ−1}B, …, B]`
/// and `Ĉ = [A^{τ−1}, …, I]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonModel<T> {
    pub tau: usize,
    pub a_pow_tau: Matrix<T>,
    pub b_hat: Matrix<T>,
    pub c_hat: Matrix<T>,
    pub mu_hat: Vec<T>,
    pub cov_block: Matrix<T>,
    cov_sqrt_block: Matrix<T>,
}

impl<T: Real> HorizonModel<T> {
    /// `‖hᵀ Ĉ blockdiag(Σ_w, …, Σ_w)^{1/2}‖₂`.
    pub fn projected_std(&self, h: &[T]) -> Result<T> {
        let hc = self.c_hat.left_mul_vec(h)?;
        let v = self.cov_sqrt_block.left_mul_vec(&hc)?;
        Ok(dot(&v, &v).sqrt())
    }

    /// Mean of `x_{k+τ}` under the linear model.
    pub fn predict_mean(&self, x: &[T], inputs: &[T]) -> Result<Vec<T>> {
        if inputs.len() != self.b_hat.cols() {
            return shape_err("HorizonModel::predict_mean inputs", self.b_hat.cols(), inputs.len());
        }
        let ax = self.a_pow_tau.mul_vec(x)?;
        let bu = self.b_hat.mul_vec(inputs)?;
        let cm = self.c_hat.mul_vec(&self.mu_hat)?;
        Ok((0..ax.len()).map(|i| ax[i] + bu[i] + cm[i]).collect())
    }
}

pub fn build_horizon<T: Real>(model: &LinearModel<T>, noise: &GaussianNoise<T>, tau: usize) -> Result<HorizonModel<T>> {
    if tau == 0 {
        return Err(Error::Domain("recovery horizon tau must be at least 1".into()));
    }
    let n = model.state_dim();
    if noise.dim() != n {
        return shape_err("build_horizon noise", n, noise.dim());
    }
    // powers[i] = A^i
    let mut powers = vec![Matrix::identity(n)];
    for i in 1..=tau {
        powers.push(powers[i - 1].matmul(model.a())?);
    }
    let mut b_blocks = Vec::with_capacity(tau);
    let mut c_blocks = Vec::with_capacity(tau);
    for i in (0..tau).rev() {
        b_blocks.push(powers[i].matmul(model.b())?);
        c_blocks.push(powers[i].clone());
    }
    let covs = vec![noise.cov().clone(); tau];
    let roots = vec![noise.cov_sqrt().clone(); tau];
    Ok(HorizonModel {
        tau,
        a_pow_tau: powers[tau].clone(),
        b_hat: Matrix::hcat(&b_blocks)?,
        c_hat: Matrix::hcat(&c_blocks)?,
        mu_hat: noise.mean().repeat(tau),
        cov_block: Matrix::block_diag(&covs),
        cov_sqrt_block: Matrix::block_diag(&roots),
    })
}

impl<T: Real> SafetyLayer<T> {
    /// Per `(j, δ)`: `d_j − h_jᵀ(A x + μ_w) − δ − Φ⁻¹(q′)‖h_jᵀΣ_w^{1/2}‖` and the
    /// input coefficients `h_jᵀ B`; the one-step condition reads
    /// `h_jᵀ B u ≤ budget`.
    fn stay_rows(&self, x: &[T], q: T) -> Result<Vec<(Vec<T>, T)>> {
        check_level(q)?;
        let z = normal_cdf_inv(per_row_level(q, self.n_constraints()))?;
        let drift = self.predict_mean_next(x, &vec![T::zero(); self.input_dim()])?;
        let margins = self.constraints().constraint_margins(&drift)?;
        let mut rows = Vec::with_capacity(2 * margins.len());
        for (j, &margin) in margins.iter().enumerate() {
            let bar = self.config().delta_bar()[j];
            for delta in [bar, -bar] {
                rows.push((self.row_gain[j].clone(), margin - delta - z * self.row_noise_std[j]));
            }
        }
        Ok(rows)
    }

    fn back_rows(&self, x: &[T], q: T) -> Result<Vec<(Vec<T>, T)>> {
        check_level(q)?;
        let z = normal_cdf_inv(per_row_level(q, self.n_constraints()))?;
        let hz = self.horizon();
        let drift = hz.predict_mean(x, &vec![T::zero(); hz.b_hat.cols()])?;
        let margins = self.constraints().constraint_margins(&drift)?;
        let mut rows = Vec::with_capacity(2 * margins.len());
        for (j, &margin) in margins.iter().enumerate() {
            let gain = hz.b_hat.left_mul_vec(self.constraints().row(j))?;
            let bar = self.config().big_delta_bar()[j];
            for delta in [bar, -bar] {
                rows.push((gain.clone(), margin - delta - z * self.row_horizon_noise_std[j]));
            }
        }
        Ok(rows)
    }

    /// One-step condition at joint level `q` for all `(j, ±δ̄_j)`.
    pub fn stay_condition_holds(&self, x: &[T], u: &[T], q: T) -> Result<bool> {
        if u.len() != self.input_dim() {
            return shape_err("stay_condition_holds u", self.input_dim(), u.len());
        }
        let tol = T::check_tolerance();
        Ok(self
            .stay_rows(x, q)?
            .iter()
            .all(|(gain, budget)| dot(gain, u) <= *budget + tol))
    }

    /// τ-step condition at joint level `q` for all `(j, ±Δ̄_j)`.
    pub fn back_condition_holds(&self, x: &[T], inputs: &[T], q: T) -> Result<bool> {
        let expected = self.input_dim() * self.config().tau();
        if inputs.len() != expected {
            return shape_err("back_condition_holds U", expected, inputs.len());
        }
        let tol = T::check_tolerance();
        Ok(self
            .back_rows(x, q)?
            .iter()
            .all(|(gain, budget)| dot(gain, inputs) <= *budget + tol))
    }

    pub fn stay_problem(&self, x: &[T], q: T) -> Result<LinearFeasibilityProblem<T>> {
        rows_to_problem(self.stay_rows(x, q)?)
    }

    pub fn back_problem(&self, x: &[T], q: T) -> Result<LinearFeasibilityProblem<T>> {
        rows_to_problem(self.back_rows(x, q)?)
    }

    /// Smallest-∞-norm input satisfying the one-step condition at level `q`.
    pub fn solve_stay_input(&self, x: &[T], q: T) -> Result<LpOutcome<T>> {
        solve_lp_feasible(&self.stay_problem(x, q)?)
    }

    /// Smallest-∞-norm τ-step sequence satisfying the recovery condition.
    pub fn solve_back_sequence(&self, x: &[T], q: T) -> Result<LpOutcome<T>> {
        solve_lp_feasible(&self.back_problem(x, q)?)
    }
}

fn rows_to_problem<T: Real>(rows: Vec<(Vec<T>, T)>) -> Result<LinearFeasibilityProblem<T>> {
    let (gains, budgets): (Vec<Vec<T>>, Vec<T>) = rows.into_iter().unzip();
    LinearFeasibilityProblem::new(Matrix::from_rows(&gains)?, budgets)
}
