//! Deterministic reformulation of the per-step Gaussian chance constraints.
//!
//! For a row `h_j` and a worst-case model error `δ_j ∈ {±δ̄_j}`, the next state
//! satisfies `h_jᵀ x⁺ ≤ d_j` with probability at least `q` whenever the
//! standard deviation of `h_jᵀ x⁺` does not exceed the tightened radius
//! `(d_j − h_jᵀ x̂ − δ_j) / Φ⁻¹(q)`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::SafetyConfig;
use crate::normal::normal_cdf_inv;
use crate::safety::SafetyLayer;
use crate::scalar::Real;

/// Tightened radius for one `(row, δ)` pair. A negative radius means no
/// amount of variance reduction can satisfy the row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightenedBound<T> {
    pub row: usize,
    pub delta: T,
    pub radius: T,
}

/// Exploration covariance `s² Σ_base` chosen for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationCov<T> {
    pub scale: T,
    pub cov: Matrix<T>,
}

fn check_step<T: Real>(cfg: &SafetyConfig<T>, k: usize) -> Result<()> {
    if k > cfg.horizon() {
        return Err(Error::Domain(format!("timestep {k} exceeds horizon {}", cfg.horizon())));
    }
    Ok(())
}

/// `(η / ξ^k)^{1/τ}`: the one-step joint safety level a safe state must keep.
pub fn q_stay<T: Real>(cfg: &SafetyConfig<T>, k: usize) -> Result<T> {
    check_step(cfg, k)?;
    let ratio = cfg.eta() / cfg.xi().powi(k as i32);
    Ok(ratio.powf(T::one() / T::from_usize_lossy(cfg.tau())))
}

/// Per-row level `1 − (1 − q_stay(k)) / n_c` (union bound over rows).
pub fn eta_prime<T: Real>(cfg: &SafetyConfig<T>, n_c: usize, k: usize) -> Result<T> {
    if n_c == 0 {
        return Err(Error::Domain("eta_prime needs at least one constraint".into()));
    }
    let q = q_stay(cfg, k)?;
    Ok(T::one() - (T::one() - q) / T::from_usize_lossy(n_c))
}

/// Per-row level for a joint target `q`: `1 − (1 − q) / n_c`.
pub fn per_row_level<T: Real>(q: T, n_c: usize) -> T {
    T::one() - (T::one() - q) / T::from_usize_lossy(n_c)
}

pub(crate) fn check_level<T: Real>(q: T) -> Result<()> {
    if !(q > T::lit(0.5) && q < T::one()) {
        return Err(Error::Domain(format!("probability level must lie in (0.5, 1), got {q}")));
    }
    Ok(())
}

impl<T: Real> SafetyLayer<T> {
    pub fn eta_prime(&self, k: usize) -> Result<T> {
        eta_prime(self.config(), self.n_constraints(), k)
    }

    pub fn q_stay(&self, k: usize) -> Result<T> {
        q_stay(self.config(), k)
    }

    /// One entry per `(j, δ_j ∈ {+δ̄_j, −δ̄_j})`, in that order.
    pub fn tightened_radii(&self, x: &[T], u_mean: &[T], q: T) -> Result<Vec<TightenedBound<T>>> {
        check_level(q)?;
        let z = normal_cdf_inv(q)?;
        let x_hat = self.predict_mean_next(x, u_mean)?;
        let margins = self.constraints().constraint_margins(&x_hat)?;
        let mut out = Vec::with_capacity(2 * margins.len());
        for (j, &margin) in margins.iter().enumerate() {
            let bar = self.config().delta_bar()[j];
            for delta in [bar, -bar] {
                out.push(TightenedBound {
                    row: j,
                    delta,
                    radius: (margin - delta) / z,
                });
            }
        }
        Ok(out)
    }

    /// Case-(i) guard: the disturbance alone fits inside every tightened radius
    /// at level η′_k.
    pub fn exploration_feasible(&self, x: &[T], u_mean: &[T], k: usize) -> Result<bool> {
        let q = self.eta_prime(k)?;
        let radii = self.tightened_radii(x, u_mean, q)?;
        Ok(radii.iter().all(|b| self.row_noise_std[b.row] <= b.radius))
    }

    /// Largest `s ∈ [0, s_max]` with `Σ_k = s² Σ_base` satisfying the
    /// covariance condition for every `(j, δ_j)`.
    pub fn max_exploration_cov(
        &self,
        x: &[T],
        u_mean: &[T],
        k: usize,
        sigma_base: &Matrix<T>,
        s_max: T,
    ) -> Result<ExplorationCov<T>> {
        let m = self.input_dim();
        if sigma_base.shape() != (m, m) {
            return crate::error::shape_err("max_exploration_cov sigma_base", format!("{m}x{m}"), format!("{:?}", sigma_base.shape()));
        }
        if !(s_max >= T::zero()) {
            return Err(Error::Domain(format!("s_max must be nonnegative, got {s_max}")));
        }
        sigma_base.psd_sqrt()?;
        let q = self.eta_prime(k)?;
        let radii = self.tightened_radii(x, u_mean, q)?;
        if radii.iter().any(|b| self.row_noise_std[b.row] > b.radius) {
            return Err(Error::Precondition(format!(
                "exploration infeasible at step {k}: disturbance alone violates a tightened radius"
            )));
        }
        let mut s2 = s_max * s_max;
        for b in &radii {
            let gain = sigma_base.quadratic_form(&self.row_gain[b.row])?;
            if gain <= T::zero() {
                continue;
            }
            let w = self.row_noise_std[b.row];
            let room = (b.radius * b.radius - w * w).max(T::zero());
            s2 = s2.min(room / gain);
        }
        let scale = s2.sqrt();
        Ok(ExplorationCov {
            scale,
            cov: sigma_base.scale(s2),
        })
    }

    /// Verify the covariance condition at level η′_k by forming
    /// `‖h_jᵀ [B, I] blockdiag(Σ_k, Σ_w)^{1/2}‖₂` explicitly.
    pub fn check_sigma(&self, x: &[T], u_mean: &[T], k: usize, sigma: &Matrix<T>) -> Result<bool> {
        let q = self.eta_prime(k)?;
        self.check_sigma_at(x, u_mean, q, sigma)
    }

    pub fn check_sigma_at(&self, x: &[T], u_mean: &[T], q: T, sigma: &Matrix<T>) -> Result<bool> {
        let n = self.state_dim();
        let m = self.input_dim();
        if sigma.shape() != (m, m) {
            return crate::error::shape_err("check_sigma sigma", format!("{m}x{m}"), format!("{:?}", sigma.shape()));
        }
        let b_ext = Matrix::hcat(&[self.model().b().clone(), Matrix::identity(n)])?;
        let joint = Matrix::block_diag(&[sigma.clone(), self.noise().cov().clone()]);
        let root = joint.psd_sqrt()?;
        let radii = self.tightened_radii(x, u_mean, q)?;
        let tol = T::check_tolerance();
        for b in &radii {
            let row = b_ext.left_mul_vec(self.constraints().row(b.row))?;
            let v = root.left_mul_vec(&row)?;
            let lhs = dot(&v, &v).sqrt();
            if lhs > b.radius + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, Pendulum};
    use crate::linalg::norm2;
    use crate::model::{ConstraintSet, GaussianNoise, LinearModel};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pendulum() -> SafetyLayer<f64> {
        Pendulum::default().safety_layer(0.95, 0.9998, 2, 100).unwrap()
    }

    fn cfg(eta: f64, xi: f64, tau: usize) -> SafetyConfig<f64> {
        SafetyConfig::new(eta, xi, tau, 100, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn schedule_reference_values() {
        // Frozen from 30-digit evaluation of the closed forms.
        let c = cfg(0.95, 0.9998, 2);
        assert!((eta_prime(&c, 2, 0).unwrap() - 0.987_339_717_240_448_2).abs() < 1e-12);
        assert!((eta_prime(&c, 2, 100).unwrap() - 0.992_238_055_128_916_4).abs() < 1e-12);
        assert!((q_stay(&c, 0).unwrap() - 0.974_679_434_480_896_4).abs() < 1e-12);
        assert!((q_stay(&c, 100).unwrap() - 0.984_476_110_257_832_9).abs() < 1e-12);
    }

    #[test]
    fn schedule_collapses_for_single_row_single_step() {
        let c = SafetyConfig::<f64>::new(0.95, 0.9998, 1, 100, vec![0.0], vec![0.0]).unwrap();
        assert!((eta_prime(&c, 1, 0).unwrap() - 0.95).abs() < 1e-15);
        assert!((q_stay(&c, 0).unwrap() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_steps_past_horizon() {
        let c = cfg(0.95, 0.9998, 2);
        assert!(matches!(eta_prime(&c, 2, 101), Err(Error::Domain(_))));
        assert!(matches!(q_stay(&c, 101), Err(Error::Domain(_))));
    }

    #[test]
    fn radii_reference_example() {
        let layer = pendulum();
        let radii = layer.tightened_radii(&[PI, 0.0], &[0.0], 0.98734).unwrap();
        assert_eq!(radii.len(), 4);
        let r = radii[0];
        assert_eq!(r.row, 0);
        assert!((r.delta - 0.735).abs() < 1e-12);
        let expected = (6.0 - 0.5 - 0.735) / normal_cdf_inv(0.98734).unwrap();
        assert!((r.radius - expected).abs() < 1e-12);
        assert!((r.radius - 2.1306).abs() < 1e-3);
    }

    #[test]
    fn radius_zero_when_error_consumes_margin_and_negative_outside() {
        let model = LinearModel::new(Matrix::identity(1), Matrix::column(&[1.0])).unwrap();
        let cs = ConstraintSet::new(Matrix::column(&[1.0]), vec![1.0]).unwrap();
        let sc = SafetyConfig::new(0.95, 0.9998, 1, 100, vec![0.4], vec![0.4]).unwrap();
        let layer = SafetyLayer::new(model, cs, sc, GaussianNoise::zero(1)).unwrap();
        let r = layer.tightened_radii(&[0.6], &[0.0], 0.9).unwrap();
        assert_eq!(r[0].radius, 0.0);
        let r = layer.tightened_radii(&[1.5], &[0.0], 0.9).unwrap();
        assert!(r[0].radius < 0.0);
        assert!(matches!(layer.tightened_radii(&[0.0], &[0.0], 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn feasibility_examples() {
        let layer = pendulum();
        assert!(layer.exploration_feasible(&[PI, 0.0], &[0.0], 0).unwrap());
        assert!((layer.row_noise_std()[0] - 0.1).abs() < 1e-15);
        // predicted ζ = 6.4 already past the bound
        assert!(!layer.exploration_feasible(&[0.0, 5.9], &[0.0], 0).unwrap());
    }

    #[test]
    fn zero_noise_is_feasible_when_radii_nonnegative() {
        let env = Pendulum::default();
        let sc = SafetyConfig::new(0.95, 0.9998, 2, 100, vec![0.735; 2], vec![1.47; 2]).unwrap();
        let layer = SafetyLayer::new(env.linear_model(), env.constraints(), sc, GaussianNoise::zero(2)).unwrap();
        let radii = layer.tightened_radii(&[0.0, 1.0], &[0.0], layer.eta_prime(0).unwrap()).unwrap();
        assert!(radii.iter().all(|b| b.radius >= 0.0));
        assert!(layer.exploration_feasible(&[0.0, 1.0], &[0.0], 0).unwrap());
    }

    #[test]
    fn max_cov_is_capped_by_s_max() {
        let layer = pendulum();
        let base = Matrix::identity(1);
        let c = layer.max_exploration_cov(&[PI, 0.0], &[0.0], 0, &base, 1.0).unwrap();
        assert_eq!(c.scale, 1.0);
        assert_eq!(c.cov[(0, 0)], 1.0);
        // uncapped bound from the hand computation (2.130² − 0.01) / 0.15²
        let big = layer.max_exploration_cov(&[PI, 0.0], &[0.0], 0, &base, 1e6).unwrap();
        let r = (6.0 - 0.5 - 0.735) / normal_cdf_inv(layer.eta_prime(0).unwrap()).unwrap();
        let expected = ((r * r - 0.01) / 0.0225).sqrt();
        assert!((big.scale - expected).abs() < 1e-9);
        let zero = layer.max_exploration_cov(&[PI, 0.0], &[0.0], 0, &base, 0.0).unwrap();
        assert_eq!(zero.cov[(0, 0)], 0.0);
    }

    #[test]
    fn max_cov_zero_at_exact_boundary() {
        // radius equals the disturbance norm exactly: d − x̂ − δ = Φ⁻¹(q)·σ_w
        let model = LinearModel::new(Matrix::identity(1), Matrix::column(&[1.0])).unwrap();
        let cs = ConstraintSet::new(Matrix::column(&[1.0]), vec![1.0]).unwrap();
        let sc = SafetyConfig::new(0.95, 0.9998, 1, 100, vec![0.0], vec![0.0]).unwrap();
        let noise = GaussianNoise::diagonal(vec![0.0], &[0.25]).unwrap();
        let layer = SafetyLayer::new(model, cs, sc, noise).unwrap();
        let z = normal_cdf_inv(layer.eta_prime(0).unwrap()).unwrap();
        let x = 1.0 - z * 0.25;
        let c = layer.max_exploration_cov(&[x], &[0.0], 0, &Matrix::identity(1), 10.0).unwrap();
        assert!(c.scale < 1e-6, "scale {}", c.scale);
    }

    #[test]
    fn max_cov_rejects_infeasible_state() {
        let layer = pendulum();
        let res = layer.max_exploration_cov(&[0.0, 5.9], &[0.0], 0, &Matrix::identity(1), 1.0);
        assert!(matches!(res, Err(Error::Precondition(_))));
    }

    #[test]
    fn unconstrained_direction_returns_s_max() {
        // Two inputs; only the first reaches the constrained row, the base
        // covariance only excites the second.
        let model = LinearModel::new(Matrix::identity(1), Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        let cs = ConstraintSet::new(Matrix::column(&[1.0]), vec![1.0]).unwrap();
        let sc = SafetyConfig::new(0.95, 0.9998, 1, 100, vec![0.0], vec![0.0]).unwrap();
        let layer = SafetyLayer::new(model, cs, sc, GaussianNoise::zero(1)).unwrap();
        let base = Matrix::from_diagonal(&[0.0, 1.0]);
        let c = layer.max_exploration_cov(&[0.0], &[0.0, 0.0], 0, &base, 3.0).unwrap();
        assert_eq!(c.scale, 3.0);
    }

    #[test]
    fn check_sigma_accepts_construction_and_rejects_inflation() {
        let layer = pendulum();
        let base = Matrix::identity(1);
        let x = [0.3, 4.0];
        let c = layer.max_exploration_cov(&x, &[0.0], 3, &base, 1e6).unwrap();
        assert!(c.scale < 1e6, "expected binding case");
        assert!(layer.check_sigma(&x, &[0.0], 3, &c.cov).unwrap());
        assert!(!layer.check_sigma(&x, &[0.0], 3, &c.cov.scale(1.01)).unwrap());
        assert!(layer.check_sigma(&x, &[0.0], 3, &Matrix::zeros(1, 1)).unwrap());
        let bad = Matrix::from_diagonal(&[-1.0]);
        assert!(matches!(layer.check_sigma(&x, &[0.0], 3, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn generic_over_f32() {
        let model = LinearModel::new(
            Matrix::<f32>::from_rows(&[vec![1.0, 0.05], vec![0.0, 1.0]]).unwrap(),
            Matrix::column(&[0.0, 0.15]),
        )
        .unwrap();
        let cs = ConstraintSet::symmetric_bounds(2, &[1], 6.0f32).unwrap();
        let sc = SafetyConfig::new(0.95f32, 0.9998, 2, 100, vec![0.735; 2], vec![1.47; 2]).unwrap();
        let noise = GaussianNoise::diagonal(vec![0.0f32, 0.5], &[0.05, 0.1]).unwrap();
        let layer = SafetyLayer::new(model, cs, sc, noise).unwrap();
        assert!(layer.exploration_feasible(&[3.14, 0.0], &[0.0], 0).unwrap());
        let c = layer.max_exploration_cov(&[3.14, 0.0], &[0.0], 0, &Matrix::identity(1), 1.0).unwrap();
        assert!(layer.check_sigma(&[3.14, 0.0], &[0.0], 0, &c.cov).unwrap());
    }

    proptest! {
        #[test]
        fn schedule_monotone_and_bounded(k in 0usize..100) {
            let c = cfg(0.95, 0.9998, 2);
            let a = eta_prime(&c, 2, k).unwrap();
            let b = eta_prime(&c, 2, k + 1).unwrap();
            prop_assert!(b >= a);
            prop_assert!(a > 0.5 && a < 1.0);
            let qa = q_stay(&c, k).unwrap();
            prop_assert!(q_stay(&c, k + 1).unwrap() >= qa);
            prop_assert!(qa > 0.95);
        }

        #[test]
        fn feasible_iff_cov_constructible(phi in -4.0f64..4.0, zeta in -6.0f64..6.0, u in -3.0f64..3.0, k in 0usize..100) {
            let layer = pendulum();
            let x = [phi, zeta];
            let feasible = layer.exploration_feasible(&x, &[u], k).unwrap();
            let cov = layer.max_exploration_cov(&x, &[u], k, &Matrix::identity(1), 2.0);
            prop_assert_eq!(feasible, cov.is_ok());
            if let Ok(c) = cov {
                prop_assert!(c.scale >= 0.0);
                prop_assert!(layer.check_sigma(&x, &[u], k, &c.cov).unwrap());
            }
        }

        #[test]
        fn block_norm_identity(s in 0.0f64..3.0, hx in -1.0f64..1.0, hy in -1.0f64..1.0) {
            prop_assume!(hx.abs() + hy.abs() > 1e-3);
            let layer = pendulum();
            let h = [hx, hy];
            let sigma = Matrix::from_diagonal(&[s * s]);
            let b_ext = Matrix::hcat(&[layer.model().b().clone(), Matrix::identity(2)]).unwrap();
            let root = Matrix::block_diag(&[sigma.clone(), layer.noise().cov().clone()]).psd_sqrt().unwrap();
            let joint = norm2(&root.left_mul_vec(&b_ext.left_mul_vec(&h).unwrap()).unwrap());
            let hb = layer.model().b().left_mul_vec(&h).unwrap();
            let split = sigma.quadratic_form(&hb).unwrap() + layer.noise().projected_std(&h).unwrap().powi(2);
            prop_assert!((joint * joint - split).abs() < 1e-12);
        }
    }
}
