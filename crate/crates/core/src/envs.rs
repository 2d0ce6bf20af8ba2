//! Ground-truth plants used in the experiments: an inverted pendulum and a
//! four-bar parallel link manipulator, both Euler-discretized.
//!
//! Step functions are pure: the disturbance sample is supplied by the caller.
//! Angles are never wrapped in the dynamics, only inside the costs.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{ConstraintSet, GaussianNoise, LinearModel, SafetyConfig};
use crate::safety::SafetyLayer;

/// `((φ + π) mod 2π) − π` with floored modulo; result in `[−π, π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut r = (phi + PI).rem_euclid(TAU);
    if r >= TAU {
        r = 0.0;
    }
    r - PI
}

/// Plant interface shared by the experiment runner.
pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;

    /// True nonlinear transition with additive disturbance `w`.
    fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64>;

    /// Immediate cost `c_{k+1}` of applying `u` at `x`.
    fn cost(&self, x: &[f64], u: &[f64]) -> f64;

    /// Observation fed to the networks (periodic angles as cos/sin).
    fn features(&self, x: &[f64]) -> Vec<f64>;

    fn linear_model(&self) -> LinearModel<f64>;
    fn constraints(&self) -> ConstraintSet<f64>;
    fn noise(&self) -> GaussianNoise<f64>;

    /// Componentwise bound on `|e(x, u)|` where
    /// `e = f(x) + G u − (A x + B u)`.
    fn model_error_box(&self) -> Vec<f64>;

    /// Closed-form `u_stay`.
    fn stay_input(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64>;

    /// Closed-form recovery sequence, stacked in time order.
    fn back_sequence(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64>;

    /// Horizon the closed-form recovery sequence was derived for.
    fn closed_form_tau(&self) -> usize {
        2
    }

    fn default_action_bound(&self) -> f64;

    /// `(δ̄, Δ̄)` per constraint row: the exact suprema of `|h_jᵀ e|` and
    /// `|h_jᵀ Σ_{i<τ} A^i e_i|` over the error box.
    fn error_bounds(&self, tau: usize) -> (Vec<f64>, Vec<f64>) {
        derived_error_bounds(&self.linear_model(), &self.constraints(), &self.model_error_box(), tau)
    }

    fn safety_layer(&self, eta: f64, xi: f64, tau: usize, horizon: usize) -> Result<SafetyLayer<f64>> {
        let (db, big) = self.error_bounds(tau);
        let cfg = SafetyConfig::new(eta, xi, tau, horizon, db, big)?;
        SafetyLayer::new(self.linear_model(), self.constraints(), cfg, self.noise())
    }
}

pub fn derived_error_bounds(
    model: &LinearModel<f64>,
    cs: &ConstraintSet<f64>,
    error_box: &[f64],
    tau: usize,
) -> (Vec<f64>, Vec<f64>) {
    let project = |row: &[f64]| -> f64 { row.iter().zip(error_box).map(|(h, e)| h.abs() * e).sum() };
    let mut one = Vec::with_capacity(cs.len());
    let mut multi = Vec::with_capacity(cs.len());
    for j in 0..cs.len() {
        let h = cs.row(j);
        one.push(project(h));
        let mut acc = 0.0;
        let mut row = h.to_vec();
        for _ in 0..tau {
            acc += project(&row);
            row = model.a().left_mul_vec(&row).expect("row matches A");
        }
        multi.push(acc);
    }
    (one, multi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub m: f64,
    pub l: f64,
    pub g: f64,
    pub ts: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            l: 1.0,
            g: 9.8,
            ts: 0.05,
        }
    }
}

/// Which τ-step error bound the pendulum reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TauErrorBound {
    /// Supremum over the τ-step stacked error (Ts·3g/ℓ for τ = 2).
    #[default]
    Derived,
    /// Reuse the one-step bound Ts·3g/(2ℓ).
    OneStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pendulum {
    #[serde(flatten)]
    pub params: PendulumParams,
    pub x0: Vec<f64>,
    pub mu_w: Vec<f64>,
    /// Standard deviations of the (independent) disturbance components.
    pub sigma_w: Vec<f64>,
    pub zeta_max: f64,
    pub tau_error_bound: TauErrorBound,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            params: PendulumParams::default(),
            x0: vec![PI, 0.0],
            mu_w: vec![0.0, 0.5],
            sigma_w: vec![0.05, 0.1],
            zeta_max: 6.0,
            tau_error_bound: TauErrorBound::Derived,
        }
    }
}

impl Pendulum {
    fn torque_gain(&self) -> f64 {
        let p = &self.params;
        p.ts * 3.0 / (p.m * p.l * p.l)
    }

    fn gravity_gain(&self) -> f64 {
        let p = &self.params;
        p.ts * 3.0 * p.g / (2.0 * p.l)
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let (phi, zeta) = (x[0], x[1]);
        vec![
            phi + self.params.ts * zeta + w[0],
            zeta - self.gravity_gain() * (phi + PI).sin() + self.torque_gain() * u[0] + w[1],
        ]
    }

    fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        wrap_angle(x[0]).powi(2) + 0.1 * x[1] * x[1] + 0.001 * u[0] * u[0]
    }

    fn features(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].cos(), x[0].sin(), x[1]]
    }

    fn linear_model(&self) -> LinearModel<f64> {
        let ts = self.params.ts;
        LinearModel::new(
            Matrix::from_rows(&[vec![1.0, ts], vec![0.0, 1.0]]).expect("2x2"),
            Matrix::column(&[0.0, self.torque_gain()]),
        )
        .expect("pendulum model is well formed")
    }

    fn constraints(&self) -> ConstraintSet<f64> {
        ConstraintSet::symmetric_bounds(2, &[1], self.zeta_max).expect("pendulum constraints")
    }

    fn noise(&self) -> GaussianNoise<f64> {
        GaussianNoise::diagonal(self.mu_w.clone(), &self.sigma_w).expect("pendulum noise")
    }

    fn model_error_box(&self) -> Vec<f64> {
        vec![0.0, self.gravity_gain()]
    }

    fn error_bounds(&self, tau: usize) -> (Vec<f64>, Vec<f64>) {
        let (one, multi) = derived_error_bounds(&self.linear_model(), &self.constraints(), &self.model_error_box(), tau);
        match self.tau_error_bound {
            TauErrorBound::Derived => (one, multi),
            TauErrorBound::OneStep => (one.clone(), one),
        }
    }

    fn stay_input(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64> {
        vec![-(x[1] + mu_w[0]) / self.torque_gain()]
    }

    fn back_sequence(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64> {
        vec![-(x[1] + 2.0 * mu_w[0]) / self.torque_gain(), 0.0]
    }

    fn default_action_bound(&self) -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManipulatorParams {
    pub m11_hat: f64,
    pub m22_hat: f64,
    pub d11_hat: f64,
    pub d22_hat: f64,
    pub v1: f64,
    pub v2: f64,
    pub alpha: f64,
    pub ts: f64,
}

impl Default for ManipulatorParams {
    fn default() -> Self {
        Self {
            m11_hat: 3.91e-3,
            m22_hat: 2.39e-3,
            d11_hat: 9.37e-3,
            d22_hat: 9.37e-3,
            v1: 9.01e-2,
            v2: 1.92e-2,
            alpha: 6.89e-2,
            ts: 0.05,
        }
    }
}

impl ManipulatorParams {
    /// Damping coefficients `a_i = Ts d̂_ii / m̂_ii`.
    pub fn damping(&self) -> [f64; 2] {
        [self.ts * self.d11_hat / self.m11_hat, self.ts * self.d22_hat / self.m22_hat]
    }

    /// Input gains `b_i = Ts α / m̂_ii`.
    pub fn input_gain(&self) -> [f64; 2] {
        [self.ts * self.alpha / self.m11_hat, self.ts * self.alpha / self.m22_hat]
    }

    /// Gravity amplitudes `Ts V_i / m̂_ii`.
    pub fn gravity(&self) -> [f64; 2] {
        [self.ts * self.v1 / self.m11_hat, self.ts * self.v2 / self.m22_hat]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manipulator {
    #[serde(flatten)]
    pub params: ManipulatorParams,
    pub x0: Vec<f64>,
    pub mu_w: Vec<f64>,
    pub sigma_w: Vec<f64>,
    pub omega_max: f64,
}

impl Default for Manipulator {
    fn default() -> Self {
        Self {
            params: ManipulatorParams::default(),
            x0: vec![PI, PI, 0.0, 0.0],
            mu_w: vec![0.0, 0.1, -0.1, 0.05],
            sigma_w: vec![0.01, 0.03, 0.02, 0.01],
            omega_max: 6.0,
        }
    }
}

impl Environment for Manipulator {
    fn name(&self) -> &'static str {
        "manipulator"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let a = p.damping();
        let b = p.input_gain();
        let g = p.gravity();
        vec![
            x[0] + p.ts * x[2] + w[0],
            x[1] + p.ts * x[3] + w[1],
            x[2] - a[0] * x[2] - g[0] * x[0].cos() + b[0] * u[0] + w[2],
            x[3] - a[1] * x[3] - g[1] * x[1].cos() + b[1] * u[1] + w[3],
        ]
    }

    fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let second = ((x[1] + PI) - 5.0 * PI / 6.0).rem_euclid(TAU).min(TAU.next_down()) - PI;
        2.0 * wrap_angle(x[0]).powi(2)
            + 2.0 * second * second
            + 0.1 * (x[2] * x[2] + x[3] * x[3])
            + 0.001 * (u[0] * u[0] + u[1] * u[1])
    }

    fn features(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].cos(), x[0].sin(), x[1].cos(), x[1].sin(), x[2], x[3]]
    }

    fn linear_model(&self) -> LinearModel<f64> {
        let p = &self.params;
        let a = p.damping();
        let b = p.input_gain();
        LinearModel::new(
            Matrix::from_rows(&[
                vec![1.0, 0.0, p.ts, 0.0],
                vec![0.0, 1.0, 0.0, p.ts],
                vec![0.0, 0.0, 1.0 - a[0], 0.0],
                vec![0.0, 0.0, 0.0, 1.0 - a[1]],
            ])
            .expect("4x4"),
            Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![b[0], 0.0], vec![0.0, b[1]]]).expect("4x2"),
        )
        .expect("manipulator model is well formed")
    }

    fn constraints(&self) -> ConstraintSet<f64> {
        ConstraintSet::symmetric_bounds(4, &[2, 3], self.omega_max).expect("manipulator constraints")
    }

    fn noise(&self) -> GaussianNoise<f64> {
        GaussianNoise::diagonal(self.mu_w.clone(), &self.sigma_w).expect("manipulator noise")
    }

    fn model_error_box(&self) -> Vec<f64> {
        let g = self.params.gravity();
        vec![0.0, 0.0, g[0], g[1]]
    }

    fn stay_input(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64> {
        let a = self.params.damping();
        let b = self.params.input_gain();
        (0..2)
            .map(|i| -((1.0 - a[i]) * x[2 + i] + (1.0 - a[i]) * mu_w[2 + i]) / b[i])
            .collect()
    }

    fn back_sequence(&self, x: &[f64], mu_w: &[f64]) -> Vec<f64> {
        let a = self.params.damping();
        let b = self.params.input_gain();
        let mut seq: Vec<f64> = (0..2)
            .map(|i| -((1.0 - a[i]).powi(2) * x[2 + i] + (2.0 - a[i]) * mu_w[2 + i]) / ((1.0 - a[i]) * b[i]))
            .collect();
        seq.extend([0.0, 0.0]);
        seq
    }

    fn default_action_bound(&self) -> f64 {
        10.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_angle_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_eq!(wrap_angle(PI), -PI);
        assert!(close(wrap_angle(-1.5 * PI), 0.5 * PI, 1e-12));
        assert!(wrap_angle(-1e-17) >= -PI && wrap_angle(-1e-17) < PI);
    }

    #[test]
    fn pendulum_step_examples() {
        let env = Pendulum::default();
        let x = env.step(&[PI, 0.0], &[0.0], &[0.0, 0.0]);
        assert_eq!(x[0], PI);
        assert!(x[1].abs() < 1e-15);
        let x = env.step(&[0.0, 0.0], &[0.0], &[0.0, 0.0]);
        assert_eq!(x[0], 0.0);
        assert!(x[1].abs() < 1e-15);
        let x = env.step(&[PI / 2.0, 1.0], &[1.0], &[0.0, 0.5]);
        assert!(close(x[0], PI / 2.0 + 0.05, 1e-15));
        assert!(close(x[1], 1.0 + 0.735 + 0.15 + 0.5, 1e-12));
        assert!(close(x[1], 2.385, 1e-12));
    }

    #[test]
    fn pendulum_cost_examples() {
        let env = Pendulum::default();
        assert_eq!(env.cost(&[0.0, 0.0], &[0.0]), 0.0);
        assert!(close(env.cost(&[PI, 0.0], &[0.0]), PI * PI, 1e-12));
        assert!(close(env.cost(&[0.0, 1.0], &[2.0]), 0.104, 1e-12));
    }

    #[test]
    fn pendulum_model_and_bounds() {
        let env = Pendulum::default();
        let m = env.linear_model();
        assert_eq!(m.a()[(0, 1)], 0.05);
        assert!(close(m.b()[(1, 0)], 0.15, 1e-15));
        assert_eq!(m.b()[(0, 0)], 0.0);
        let (db, big) = env.error_bounds(2);
        assert!(close(db[0], 0.735, 1e-12) && close(db[1], 0.735, 1e-12));
        assert!(close(big[0], 1.47, 1e-12) && close(big[1], 1.47, 1e-12));
        let alt = Pendulum {
            tau_error_bound: TauErrorBound::OneStep,
            ..Pendulum::default()
        };
        assert!(close(alt.error_bounds(2).1[0], 0.735, 1e-12));
    }

    #[test]
    fn pendulum_closed_forms() {
        let env = Pendulum::default();
        let mu = env.noise().mean().to_vec();
        assert_eq!(env.stay_input(&[PI, 0.0], &mu), vec![0.0]);
        assert!(close(env.stay_input(&[PI, 3.0], &mu)[0], -20.0, 1e-12));
        let back = env.back_sequence(&[PI, 7.0], &mu);
        assert!(close(back[0], -46.666_666_666_666_67, 1e-9));
        assert_eq!(back[1], 0.0);
    }

    #[test]
    fn manipulator_step_examples() {
        let env = Manipulator::default();
        let x = env.step(&[PI / 2.0, PI / 2.0, 0.0, 0.0], &[0.0, 0.0], &[0.0; 4]);
        assert_eq!(&x[..2], &[PI / 2.0, PI / 2.0]);
        assert!(x[2].abs() < 1e-15 && x[3].abs() < 1e-15);
        let x = env.step(&[0.0; 4], &[0.0, 0.0], &[0.0; 4]);
        assert!(close(x[2], -1.152_173_913_043_478, 1e-12));
        assert!(close(x[3], -0.401_673_640_167_364, 1e-12));
        let x = env.step(&[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0], &[0.0; 4]);
        assert!(close(x[0], 0.05, 1e-15));
    }

    #[test]
    fn manipulator_cost_examples() {
        let env = Manipulator::default();
        let target = [0.0, 5.0 * PI / 6.0, 0.0, 0.0];
        assert!(env.cost(&target, &[0.0, 0.0]) < 1e-24);
        assert!(close(env.cost(&[PI, 5.0 * PI / 6.0, 0.0, 0.0], &[0.0, 0.0]), 2.0 * PI * PI, 1e-9));
        assert!(close(env.cost(&[0.0, 5.0 * PI / 6.0, 1.0, 1.0], &[0.0, 0.0]), 0.2, 1e-12));
    }

    #[test]
    fn manipulator_coefficients_and_bounds() {
        let p = ManipulatorParams::default();
        assert!(close(p.damping()[0], 0.119_820_971_867_007_67, 1e-12));
        assert!(close(p.input_gain()[0], 0.881_074_168_797_954, 1e-12));
        let env = Manipulator::default();
        let (db, big) = env.error_bounds(2);
        assert!(close(db[0], 1.152_173_913_043_478, 1e-12) && close(db[1], db[0], 0.0));
        assert!(close(db[2], 0.401_673_640_167_364, 1e-12));
        assert!(close(big[0], 2.166_293_228_066_273_8, 1e-12));
        assert!(close(big[2], 0.724_609_163_004_849_4, 1e-12));
        let m = env.linear_model();
        assert!(close(m.a()[(2, 2)], 1.0 - p.damping()[0], 0.0));
    }

    fn sample_box(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-half..half)).collect()
    }

    fn check_error_bounds(env: &dyn Environment, seed: u64) {
        let model = env.linear_model();
        let cs = env.constraints();
        let (db, big) = env.error_bounds(2);
        let n = env.state_dim();
        let m = env.input_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero_w = vec![0.0; n];
        let err = |x: &[f64], u: &[f64]| -> Vec<f64> {
            let truth = env.step(x, u, &zero_w);
            let lin = crate::linalg::add_vec(&model.a().mul_vec(x).unwrap(), &model.b().mul_vec(u).unwrap());
            crate::linalg::sub_vec(&truth, &lin)
        };
        let slack = 1e-12;
        for _ in 0..1_000_000 {
            let x = sample_box(&mut rng, n, 50.0);
            let u = sample_box(&mut rng, m, 100.0);
            let e0 = err(&x, &u);
            let x2 = sample_box(&mut rng, n, 50.0);
            let u2 = sample_box(&mut rng, m, 100.0);
            let e1 = err(&x2, &u2);
            // Ĉ E = A e0 + e1
            let stacked = crate::linalg::add_vec(&model.a().mul_vec(&e0).unwrap(), &e1);
            for j in 0..cs.len() {
                let h = cs.row(j);
                assert!(crate::linalg::dot(h, &e0).abs() <= db[j] + slack);
                assert!(crate::linalg::dot(h, &stacked).abs() <= big[j] + slack);
            }
        }
    }

    #[test]
    fn pendulum_error_bounds_hold_empirically() {
        check_error_bounds(&Pendulum::default(), 1);
    }

    #[test]
    fn manipulator_error_bounds_hold_empirically() {
        check_error_bounds(&Manipulator::default(), 2);
    }

    proptest! {
        #[test]
        fn model_error_independent_of_input(phi in -10.0f64..10.0, zeta in -10.0f64..10.0, u1 in -100.0f64..100.0, u2 in -100.0f64..100.0) {
            let env = Pendulum::default();
            let m = env.linear_model();
            let e = |u: f64| {
                let t = env.step(&[phi, zeta], &[u], &[0.0, 0.0]);
                let l = crate::linalg::add_vec(&m.a().mul_vec(&[phi, zeta]).unwrap(), &m.b().mul_vec(&[u]).unwrap());
                crate::linalg::sub_vec(&t, &l)
            };
            let (a, b) = (e(u1), e(u2));
            prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }

        #[test]
        fn manipulator_error_independent_of_input(x in proptest::collection::vec(-10.0f64..10.0, 4), u in proptest::collection::vec(-100.0f64..100.0, 4)) {
            let env = Manipulator::default();
            let m = env.linear_model();
            let e = |uu: &[f64]| {
                let t = env.step(&x, uu, &[0.0; 4]);
                let l = crate::linalg::add_vec(&m.a().mul_vec(&x).unwrap(), &m.b().mul_vec(uu).unwrap());
                crate::linalg::sub_vec(&t, &l)
            };
            let (a, b) = (e(&u[..2]), e(&u[2..]));
            for i in 0..4 {
                prop_assert!((a[i] - b[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn costs_are_nonnegative_and_periodic(phi in -20.0f64..20.0, zeta in -8.0f64..8.0, u in -5.0f64..5.0) {
            let p = Pendulum::default();
            let c = p.cost(&[phi, zeta], &[u]);
            prop_assert!(c >= 0.0);
            prop_assert!((c - p.cost(&[phi + TAU, zeta], &[u])).abs() < 1e-9);
            let m = Manipulator::default();
            let x = [phi, -phi, zeta, -zeta];
            let c = m.cost(&x, &[u, u]);
            prop_assert!(c >= 0.0);
            prop_assert!((c - m.cost(&[phi + TAU, -phi - TAU, zeta, -zeta], &[u, u])).abs() < 1e-8);
        }

        #[test]
        fn wrap_angle_range_and_congruence(phi in -1e3f64..1e3) {
            let w = wrap_angle(phi);
            prop_assert!((-PI..PI).contains(&w));
            let k = ((phi - w) / TAU).round();
            prop_assert!((phi - w - k * TAU).abs() < 1e-9);
        }
    }
}
