//! Safe exploration for reinforcement learning under additive Gaussian
//! disturbance.
//!
//! At each step the [`Explorer`] picks one of three inputs: the policy mean
//! plus a Gaussian exploration term whose covariance is shrunk until the
//! per-step chance constraint holds, a disturbance-compensating "stay" input,
//! or a recovery sequence that returns the state to the safe polytope.
//!
//! The math layer (`linalg`, `normal`, `model`, `chance`, `lp`,
//! `conservative`, `explorer`) is generic over [`Real`] (`f32`/`f64`).
//! Environments, the learner and the experiment runner use `f64`.

pub mod chance;
pub mod conservative;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod explorer;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod normal;
pub mod rl;
pub mod safety;
pub mod scalar;
pub mod verify;

pub use chance::{eta_prime, per_row_level, q_stay, ExplorationCov, TightenedBound};
pub use conservative::{build_horizon, HorizonModel};
pub use error::{Error, Result};
pub use explorer::{Case, ConservativeInputs, Decision, Explorer, ExplorerSettings};
pub use linalg::Matrix;
pub use lp::{solve_lp_feasible, LinearFeasibilityProblem, LpOutcome};
pub use model::{predict_mean_next, ConstraintSet, GaussianNoise, LinearModel, SafetyConfig};
pub use normal::{normal_cdf, normal_cdf_inv, normal_pdf};
pub use safety::SafetyLayer;
pub use scalar::Real;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type LinearModel64 = LinearModel<f64>;
pub type LinearModel32 = LinearModel<f32>;
pub type ConstraintSet64 = ConstraintSet<f64>;
pub type ConstraintSet32 = ConstraintSet<f32>;
pub type GaussianNoise64 = GaussianNoise<f64>;
pub type GaussianNoise32 = GaussianNoise<f32>;
pub type SafetyConfig64 = SafetyConfig<f64>;
pub type SafetyConfig32 = SafetyConfig<f32>;
pub type SafetyLayer64 = SafetyLayer<f64>;
pub type SafetyLayer32 = SafetyLayer<f32>;
pub type Explorer64 = Explorer<f64>;
pub type Explorer32 = Explorer<f32>;
