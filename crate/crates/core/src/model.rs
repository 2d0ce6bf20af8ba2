//! Plant approximation, safe set, disturbance model and the probability
//! schedule parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Matrix, PSD_TOL, SYMMETRY_TOL};
use crate::scalar::Real;

/// Known linear approximation `x⁺ ≈ A x + B u + w` of the true plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    a: Matrix<T>,
    b: Matrix<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return shape_err("LinearModel A", "square", format!("{:?}", a.shape()));
        }
        if b.rows() != a.rows() || b.cols() == 0 {
            return shape_err("LinearModel B rows", a.rows(), b.rows());
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("LinearModel entries must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }
}

/// Polytope `{x : H x ⪯ d}`; the boundary belongs to the safe set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet<T> {
    h: Matrix<T>,
    d: Vec<T>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn new(h: Matrix<T>, d: Vec<T>) -> Result<Self> {
        if h.rows() == 0 {
            return Err(Error::Domain("constraint set needs at least one row".into()));
        }
        if d.len() != h.rows() {
            return shape_err("ConstraintSet d", h.rows(), d.len());
        }
        if !h.is_finite() || d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("constraint entries must be finite".into()));
        }
        for j in 0..h.rows() {
            if h.row(j).iter().all(|&v| v == T::zero()) {
                return Err(Error::Domain(format!("constraint row {j} is zero")));
            }
        }
        Ok(Self { h, d })
    }

    /// Symmetric box `|xᵢ| ≤ bound` on the listed state components.
    pub fn symmetric_bounds(n: usize, components: &[usize], bound: T) -> Result<Self> {
        let mut rows = Vec::with_capacity(2 * components.len());
        for &c in components {
            if c >= n {
                return shape_err("ConstraintSet::symmetric_bounds", format!("component < {n}"), c);
            }
            let mut up = vec![T::zero(); n];
            up[c] = T::one();
            let mut down = vec![T::zero(); n];
            down[c] = -T::one();
            rows.push(up);
            rows.push(down);
        }
        let d = vec![bound; rows.len()];
        Self::new(Matrix::from_rows(&rows)?, d)
    }

    pub fn h(&self) -> &Matrix<T> {
        &self.h
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    pub fn row(&self, j: usize) -> &[T] {
        self.h.row(j)
    }

    /// Number of constraints n_c.
    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }

    /// `d − H x`, componentwise.
    pub fn constraint_margins(&self, x: &[T]) -> Result<Vec<T>> {
        let hx = self.h.mul_vec(x)?;
        Ok(self.d.iter().zip(hx).map(|(&d, hx)| d - hx).collect())
    }

    pub fn is_safe(&self, x: &[T]) -> Result<bool> {
        Ok(self.constraint_margins(x)?.iter().all(|&m| m >= T::zero()))
    }

    /// Every row must see the input: `h_jᵀ B ≠ 0`.
    pub fn check_input_coupling(&self, model: &LinearModel<T>) -> Result<()> {
        if self.state_dim() != model.state_dim() {
            return shape_err("ConstraintSet vs LinearModel", model.state_dim(), self.state_dim());
        }
        for j in 0..self.len() {
            let hb = model.b().left_mul_vec(self.row(j))?;
            if hb.iter().all(|&v| v == T::zero()) {
                return Err(Error::Precondition(format!(
                    "constraint row {j} is not influenced by the input (h_j^T B = 0)"
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian `N(mean, cov)`; the symmetric square root of `cov` is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNoise<T> {
    mean: Vec<T>,
    cov: Matrix<T>,
    cov_sqrt: Matrix<T>,
}

impl<T: Real> GaussianNoise<T> {
    pub fn new(mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return shape_err("GaussianNoise cov", format!("{0}x{0}", mean.len()), format!("{:?}", cov.shape()));
        }
        if !cov.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("noise parameters must be finite".into()));
        }
        if cov.max_asymmetry() > T::lit(SYMMETRY_TOL) {
            return Err(Error::Domain("noise covariance is not symmetric".into()));
        }
        let (eig, _) = cov.symmetric_eigen()?;
        if let Some(l) = eig.iter().find(|&&l| l < -T::lit(PSD_TOL)) {
            return Err(Error::Domain(format!("noise covariance has negative eigenvalue {l}")));
        }
        let cov_sqrt = cov.psd_sqrt()?;
        Ok(Self { mean, cov, cov_sqrt })
    }

    /// Independent components with the given standard deviations.
    pub fn diagonal(mean: Vec<T>, std_devs: &[T]) -> Result<Self> {
        let var: Vec<T> = std_devs.iter().map(|&s| s * s).collect();
        Self::new(mean, Matrix::from_diagonal(&var))
    }

    pub fn zero(n: usize) -> Self {
        Self {
            mean: vec![T::zero(); n],
            cov: Matrix::zeros(n, n),
            cov_sqrt: Matrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    pub fn cov_sqrt(&self) -> &Matrix<T> {
        &self.cov_sqrt
    }

    /// `‖hᵀ Σ^{1/2}‖₂` for a row vector `h`.
    pub fn projected_std(&self, h: &[T]) -> Result<T> {
        let v = self.cov_sqrt.left_mul_vec(h)?;
        Ok(dot(&v, &v).sqrt())
    }

    /// One draw `mean + Σ^{1/2} z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.dim();
        let z: Vec<T> = (0..n)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut out = self.mean.clone();
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + dot(self.cov_sqrt.row(i), &z);
        }
        out
    }
}

/// Target probability η, recovery probability ξ, recovery horizon τ, episode
/// horizon T, and the one-step (δ̄) and τ-step (Δ̄) approximation error bounds
/// per constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyConfig<T> {
    eta: T,
    xi: T,
    tau: usize,
    horizon: usize,
    delta_bar: Vec<T>,
    big_delta_bar: Vec<T>,
}

impl<T: Real> SafetyConfig<T> {
    pub fn new(eta: T, xi: T, tau: usize, horizon: usize, delta_bar: Vec<T>, big_delta_bar: Vec<T>) -> Result<Self> {
        let mut problems = Vec::new();
        let half = T::lit(0.5);
        if !(eta > half && eta < T::one()) {
            problems.push(format!("eta must lie in (0.5, 1), got {eta}"));
        }
        if tau == 0 {
            problems.push("tau must be a positive integer".to_string());
        }
        if horizon == 0 {
            problems.push("horizon must be a positive integer".to_string());
        }
        if horizon > 0 && eta > T::zero() {
            let lower = eta.powf(T::one() / T::from_usize_lossy(horizon));
            if !(xi > lower && xi < T::one()) {
                problems.push(format!("xi must satisfy eta^(1/T) = {lower} < xi < 1, got {xi}"));
            }
        }
        if delta_bar.len() != big_delta_bar.len() {
            problems.push(format!(
                "delta_bar has {} entries but Delta_bar has {}",
                delta_bar.len(),
                big_delta_bar.len()
            ));
        }
        if delta_bar.iter().chain(&big_delta_bar).any(|v| !v.is_finite() || *v < T::zero()) {
            problems.push("error bounds must be finite and nonnegative".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            eta,
            xi,
            tau,
            horizon,
            delta_bar,
            big_delta_bar,
        })
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn xi(&self) -> T {
        self.xi
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn delta_bar(&self) -> &[T] {
        &self.delta_bar
    }

    pub fn big_delta_bar(&self) -> &[T] {
        &self.big_delta_bar
    }
}

/// Mean one-step prediction `A x + B u + μ_w`.
pub fn predict_mean_next<T: Real>(model: &LinearModel<T>, noise: &GaussianNoise<T>, x: &[T], u_mean: &[T]) -> Result<Vec<T>> {
    if noise.dim() != model.state_dim() {
        return shape_err("predict_mean_next noise", model.state_dim(), noise.dim());
    }
    let ax = model.a().mul_vec(x)?;
    let bu = model.b().mul_vec(u_mean)?;
    Ok(ax
        .iter()
        .zip(&bu)
        .zip(noise.mean())
        .map(|((&a, &b), &m)| a + b + m)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pendulum_cs() -> ConstraintSet<f64> {
        ConstraintSet::new(Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap(), vec![6.0, 6.0]).unwrap()
    }

    fn pendulum_model() -> LinearModel<f64> {
        LinearModel::new(
            Matrix::from_rows(&[vec![1.0, 0.05], vec![0.0, 1.0]]).unwrap(),
            Matrix::column(&[0.0, 0.15]),
        )
        .unwrap()
    }

    #[test]
    fn margins_and_membership() {
        let cs = pendulum_cs();
        assert_eq!(cs.constraint_margins(&[PI, 0.0]).unwrap(), vec![6.0, 6.0]);
        assert_eq!(cs.constraint_margins(&[0.0, 6.0]).unwrap(), vec![0.0, 12.0]);
        assert_eq!(cs.constraint_margins(&[0.0, 7.0]).unwrap(), vec![-1.0, 13.0]);
        assert!(cs.is_safe(&[PI, 0.0]).unwrap());
        assert!(cs.is_safe(&[0.0, 6.0]).unwrap());
        assert!(!cs.is_safe(&[0.0, 6.01]).unwrap());
        assert!(matches!(cs.constraint_margins(&[0.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn symmetric_bounds_matches_explicit_rows() {
        let cs = ConstraintSet::symmetric_bounds(2, &[1], 6.0).unwrap();
        assert_eq!(cs, pendulum_cs());
    }

    #[test]
    fn constraint_set_rejects_zero_row() {
        let h = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(ConstraintSet::new(h, vec![1.0]).is_err());
    }

    #[test]
    fn input_coupling_detects_blind_rows() {
        let cs = ConstraintSet::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![1.0]).unwrap();
        assert!(cs.check_input_coupling(&pendulum_model()).is_err());
        assert!(pendulum_cs().check_input_coupling(&pendulum_model()).is_ok());
    }

    #[test]
    fn predict_mean_examples() {
        let noise = GaussianNoise::diagonal(vec![0.0, 0.5], &[0.05, 0.1]).unwrap();
        let model = pendulum_model();
        let p = predict_mean_next(&model, &noise, &[PI, 0.0], &[0.0]).unwrap();
        assert_eq!(p, vec![PI, 0.5]);
        let p = predict_mean_next(&model, &noise, &[0.0, 1.0], &[0.0]).unwrap();
        assert!((p[0] - 0.05).abs() < 1e-15 && (p[1] - 1.5).abs() < 1e-15);

        let ident = LinearModel::new(Matrix::identity(2), Matrix::zeros(2, 1)).unwrap();
        let x = [0.3, -0.7];
        assert_eq!(predict_mean_next(&ident, &GaussianNoise::zero(2), &x, &[4.0]).unwrap(), x.to_vec());
        assert!(predict_mean_next(&model, &noise, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn degenerate_noise_returns_mean() {
        let noise = GaussianNoise::new(vec![1.0, -2.0], Matrix::zeros(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(noise.sample(&mut rng), vec![1.0, -2.0]);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let noise = GaussianNoise::diagonal(vec![0.0, 0.5], &[0.05, 0.1]).unwrap();
        let a = noise.sample(&mut ChaCha8Rng::seed_from_u64(11));
        let b = noise.sample(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_converges() {
        let noise = GaussianNoise::diagonal(vec![0.0, 0.5], &[0.05, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let s = noise.sample(&mut rng);
            sum[0] += s[0];
            sum[1] += s[1];
        }
        let m0 = sum[0] / n as f64;
        let m1 = sum[1] / n as f64;
        assert!(m0.abs() < 3.0 * 0.05 / (n as f64).sqrt());
        assert!((m1 - 0.5).abs() < 3.0 * 0.1 / (n as f64).sqrt());
    }

    #[test]
    fn sample_covariance_matches() {
        let noise = GaussianNoise::diagonal(vec![0.0, 0.5], &[0.05, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut s = [0.0; 2];
        let mut ss = [[0.0; 2]; 2];
        for _ in 0..n {
            let v = noise.sample(&mut rng);
            for i in 0..2 {
                s[i] += v[i];
                for j in 0..2 {
                    ss[i][j] += v[i] * v[j];
                }
            }
        }
        let nf = n as f64;
        let cov = |i: usize, j: usize| ss[i][j] / nf - s[i] * s[j] / (nf * nf);
        assert!((cov(0, 0) / 0.0025 - 1.0).abs() < 0.05);
        assert!((cov(1, 1) / 0.01 - 1.0).abs() < 0.05);
        assert!(cov(0, 1).abs() < 0.05 * 0.05 * 0.1);
    }

    #[test]
    fn noise_rejects_bad_covariance() {
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(GaussianNoise::new(vec![0.0, 0.0], asym).is_err());
        let neg = Matrix::from_diagonal(&[1.0, -0.1]);
        assert!(GaussianNoise::new(vec![0.0, 0.0], neg).is_err());
    }

    #[test]
    fn safety_config_validation_lists_every_problem() {
        let err = SafetyConfig::new(0.4, 1.2, 0, 100, vec![0.1], vec![]).unwrap_err();
        match err {
            Error::Validation(p) => assert!(p.len() >= 3, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
        // ξ must exceed η^(1/T).
        assert!(SafetyConfig::new(0.95, 0.999, 2, 100, vec![0.0], vec![0.0]).is_err());
        assert!(SafetyConfig::new(0.95, 0.9998, 2, 100, vec![0.0], vec![0.0]).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn margins_are_affine(x in proptest::collection::vec(-10.0f64..10.0, 2), y in proptest::collection::vec(-10.0f64..10.0, 2)) {
            let cs = ConstraintSet::new(Matrix::from_rows(&[vec![0.3, 1.0], vec![-2.0, 0.5], vec![1.0, 1.0]]).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
            let mx = cs.constraint_margins(&x).unwrap();
            let my = cs.constraint_margins(&y).unwrap();
            let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let hd = cs.h().mul_vec(&diff).unwrap();
            for j in 0..3 {
                proptest::prop_assert!((mx[j] - my[j] - hd[j]).abs() < 1e-12);
            }
        }
    }
}
