//! Standard normal distribution: density, CDF Φ and quantile Φ⁻¹.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Standard normal density.
pub fn normal_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_2pi = T::one() / (T::TAU()).sqrt();
    inv_sqrt_2pi * (-(z * z) / T::lit(2.0)).exp()
}

/// Complementary error function for `x ≥ 0`.
///
/// Maclaurin series of erf below 2, Laplace continued fraction above.
fn erfc_nonneg<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    if x < two {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 1usize;
        loop {
            term = term * (-x2) / T::from_usize_lossy(n);
            let contribution = term / T::from_usize_lossy(2 * n + 1);
            sum = sum + contribution;
            if contribution.abs() <= sum.abs() * T::epsilon() || n > 200 {
                break;
            }
            n += 1;
        }
        T::one() - sum * two / T::PI().sqrt()
    } else {
        let terms = if x < T::lit(4.0) { 200 } else { 80 };
        let half = T::lit(0.5);
        let mut f = T::zero();
        for n in (1..=terms).rev() {
            f = T::from_usize_lossy(n) * half / (x + f);
        }
        (-(x * x)).exp() / T::PI().sqrt() / (x + f)
    }
}

/// Φ(z), absolute error below 1e-10 in `f64`.
pub fn normal_cdf<T: Real>(z: T) -> Result<T> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("normal_cdf of non-finite value {z}")));
    }
    let x = z / T::SQRT_2();
    let half = T::lit(0.5);
    Ok(if x >= T::zero() {
        T::one() - half * erfc_nonneg(x)
    } else {
        half * erfc_nonneg(-x)
    })
}

/// Rational initial guess for the lower-half quantile (`p ≤ 0.5`).
fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Φ⁻¹(q) for `q ∈ (0, 1)`, refined by bracketed Newton iteration on Φ.
pub fn normal_cdf_inv<T: Real>(q: T) -> Result<T> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::Domain(format!("normal_cdf_inv requires q in (0, 1), got {q}")));
    }
    let half = T::lit(0.5);
    if q == half {
        return Ok(T::zero());
    }
    // Solve in the lower tail, where Φ carries full relative accuracy.
    let (p, sign) = if q > half { (T::one() - q, -T::one()) } else { (q, T::one()) };

    let mut lo = T::lit(-40.0);
    let mut hi = T::zero();
    let mut x = T::lit(quantile_guess(p.to_f64_lossy())).max(lo).min(hi);
    for _ in 0..100 {
        let f = normal_cdf(x)? - p;
        if f == T::zero() {
            break;
        }
        if f < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let density = normal_pdf(x);
        let mut next = if density > T::zero() { x - f / density } else { (lo + hi) * half };
        if !(next > lo && next < hi) {
            next = (lo + hi) * half;
        }
        let step = (next - x).abs();
        x = next;
        if step <= T::epsilon() * (T::one() + x.abs()) {
            break;
        }
    }
    Ok(sign * x)
}
