//! Numerically stable Gaussian special functions and the closed-form
//! integrals the denoisers and channel computations are built from.
//!
//! Conventions: `φ(x)` is the standard normal pdf, `Φ(x)` the cdf.
//! `PI_q = ∫ z^q Φ(z/√v) N(z; p̂, τ) dz` and
//! `I_q = ∫_{-∞}^{u} x^q N(x; m, τ) dx` for q = 0, 1, 2.
//!
//! Tail evaluation goes through the complementary error function (and its
//! scaled variant) so relative accuracy survives far into both tails; all
//! mixture bookkeeping elsewhere in the crate is done on log weights via
//! [`log_sum_exp`] / [`normalize_log_weights`].

use crate::error::{ensure_finite, Error, Result};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_SQRT_2PI: f64 = 0.398_942_280_401_432_7; // 1/√(2π)

/// Gaussian pdf parameters `N(·; mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussParams {
    pub mean: f64,
    pub variance: f64,
}

impl GaussParams {
    /// Requires a strictly positive, finite variance and a finite mean.
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        ensure_finite(mean, "mean")?;
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::domain(format!(
                "variance must be finite and > 0, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }
}

// ---------------------------------------------------------------------------
// Internal primitives (unchecked; callers guarantee finite arguments).
// ---------------------------------------------------------------------------

#[inline]
pub(crate) fn pdf(x: f64) -> f64 {
    FRAC_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    // Both tails through erfc keep relative accuracy; 1 - Φ(-x) would not.
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Scaled complementary error function `erfcx(t) = exp(t²) erfc(t)`, `t ≥ 0`.
pub(crate) fn erfcx(t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t < 25.0 {
        // exp(t²) stays below overflow and erfc(t) above underflow here.
        (t * t).exp() * libm::erfc(t)
    } else {
        // Asymptotic series; truncation error < 1e-12 relative for t ≥ 25.
        let u = 1.0 / (2.0 * t * t);
        let series = 1.0 + u * (-1.0 + u * (3.0 + u * (-15.0 + u * 105.0)));
        series / (t * std::f64::consts::PI.sqrt())
    }
}

/// `ln(erfcx(t)/2)` for `t ≥ 0`; the tail factor of `ln Φ` once the
/// `-x²/2` part has been absorbed analytically by the caller.
pub(crate) fn ln_half_erfcx(t: f64) -> f64 {
    (0.5 * erfcx(t)).ln()
}

/// `ln Φ(x)`, stable for arbitrarily negative `x`.
pub(crate) fn ln_cdf(x: f64) -> f64 {
    if x > -1.0 {
        cdf(x).ln()
    } else {
        // Φ(x) = ½ erfcx(-x/√2) e^{-x²/2}
        (0.5 * erfcx(-x / SQRT_2)).ln() - 0.5 * x * x
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, stable for arbitrarily negative `x`.
pub(crate) fn mills(x: f64) -> f64 {
    if x > -1.0 {
        pdf(x) / cdf(x)
    } else {
        (2.0 / std::f64::consts::PI).sqrt() / erfcx(-x / SQRT_2)
    }
}

/// `ln N(x; m, v)` for `v > 0`.
#[inline]
pub(crate) fn ln_npdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Mean and variance of a standard normal conditioned on `Z ≤ d`.
///
/// `E = -φ(d)/Φ(d)`, `Var = 1 - h(h + d)` with `h` the Mills ratio; the
/// variance form is the cancellation-safe one for `d` deep in the left tail.
pub(crate) fn lower_trunc_std(d: f64) -> (f64, f64) {
    let h = mills(d);
    let mean = -h;
    let var = (1.0 - h * (h + d)).max(0.0);
    (mean, var)
}

// ---------------------------------------------------------------------------
// Log-weight helpers.
// ---------------------------------------------------------------------------

/// Max-shifted `ln Σ exp(lw_i)`. Returns `-∞` for an all-`-∞` input.
pub fn log_sum_exp(lw: &[f64]) -> f64 {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m; // -inf (empty mixture) or NaN propagates
    }
    let s: f64 = lw.iter().map(|&w| (w - m).exp()).sum();
    m + s.ln()
}

/// Normalizes log weights in place to probabilities via max-shifted
/// exponentiation and returns `ln Z`.
///
/// Fails when every weight underflowed (`max = -∞`) or an input is NaN,
/// which is the signal callers turn into a degeneracy error.
pub fn normalize_log_weights(lw: &mut [f64]) -> Result<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::domain(format!(
            "log-weight normalization degenerate (max weight {m})"
        )));
    }
    let mut s = 0.0;
    for w in lw.iter_mut() {
        *w = (*w - m).exp();
        s += *w;
    }
    for w in lw.iter_mut() {
        *w /= s;
    }
    Ok(m + s.ln())
}

// ---------------------------------------------------------------------------
// Spec operations.
// ---------------------------------------------------------------------------

/// Standard normal density `φ(x)`.
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    ensure_finite(x, "x")?;
    Ok(pdf(x))
}

/// Standard normal cdf `Φ(x)`, accurate in both tails (|x| up to ~38).
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    ensure_finite(x, "x")?;
    Ok(cdf(x))
}

/// `ln Φ(x)`, finite for any finite `x` (the cdf itself underflows past
/// x ≈ -38).
pub fn ln_std_normal_cdf(x: f64) -> f64 {
    ln_cdf(x)
}

/// The probit-Gaussian integrals `PI_q = ∫ z^q Φ(z/√v) N(z; p̂, τ_p) dz`
/// for q = 0, 1, 2, in closed form:
///
/// ```text
/// PI0 = Φ(s),              s = p̂/√(v+τ)
/// PI1 = p̂·PI0 + τ·φ(s)/√(v+τ)
/// PI2 = τ·PI0 + p̂·PI1 + τ·p̂·v·φ(s)/(v+τ)^1.5
/// ```
///
/// `v = 0` is accepted; Φ(z/√v) degenerates to a unit step and the same
/// expressions remain valid, which is how the noiseless sign channel is
/// realized as a configuration.
pub fn probit_gauss_moments(v: f64, p_hat: f64, tau_p: f64) -> Result<(f64, f64, f64)> {
    ensure_finite(p_hat, "p_hat")?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::domain(format!("v must be finite and >= 0, got {v}")));
    }
    if !tau_p.is_finite() || tau_p <= 0.0 {
        return Err(Error::domain(format!(
            "tau_p must be finite and > 0, got {tau_p}"
        )));
    }
    let vt = v + tau_p;
    let s = p_hat / vt.sqrt();
    let pi0 = cdf(s);
    let pi1 = p_hat * pi0 + tau_p * pdf(s) / vt.sqrt();
    let pi2 = (tau_p * pi0 + p_hat * pi1 + tau_p * p_hat * v * pdf(s) / vt.powf(1.5)).max(0.0);
    Ok((pi0, pi1, pi2))
}

/// Lower truncated-Gaussian moments `I_q = ∫_{-∞}^{upper} x^q N(x; m, τ) dx`:
///
/// ```text
/// I0 = Φ(d),               d = (upper - m)/√τ
/// I1 = m·I0 - √τ·φ(d)
/// I2 = m·I1 + τ·I0 - upper·√τ·φ(d)
/// ```
pub fn trunc_gauss_moments(upper: f64, m: f64, tau: f64) -> Result<(f64, f64, f64)> {
    ensure_finite(upper, "upper")?;
    ensure_finite(m, "m")?;
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::domain(format!(
            "tau must be finite and > 0, got {tau}"
        )));
    }
    let sq = tau.sqrt();
    let d = (upper - m) / sq;
    let i0 = cdf(d);
    let i1 = m * i0 - sq * pdf(d);
    let i2 = (m * i1 + tau * i0 - upper * sq * pdf(d)).max(0.0);
    Ok((i0, i1, i2))
}

/// Normalized moments of `N(m, tau)` truncated to `(-∞, upper]`, together
/// with the log mass: `(ln I0, E[x|x ≤ upper], Var[x|x ≤ upper])`.
///
/// Unlike the raw `I_q`, these stay meaningful when the retained mass is far
/// below the double-precision underflow threshold.
pub(crate) fn lower_trunc_moments_normalized(upper: f64, m: f64, tau: f64) -> (f64, f64, f64) {
    let sq = tau.sqrt();
    let d = (upper - m) / sq;
    let (mz, vz) = lower_trunc_std(d);
    (ln_cdf(d), m + sq * mz, tau * vz)
}

/// Gaussian product rule: `N(x; m_a, v_a)·N(x; m_b, v_b) = scale·N(x; m_c, v_c)`
/// with `v_c = v_a v_b/(v_a+v_b)`, `m_c = (m_a v_b + m_b v_a)/(v_a+v_b)` and
/// `scale = N(0; m_a - m_b, v_a + v_b)` (exponentiated from the log domain).
pub fn gauss_product(a: GaussParams, b: GaussParams) -> Result<(f64, GaussParams)> {
    if a.variance <= 0.0 || b.variance <= 0.0 {
        return Err(Error::domain("gauss_product requires positive variances"));
    }
    let vsum = a.variance + b.variance;
    let prod = GaussParams {
        mean: (a.mean * b.variance + b.mean * a.variance) / vsum,
        variance: a.variance * b.variance / vsum,
    };
    let scale = ln_npdf(a.mean - b.mean, 0.0, vsum).exp();
    Ok((scale, prod))
}

/// Log version of the [`gauss_product`] scale factor.
pub fn ln_gauss_product_scale(a: GaussParams, b: GaussParams) -> f64 {
    ln_npdf(a.mean - b.mean, 0.0, a.variance + b.variance)
}
