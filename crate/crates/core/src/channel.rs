//! Output channel of the one-bit measurement model: AWGN before the sign
//! quantizer, Bernoulli sign-flip after it.
//!
//! For a kept sign (probability `γ`) the quantizer output matches
//! `sign(z + n)`, so `p(y|z) = γ·A + (1-γ)·(1-A)` with `A = Φ(z/√v)` when
//! `y = +1` and `A = 1 - Φ(z/√v)` when `y = -1`. The posterior moments of
//! `z ~ N(p̂, τ_p)` under that likelihood drive the measurement-side
//! `F₁`/`F₂` updates.

use crate::error::{ensure_finite, ensure_same_len, Error, Result};
use crate::gauss;

/// Pre-quantization noise variance `v ≥ 0` and sign-keep probability
/// `γ ∈ (0.5, 1]`.
///
/// `γ ≤ 0.5` would make the channel uninformative or sign-inverted and is
/// rejected at construction. `v = 0` selects the noiseless step likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    noise_var: f64,
    gamma: f64,
}

impl ChannelParams {
    pub fn new(noise_var: f64, gamma: f64) -> Result<Self> {
        if !noise_var.is_finite() || noise_var < 0.0 {
            return Err(Error::domain(format!(
                "noise_var must be finite and >= 0, got {noise_var}"
            )));
        }
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(Error::domain(format!(
                "gamma must lie in (0.5, 1], got {gamma}"
            )));
        }
        Ok(Self { noise_var, gamma })
    }

    #[inline]
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

fn check_sign(y: i8) -> Result<f64> {
    match y {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        _ => Err(Error::domain(format!("y must be +1 or -1, got {y}"))),
    }
}

/// Likelihood `p(y | z)` of one measurement.
pub fn likelihood(y: i8, z: f64, ch: &ChannelParams) -> Result<f64> {
    let sign = check_sign(y)?;
    ensure_finite(z, "z")?;
    let a_plus = if ch.noise_var == 0.0 {
        // Step limit of Φ(z/√v); the quantizer maps z = 0 to -1.
        if z > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        gauss::cdf(z / ch.noise_var.sqrt())
    };
    let a = if sign > 0.0 { a_plus } else { 1.0 - a_plus };
    Ok(ch.gamma * a + (1.0 - ch.gamma) * (1.0 - a))
}

/// Posterior moments of one measurement's `z ~ N(p̂, τ_p)` given `y`:
/// the normalization constant `Z^p`, `E[z|y]` and `E[z²|y]`.
///
/// The two likelihood branches (sign kept / sign flipped) are combined as a
/// log-weight mixture of probit-tilted Gaussians, so `γ = 1` with extreme
/// `p̂` saturates at the truncated-Gaussian limit instead of dividing by an
/// underflowed `Z^p`.
pub fn posterior_z_moments(
    y: i8,
    p_hat: f64,
    tau_p: f64,
    ch: &ChannelParams,
) -> Result<(f64, f64, f64)> {
    let sign = check_sign(y)?;
    ensure_finite(p_hat, "p_hat")?;
    if !tau_p.is_finite() || tau_p <= 0.0 {
        return Err(Error::domain(format!(
            "tau_p must be finite and > 0, got {tau_p}"
        )));
    }

    // Branch tilted by Φ(sign·z/√v): mirror the (+) branch through z → -z.
    let kept = probit_tilt_moments(ch.noise_var, sign * p_hat, tau_p);
    let flipped = probit_tilt_moments(ch.noise_var, -sign * p_hat, tau_p);
    let kept = (kept.0, sign * kept.1, kept.2, kept.3);
    let flipped = (flipped.0, -sign * flipped.1, flipped.2, flipped.3);

    let mut lw = [ch.gamma.ln() + kept.0, (1.0 - ch.gamma).ln() + flipped.0];
    let ln_z = gauss::normalize_log_weights(&mut lw).map_err(|_| Error::Degenerate {
        index: 0,
        what: "channel normalization constant underflowed",
    })?;
    let z_p = ln_z.exp();

    let mean = lw[0] * kept.1 + lw[1] * flipped.1;
    // Mixture variance in its non-negative form.
    let var = lw[0] * (kept.3 + (kept.1 - mean) * (kept.1 - mean))
        + lw[1] * (flipped.3 + (flipped.1 - mean) * (flipped.1 - mean));
    Ok((z_p, mean, var + mean * mean))
}

/// Log mass, mean, second moment and variance of `z ~ N(p̂, τ)` tilted by
/// `Φ(z/√v)` (normalized within the branch).
fn probit_tilt_moments(v: f64, p_hat: f64, tau: f64) -> (f64, f64, f64, f64) {
    let vt = v + tau;
    let s = p_hat / vt.sqrt();
    let h = gauss::mills(s);
    let mean = p_hat + tau / vt.sqrt() * h;
    let var = (tau * (1.0 - tau / vt * h * (h + s))).max(0.0);
    let second = var + mean * mean;
    (gauss::ln_cdf(s), mean, second, var)
}

/// Measurement-side non-linear step, element-wise over a batch:
/// `ŝ_m = (E[z|y] - p̂_m)/τ_p,m`, `τ_s,m = (1 - var[z|y]/τ_p,m)/τ_p,m`,
/// with `τ_s` clamped below at `tau_s_floor`.
pub fn f_update(
    y: &[i8],
    p_hat: &[f64],
    tau_p: &[f64],
    ch: &ChannelParams,
    tau_s_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_same_len(y.len(), p_hat.len(), "f_update p_hat")?;
    ensure_same_len(y.len(), tau_p.len(), "f_update tau_p")?;
    let mut s_hat = Vec::with_capacity(y.len());
    let mut tau_s = Vec::with_capacity(y.len());
    for m in 0..y.len() {
        let (_, mean, second) = posterior_z_moments(y[m], p_hat[m], tau_p[m], ch)?;
        let var = (second - mean * mean).max(0.0);
        s_hat.push((mean - p_hat[m]) / tau_p[m]);
        tau_s.push(((1.0 - var / tau_p[m]) / tau_p[m]).max(tau_s_floor));
    }
    Ok((s_hat, tau_s))
}
