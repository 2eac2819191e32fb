//! Input-side denoisers `G₁`/`G₂`: posterior mean and variance of each
//! coefficient given its Gaussian pseudo-observation `r̂ ~ N(x, τ_r)` under
//! the Bernoulli-Gaussian prior, optionally combined with side-information.
//!
//! Every posterior here is a small mixture (spike at zero plus one or two
//! slab pieces); the mixture weights are carried as log weights and
//! normalized by max-shifted exponentiation, and truncated slab pieces use
//! Mills-ratio moments so nothing underflows before it has to.

use crate::error::{ensure_same_len, Error, Result};
use crate::gauss::{self, ln_half_erfcx, ln_npdf, lower_trunc_moments_normalized, normalize_log_weights};

/// Bernoulli-Gaussian prior: each coefficient is zero with probability
/// `1-λ`, otherwise `N(0, v_x)`.
///
/// `λ = 1` (no spike) is accepted as the degenerate dense limit so the pure
/// Gaussian prior can be expressed as a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPrior {
    lambda: f64,
    v_x: f64,
}

impl SignalPrior {
    pub fn new(lambda: f64, v_x: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::domain(format!(
                "lambda must lie in (0, 1], got {lambda}"
            )));
        }
        if !v_x.is_finite() || v_x <= 0.0 {
            return Err(Error::domain(format!(
                "v_x must be finite and > 0, got {v_x}"
            )));
        }
        Ok(Self { lambda, v_x })
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn v_x(&self) -> f64 {
        self.v_x
    }

    /// Prior variance `λ·v_x`, the engine's `τ_x` initialization.
    pub fn variance(&self) -> f64 {
        self.lambda * self.v_x
    }
}

/// Amplitude side-information: a noisy copy `x̃` of the signal with noise
/// parameter `v_s` (Laplacian scale `2·v_s`, or Gaussian variance `v_s`).
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSi {
    pub x_tilde: Vec<f64>,
    pub v_s: f64,
}

impl AmplitudeSi {
    pub fn new(x_tilde: Vec<f64>, v_s: f64) -> Result<Self> {
        check_vs(v_s)?;
        Ok(Self { x_tilde, v_s })
    }
}

fn check_vs(v_s: f64) -> Result<()> {
    if !v_s.is_finite() || v_s <= 0.0 {
        return Err(Error::domain(format!(
            "v_s must be finite and > 0, got {v_s}"
        )));
    }
    Ok(())
}

/// Support side-information: ±1 labels of the signal support, each label
/// agreeing with the truth with probability `β ∈ (0.5, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSi {
    pub labels: Vec<i8>,
    pub beta: f64,
}

impl SupportSi {
    pub fn new(labels: Vec<i8>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        check_labels(&labels)?;
        Ok(Self { labels, beta })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.5 && beta <= 1.0) {
        return Err(Error::domain(format!(
            "beta must lie in (0.5, 1], got {beta}"
        )));
    }
    Ok(())
}

fn check_labels(labels: &[i8]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::domain(format!(
            "support labels must be +1 or -1, got {bad}"
        )));
    }
    Ok(())
}

/// The side-information available to the reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub enum SideInfo {
    None,
    AmplitudeLaplacian(AmplitudeSi),
    AmplitudeGaussian(AmplitudeSi),
    Support(SupportSi),
}

impl SideInfo {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Option<usize> {
        match self {
            SideInfo::None => None,
            SideInfo::AmplitudeLaplacian(a) | SideInfo::AmplitudeGaussian(a) => {
                Some(a.x_tilde.len())
            }
            SideInfo::Support(s) => Some(s.labels.len()),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, SideInfo::None)
    }
}

/// Element-wise denoiser output: posterior mean (`x̂`), posterior variance
/// (`τ_x`) and posterior non-zero probability (`π`, consumed by EM).
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub active_prob: Vec<f64>,
}

fn check_tau_r(tau_r: &[f64]) -> Result<()> {
    if let Some(bad) = tau_r.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(Error::domain(format!(
            "tau_r must be finite and > 0 elementwise, got {bad}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bernoulli-Gaussian denoiser.
// ---------------------------------------------------------------------------

pub(crate) struct BgElement {
    /// Posterior non-zero probability.
    pub pi: f64,
    /// Slab posterior mean `v_x r̂ / (v_x + τ_r)`.
    pub m_slab: f64,
    /// Slab posterior variance `v_x τ_r / (v_x + τ_r)`.
    pub v_slab: f64,
}

pub(crate) fn bg_element(r: f64, tau: f64, prior: &SignalPrior) -> BgElement {
    let (lambda, v_x) = (prior.lambda, prior.v_x);
    let mut lw = [
        (1.0 - lambda).ln() + ln_npdf(0.0, r, tau),
        lambda.ln() + ln_npdf(0.0, r, v_x + tau),
    ];
    // Both components are finite for λ ∈ (0,1]; λ = 1 zeroes the spike.
    normalize_log_weights(&mut lw).expect("BG weights cannot all underflow");
    BgElement {
        pi: lw[1],
        m_slab: v_x * r / (v_x + tau),
        v_slab: v_x * tau / (v_x + tau),
    }
}

/// Spike-and-slab posterior moments without side-information.
pub fn bg_denoise(r_hat: &[f64], tau_r: &[f64], prior: &SignalPrior) -> Result<DenoiserOutput> {
    ensure_same_len(r_hat.len(), tau_r.len(), "bg_denoise tau_r")?;
    check_tau_r(tau_r)?;
    let n = r_hat.len();
    let mut out = DenoiserOutput {
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        active_prob: Vec::with_capacity(n),
    };
    for (&r, &t) in r_hat.iter().zip(tau_r) {
        let e = bg_element(r, t, prior);
        let mean = e.pi * e.m_slab;
        // π·v + π(1-π)·m² is the variance in its non-negative form.
        let var = e.pi * e.v_slab + e.pi * (1.0 - e.pi) * e.m_slab * e.m_slab;
        out.mean.push(mean);
        out.variance.push(var);
        out.active_prob.push(e.pi);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Laplacian amplitude side-information.
// ---------------------------------------------------------------------------

/// One coefficient's posterior under the BG prior, the Gaussian
/// pseudo-observation and a Laplacian amplitude-SI factor
/// `L(x; x̃, 2v_s) = exp(-|x - x̃|/(2v_s))/(4v_s)`.
///
/// Three mixture pieces: the spike at zero, the slab restricted to
/// `x ≤ x̃` (Gaussian `N(m_g + v_g/(2v_s), v_g)` truncated above at `x̃`)
/// and the slab restricted to `x ≥ x̃` (mirror image with the shift
/// reversed). Everything is computed from log weights.
pub(crate) struct LapElement {
    pub pi_spike: f64,
    pub pi_lo: f64,
    pub pi_hi: f64,
    pub mean_lo: f64,
    pub var_lo: f64,
    pub mean_hi: f64,
    pub var_hi: f64,
}

impl LapElement {
    pub fn active_prob(&self) -> f64 {
        self.pi_lo + self.pi_hi
    }

    pub fn mean(&self) -> f64 {
        self.pi_lo * self.mean_lo + self.pi_hi * self.mean_hi
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pi_spike * mean * mean
            + self.pi_lo * (self.var_lo + (self.mean_lo - mean) * (self.mean_lo - mean))
            + self.pi_hi * (self.var_hi + (self.mean_hi - mean) * (self.mean_hi - mean))
    }

    /// Posterior expectation of `|x - x̃|`, the per-element quantity the
    /// Laplacian EM update averages. Each piece is non-negative: the spike
    /// sits at zero (deviation `|x̃|`), the low piece lies below `x̃`, the
    /// high piece above it.
    pub fn abs_deviation(&self, x_tilde: f64) -> f64 {
        self.pi_spike * x_tilde.abs()
            + self.pi_lo * (x_tilde - self.mean_lo).max(0.0)
            + self.pi_hi * (self.mean_hi - x_tilde).max(0.0)
    }
}

pub(crate) fn laplacian_element(
    index: usize,
    r: f64,
    tau: f64,
    prior: &SignalPrior,
    x_tilde: f64,
    v_s: f64,
) -> Result<LapElement> {
    let (lambda, v_x) = (prior.lambda, prior.v_x);
    let m_g = v_x * r / (v_x + tau);
    let v_g = v_x * tau / (v_x + tau);
    let shift = v_g / (2.0 * v_s);
    let ln_slab = lambda.ln() + ln_npdf(0.0, r, v_x + tau) - (4.0 * v_s).ln();

    // Log masses of the exponentially tilted pieces, `g = ln(4 v_s C) +
    // ln Φ(·)`. Written with `u = (x̃ - m_g)/√v_g` and `w = √v_g/(2 v_s)`,
    // the `±u·w + w²/2` part of `ln C` cancels against the `-d²/2` inside
    // `ln Φ(d)` exactly, so for small `v_s` the tilted-mass log is formed
    // from `-u²/2 + ln(erfcx(·)/2)` instead of two huge opposing terms.
    let u = (x_tilde - m_g) / v_g.sqrt();
    let w = v_g.sqrt() / (2.0 * v_s);
    let d_lo = u - w;
    let g_lo = if d_lo <= 0.0 {
        -0.5 * u * u + ln_half_erfcx(-d_lo / std::f64::consts::SQRT_2)
    } else {
        -u * w + 0.5 * w * w + gauss::cdf(d_lo).ln()
    };
    let d_hi = u + w;
    let g_hi = if d_hi >= 0.0 {
        -0.5 * u * u + ln_half_erfcx(d_hi / std::f64::consts::SQRT_2)
    } else {
        u * w + 0.5 * w * w + gauss::cdf(-d_hi).ln()
    };

    // Low piece: N(m_g + shift, v_g) truncated to (-∞, x̃].
    let (_, mean_lo, var_lo) = lower_trunc_moments_normalized(x_tilde, m_g + shift, v_g);
    // High piece through the mirror x → -x.
    let (_, neg_mean_hi, var_hi) =
        lower_trunc_moments_normalized(-x_tilde, -(m_g - shift), v_g);

    let mut lw = [
        (1.0 - lambda).ln() + ln_npdf(0.0, r, tau) - (4.0 * v_s).ln()
            - x_tilde.abs() / (2.0 * v_s),
        ln_slab + g_lo,
        ln_slab + g_hi,
    ];
    normalize_log_weights(&mut lw).map_err(|_| Error::Degenerate {
        index,
        what: "Laplacian-SI normalizer underflowed after log shift",
    })?;

    Ok(LapElement {
        pi_spike: lw[0],
        pi_lo: lw[1],
        pi_hi: lw[2],
        mean_lo,
        var_lo,
        mean_hi: -neg_mean_hi,
        var_hi,
    })
}

/// Posterior moments with a Laplacian-noise amplitude-SI prior factor.
pub fn laplacian_si_denoise(
    r_hat: &[f64],
    tau_r: &[f64],
    prior: &SignalPrior,
    si: &AmplitudeSi,
) -> Result<DenoiserOutput> {
    ensure_same_len(r_hat.len(), tau_r.len(), "laplacian_si_denoise tau_r")?;
    ensure_same_len(r_hat.len(), si.x_tilde.len(), "laplacian_si_denoise x_tilde")?;
    check_tau_r(tau_r)?;
    check_vs(si.v_s)?;
    let n = r_hat.len();
    let mut out = DenoiserOutput {
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        active_prob: Vec::with_capacity(n),
    };
    for i in 0..n {
        let e = laplacian_element(i, r_hat[i], tau_r[i], prior, si.x_tilde[i], si.v_s)?;
        out.mean.push(e.mean());
        out.variance.push(e.variance());
        out.active_prob.push(e.active_prob());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gaussian amplitude side-information.
// ---------------------------------------------------------------------------

pub(crate) struct GaussSiElement {
    pub pi: f64,
    /// Slab posterior mean `(r̂ v_s v_x + v_x τ_r x̃) / (v_x τ_r + τ_r v_s + v_s v_x)`.
    pub m_slab: f64,
    pub v_slab: f64,
}

pub(crate) fn gaussian_si_element(
    r: f64,
    tau: f64,
    prior: &SignalPrior,
    x_tilde: f64,
    v_s: f64,
) -> GaussSiElement {
    let (lambda, v_x) = (prior.lambda, prior.v_x);
    let m_g = v_x * r / (v_x + tau);
    let v_g = v_x * tau / (v_x + tau);
    let mut lw = [
        (1.0 - lambda).ln() + ln_npdf(0.0, r, tau) + ln_npdf(0.0, x_tilde, v_s),
        lambda.ln() + ln_npdf(0.0, r, v_x + tau) + ln_npdf(m_g, x_tilde, v_g + v_s),
    ];
    normalize_log_weights(&mut lw).expect("Gaussian-SI weights cannot all underflow");
    let denom = v_x * tau + tau * v_s + v_s * v_x;
    GaussSiElement {
        pi: lw[1],
        m_slab: (r * v_s * v_x + v_x * tau * x_tilde) / denom,
        v_slab: v_s * tau * v_x / denom,
    }
}

/// Posterior moments with a Gaussian-noise amplitude-SI prior factor.
pub fn gaussian_si_denoise(
    r_hat: &[f64],
    tau_r: &[f64],
    prior: &SignalPrior,
    si: &AmplitudeSi,
) -> Result<DenoiserOutput> {
    ensure_same_len(r_hat.len(), tau_r.len(), "gaussian_si_denoise tau_r")?;
    ensure_same_len(r_hat.len(), si.x_tilde.len(), "gaussian_si_denoise x_tilde")?;
    check_tau_r(tau_r)?;
    check_vs(si.v_s)?;
    let n = r_hat.len();
    let mut out = DenoiserOutput {
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        active_prob: Vec::with_capacity(n),
    };
    for i in 0..n {
        let e = gaussian_si_element(r_hat[i], tau_r[i], prior, si.x_tilde[i], si.v_s);
        out.mean.push(e.pi * e.m_slab);
        out.variance
            .push(e.pi * e.v_slab + e.pi * (1.0 - e.pi) * e.m_slab * e.m_slab);
        out.active_prob.push(e.pi);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Support side-information.
// ---------------------------------------------------------------------------

pub(crate) fn support_element(
    index: usize,
    r: f64,
    tau: f64,
    prior: &SignalPrior,
    label: i8,
    beta: f64,
) -> Result<BgElement> {
    let (lambda, v_x) = (prior.lambda, prior.v_x);
    // Flip table: the label agrees with the true support with probability β.
    let (p_given_active, p_given_zero) = if label == 1 {
        (beta, 1.0 - beta)
    } else {
        (1.0 - beta, beta)
    };
    let mut lw = [
        (1.0 - lambda).ln() + p_given_zero.ln() + ln_npdf(0.0, r, tau),
        lambda.ln() + p_given_active.ln() + ln_npdf(0.0, r, v_x + tau),
    ];
    normalize_log_weights(&mut lw).map_err(|_| Error::Degenerate {
        index,
        what: "support-SI posterior has zero mass (prior contradicts the label)",
    })?;
    Ok(BgElement {
        pi: lw[1],
        m_slab: v_x * r / (v_x + tau),
        v_slab: v_x * tau / (v_x + tau),
    })
}

/// Posterior moments with ±1 support labels as side-information.
pub fn support_si_denoise(
    r_hat: &[f64],
    tau_r: &[f64],
    prior: &SignalPrior,
    si: &SupportSi,
) -> Result<DenoiserOutput> {
    ensure_same_len(r_hat.len(), tau_r.len(), "support_si_denoise tau_r")?;
    ensure_same_len(r_hat.len(), si.labels.len(), "support_si_denoise labels")?;
    check_tau_r(tau_r)?;
    check_beta(si.beta)?;
    check_labels(&si.labels)?;
    let n = r_hat.len();
    let mut out = DenoiserOutput {
        mean: Vec::with_capacity(n),
        variance: Vec::with_capacity(n),
        active_prob: Vec::with_capacity(n),
    };
    for i in 0..n {
        let e = support_element(i, r_hat[i], tau_r[i], prior, si.labels[i], si.beta)?;
        out.mean.push(e.pi * e.m_slab);
        out.variance
            .push(e.pi * e.v_slab + e.pi * (1.0 - e.pi) * e.m_slab * e.m_slab);
        out.active_prob.push(e.pi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> SignalPrior {
        SignalPrior::new(0.15, 5.5).unwrap()
    }

    #[test]
    fn constructors_validate() {
        assert!(SignalPrior::new(0.0, 1.0).is_err());
        assert!(SignalPrior::new(1.5, 1.0).is_err());
        assert!(SignalPrior::new(0.3, 0.0).is_err());
        assert!(SignalPrior::new(1.0, 1.0).is_ok());
        assert!(AmplitudeSi::new(vec![0.0], 0.0).is_err());
        assert!(SupportSi::new(vec![1, -1], 0.5).is_err());
        assert!(SupportSi::new(vec![1, 0], 0.9).is_err());
    }

    #[test]
    fn bg_gaussian_limit_and_symmetry() {
        let p = SignalPrior::new(1.0 - 1e-12, 5.5).unwrap();
        let r = [1.7];
        let t = [0.4];
        let out = bg_denoise(&r, &t, &p).unwrap();
        let shrink = 5.5 * 1.7 / (5.5 + 0.4);
        assert!((out.mean[0] - shrink).abs() < 1e-6);

        let p = prior();
        let pos = bg_denoise(&[0.9], &[0.3], &p).unwrap();
        let neg = bg_denoise(&[-0.9], &[0.3], &p).unwrap();
        assert_eq!(pos.mean[0], -neg.mean[0]);
        assert_eq!(pos.variance[0], neg.variance[0]);
        let zero = bg_denoise(&[0.0], &[0.3], &p).unwrap();
        assert_eq!(zero.mean[0], 0.0);
        assert!(bg_denoise(&[0.0], &[0.0], &p).is_err());
    }

    #[test]
    fn laplacian_reduces_to_bg_when_flat() {
        let p = prior();
        let r = [0.6, -1.2, 4.0];
        let t = [0.5, 0.2, 1.1];
        let si = AmplitudeSi::new(vec![2.0, 0.0, -3.0], 1e8).unwrap();
        let lap = laplacian_si_denoise(&r, &t, &p, &si).unwrap();
        let bg = bg_denoise(&r, &t, &p).unwrap();
        for i in 0..3 {
            assert!((lap.mean[i] - bg.mean[i]).abs() < 1e-4, "mean {i}");
            assert!((lap.variance[i] - bg.variance[i]).abs() < 1e-4, "var {i}");
        }
    }

    #[test]
    fn laplacian_symmetric_case() {
        let p = prior();
        let si = AmplitudeSi::new(vec![0.0], 0.7).unwrap();
        let out = laplacian_si_denoise(&[0.0], &[0.4], &p, &si).unwrap();
        assert!(out.mean[0].abs() < 1e-14);
        assert!(out.variance[0] >= 0.0);
    }

    #[test]
    fn gaussian_reduces_to_bg_when_flat() {
        let p = prior();
        let r = [0.6, -1.2];
        let t = [0.5, 0.2];
        let si = AmplitudeSi::new(vec![2.0, -1.0], 1e8).unwrap();
        let gau = gaussian_si_denoise(&r, &t, &p, &si).unwrap();
        let bg = bg_denoise(&r, &t, &p).unwrap();
        for i in 0..2 {
            assert!((gau.mean[i] - bg.mean[i]).abs() < 1e-4);
            assert!((gau.variance[i] - bg.variance[i]).abs() < 1e-4);
        }
        let sym = gaussian_si_denoise(&[0.0], &[0.5], &p, &AmplitudeSi::new(vec![0.0], 0.2).unwrap())
            .unwrap();
        assert_eq!(sym.mean[0], 0.0);
    }

    #[test]
    fn support_near_uninformative_and_certain() {
        let p = prior();
        let r = [1.1, -0.4];
        let t = [0.6, 0.3];
        let si = SupportSi::new(vec![1, -1], 0.5 + 1e-9).unwrap();
        let sup = support_si_denoise(&r, &t, &p, &si).unwrap();
        let bg = bg_denoise(&r, &t, &p).unwrap();
        for i in 0..2 {
            assert!((sup.mean[i] - bg.mean[i]).abs() < 1e-6);
            assert!((sup.variance[i] - bg.variance[i]).abs() < 1e-6);
        }

        // β = 1 with a -1 label pins the coefficient at zero exactly.
        let si = SupportSi::new(vec![-1], 1.0).unwrap();
        let out = support_si_denoise(&[1.1], &[0.6], &p, &si).unwrap();
        assert_eq!(out.active_prob[0], 0.0);
        assert_eq!(out.mean[0], 0.0);
        assert_eq!(out.variance[0], 0.0);
    }

    #[test]
    fn laplacian_survives_extreme_vs() {
        // v_s at the EM clamp floor: the SI factor is close to a point mass
        // at x̃; the tilted-mass logs must not blow up in the cancellation
        // between the tilt constant and the truncated-Gaussian mass.
        let p = prior();
        for &v_s in &[1e-5, 1e-8] {
            let si = AmplitudeSi::new(vec![2.0, -1.3, 0.0], v_s).unwrap();
            let out =
                laplacian_si_denoise(&[1.8, -1.0, 0.4], &[0.5, 0.2, 1.0], &p, &si).unwrap();
            for i in 0..3 {
                assert!(out.mean[i].is_finite());
                assert!(out.variance[i] >= 0.0 && out.variance[i].is_finite());
                // Posterior pinned on the side value.
                assert!(
                    (out.mean[i] - si.x_tilde[i]).abs() < 1e-2 + v_s.sqrt() * 10.0,
                    "mean {} vs x̃ {}",
                    out.mean[i],
                    si.x_tilde[i]
                );
            }
        }
    }

    #[test]
    fn variances_stay_nonnegative() {
        let p = prior();
        let r: Vec<f64> = (0..40).map(|i| -8.0 + 0.41 * i as f64).collect();
        let t: Vec<f64> = (0..40).map(|i| 0.01 + 0.12 * i as f64).collect();
        for out in [
            bg_denoise(&r, &t, &p).unwrap(),
            laplacian_si_denoise(&r, &t, &p, &AmplitudeSi::new(vec![1.5; 40], 0.3).unwrap())
                .unwrap(),
            gaussian_si_denoise(&r, &t, &p, &AmplitudeSi::new(vec![-2.5; 40], 0.1).unwrap())
                .unwrap(),
            support_si_denoise(&r, &t, &p, &SupportSi::new(vec![1; 40], 0.9).unwrap()).unwrap(),
        ] {
            for i in 0..40 {
                assert!(out.variance[i] >= 0.0);
                assert!((0.0..=1.0).contains(&out.active_prob[i]));
            }
        }
    }
}
