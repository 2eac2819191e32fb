//! EM updates for the side-information noise parameters: `v_s` under
//! Laplacian or Gaussian SI noise, `β` for support SI.
//!
//! The E-step distribution is the GAMP-approximated posterior at the current
//! parameter value; each update is the closed-form maximizer of the expected
//! complete-data log-likelihood under a non-informative parameter prior.

use crate::error::{ensure_same_len, Error, Result};
use crate::priors::{gaussian_si_element, laplacian_element, SideInfo, SignalPrior};

/// Legal range the `v_s` updates are clamped to.
pub const VS_BOUNDS: (f64, f64) = (1e-8, 1e8);
/// Legal range the `β` update is clamped to.
pub const BETA_BOUNDS: (f64, f64) = (0.5 + 1e-9, 1.0);

/// Inputs to one EM update: the final inner-loop GAMP state plus the
/// parameter value the posterior was computed under.
#[derive(Debug, Clone, Copy)]
pub struct EmInputs<'a> {
    pub r_hat: &'a [f64],
    pub tau_r: &'a [f64],
    /// Posterior non-zero probabilities from the denoiser (used by `β`).
    pub active_prob: &'a [f64],
    pub prior: SignalPrior,
    pub si: &'a SideInfo,
    /// `v_s^k` or `β^k`, the value the E-step posterior was formed under.
    pub current_param: f64,
}

impl<'a> EmInputs<'a> {
    fn check_lens(&self, n: usize) -> Result<()> {
        ensure_same_len(self.r_hat.len(), self.tau_r.len(), "EmInputs tau_r")?;
        ensure_same_len(self.r_hat.len(), n, "EmInputs side info")?;
        Ok(())
    }
}

/// `v_s` update for Laplacian SI noise:
/// `v_s^{k+1} = (1/2N) Σ_n E[|x_n - x̃_n|]`, with the per-element expectation
/// evaluated in closed form from the Laplacian denoiser internals at `v_s^k`
/// (spike, below-kink and above-kink pieces; each contributes a non-negative
/// deviation). Clamped to `[1e-8, 1e8]`.
pub fn update_vs_laplacian(inp: &EmInputs) -> Result<f64> {
    let si = match inp.si {
        SideInfo::AmplitudeLaplacian(a) => a,
        _ => {
            return Err(Error::Usage(
                "update_vs_laplacian requires AmplitudeLaplacian side info".into(),
            ))
        }
    };
    inp.check_lens(si.x_tilde.len())?;
    check_positive_param(inp.current_param)?;
    let n = inp.r_hat.len();
    if n == 0 {
        return Err(Error::Usage("update_vs_laplacian on empty input".into()));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let e = laplacian_element(
            i,
            inp.r_hat[i],
            inp.tau_r[i],
            &inp.prior,
            si.x_tilde[i],
            inp.current_param,
        )?;
        acc += e.abs_deviation(si.x_tilde[i]);
    }
    Ok((acc / (2.0 * n as f64)).clamp(VS_BOUNDS.0, VS_BOUNDS.1))
}

/// `v_s` update for Gaussian SI noise:
/// `v_s^{k+1} = (1/N) Σ_n E[(x_n - x̃_n)²]` with moments from the Gaussian-SI
/// denoiser at `v_s^k`; evaluated as `Var[x] + (E[x] - x̃)²` so the average is
/// non-negative by construction. Clamped to `[1e-8, 1e8]`.
pub fn update_vs_gaussian(inp: &EmInputs) -> Result<f64> {
    let si = match inp.si {
        SideInfo::AmplitudeGaussian(a) => a,
        _ => {
            return Err(Error::Usage(
                "update_vs_gaussian requires AmplitudeGaussian side info".into(),
            ))
        }
    };
    inp.check_lens(si.x_tilde.len())?;
    check_positive_param(inp.current_param)?;
    let n = inp.r_hat.len();
    if n == 0 {
        return Err(Error::Usage("update_vs_gaussian on empty input".into()));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let e = gaussian_si_element(
            inp.r_hat[i],
            inp.tau_r[i],
            &inp.prior,
            si.x_tilde[i],
            inp.current_param,
        );
        let mean = e.pi * e.m_slab;
        let var = e.pi * e.v_slab + e.pi * (1.0 - e.pi) * e.m_slab * e.m_slab;
        acc += var + (mean - si.x_tilde[i]) * (mean - si.x_tilde[i]);
    }
    Ok((acc / n as f64).clamp(VS_BOUNDS.0, VS_BOUNDS.1))
}

/// `β` update for support SI:
/// `β = (Σ_{x̃=+1} π_n + Σ_{x̃=-1} (1 - π_n)) / N`, clamped to `(0.5, 1]`.
pub fn update_beta(inp: &EmInputs) -> Result<f64> {
    let si = match inp.si {
        SideInfo::Support(s) => s,
        _ => {
            return Err(Error::Usage(
                "update_beta requires Support side info".into(),
            ))
        }
    };
    ensure_same_len(inp.active_prob.len(), si.labels.len(), "update_beta labels")?;
    let n = si.labels.len();
    if n == 0 {
        return Err(Error::Usage("update_beta on empty input".into()));
    }
    let mut acc = 0.0;
    for (&pi, &label) in inp.active_prob.iter().zip(&si.labels) {
        acc += if label == 1 { pi } else { 1.0 - pi };
    }
    Ok((acc / n as f64).clamp(BETA_BOUNDS.0, BETA_BOUNDS.1))
}

fn check_positive_param(p: f64) -> Result<()> {
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::domain(format!(
            "current_param must be finite and > 0, got {p}"
        )));
    }
    Ok(())
}
