//! The iterative reconstruction engines: sum-product GAMP for the one-bit
//! channel, with and without side-information, plus the outer EM loop that
//! re-estimates the SI noise parameter between inner passes.
//!
//! One inner iteration alternates
//!
//! ```text
//! τ_p = (A⊙A) τ_x            p̂ = A x̂ - τ_p ⊙ ŝ        (Onsager correction)
//! ŝ = F₁(y, p̂, τ_p)          τ_s = F₂(y, p̂, τ_p)
//! τ_r = ((A⊙A)ᵀ τ_s)⁻¹       r̂ = x̂ + τ_r ⊙ (Aᵀ ŝ)
//! x̂ = G₁(r̂, τ_r)             τ_x = G₂(r̂, τ_r)
//! ```
//!
//! with all inverses element-wise and every variance clamped into
//! `[tau_floor, 1/tau_floor]`. A run is fully deterministic.

use crate::channel::{f_update, ChannelParams};
use crate::error::{ensure_same_len, Error, Result};
use crate::mat::Mat;
use crate::priors::{
    bg_denoise, gaussian_si_denoise, laplacian_si_denoise, support_si_denoise, AmplitudeSi,
    DenoiserOutput, SideInfo, SignalPrior, SupportSi,
};
use crate::{em, sim};

/// A sensing matrix with its element-wise square cached, since both linear
/// steps consume `A ⊙ A` every iteration.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    a: Mat,
    a_sq: Mat,
}

impl SensingMatrix {
    pub fn new(a: Mat) -> Self {
        let a_sq = a.hadamard_square();
        Self { a, a_sq }
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }
}

/// Per-iteration vectors of the message-passing recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    pub x_hat: Vec<f64>,
    pub tau_x: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub tau_s: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub tau_p: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub tau_r: Vec<f64>,
    pub iteration: usize,
}

impl GampState {
    /// Algorithm initialization: `x̂ = E[x] = 0`, `τ_x = var[x] = λ·v_x`,
    /// `ŝ = 0`.
    pub fn init(m: usize, n: usize, prior: &SignalPrior) -> Self {
        Self {
            x_hat: vec![0.0; n],
            tau_x: vec![prior.variance(); n],
            s_hat: vec![0.0; m],
            tau_s: vec![0.0; m],
            p_hat: vec![0.0; m],
            tau_p: vec![1.0; m],
            r_hat: vec![0.0; n],
            tau_r: vec![1.0; n],
            iteration: 0,
        }
    }
}

/// Engine knobs. Defaults: 30 inner iterations, 10 outer EM iterations, no
/// damping, `τ` floor 1e-12, relative-change tolerance 1e-6, EM on, warm
/// outer restarts.
///
/// Damping below 1 trades speed for robustness: `x̂ ← d·x̂_new + (1-d)·x̂`
/// (and the same for `ŝ`). 0.7 is a reasonable choice for ill-conditioned
/// measurement matrices; the default 1.0 is the plain recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GampConfig {
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub damping: f64,
    pub tau_floor: f64,
    pub convergence_tol: f64,
    pub em_enabled: bool,
    /// Keep the message-passing state across outer EM iterations instead of
    /// re-initializing it.
    pub warm_start: bool,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            max_inner_iters: 30,
            max_outer_iters: 10,
            damping: 1.0,
            tau_floor: 1e-12,
            convergence_tol: 1e-6,
            em_enabled: true,
            warm_start: true,
        }
    }
}

impl GampConfig {
    fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::domain("iteration counts must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::domain(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !self.tau_floor.is_finite() || self.tau_floor <= 0.0 {
            return Err(Error::domain("tau_floor must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a reconstruction run.
#[derive(Debug, Clone, PartialEq)]
pub struct GampResult {
    pub x_hat: Vec<f64>,
    pub tau_x: Vec<f64>,
    pub active_prob: Vec<f64>,
    /// Final `v_s` or `β` when the EM loop ran.
    pub estimated_param: Option<f64>,
    pub inner_iterations_used: usize,
    pub outer_iterations_used: usize,
    /// Per-iteration NMSE against the supplied ground truth, when given.
    pub trajectory: Option<Vec<f64>>,
    /// Non-fatal events, e.g. an EM update that had to be clamped.
    pub warnings: Vec<String>,
}

/// Measurement-side linear step: `τ_p = (A⊙A) τ_x` (floored) and
/// `p̂ = A x̂ - τ_p ⊙ ŝ`.
pub fn linear_measurement_step(
    op: &SensingMatrix,
    state: &GampState,
    tau_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tau_p: Vec<f64> = op
        .a_sq
        .mul_vec(&state.tau_x)?
        .into_iter()
        .map(|t| t.max(tau_floor))
        .collect();
    let p_hat: Vec<f64> = op
        .a
        .mul_vec(&state.x_hat)?
        .into_iter()
        .zip(tau_p.iter().zip(&state.s_hat))
        .map(|(ax, (tp, s))| ax - tp * s)
        .collect();
    Ok((p_hat, tau_p))
}

/// Estimation-side linear step: `τ_r = ((A⊙A)ᵀ τ_s)⁻¹` element-wise, clamped
/// into `[tau_floor, 1/tau_floor]`, and `r̂ = x̂ + τ_r ⊙ (Aᵀ ŝ)`.
pub fn linear_estimation_step(
    op: &SensingMatrix,
    state: &GampState,
    tau_floor: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tau_r: Vec<f64> = op
        .a_sq
        .tr_mul_vec(&state.tau_s)?
        .into_iter()
        .map(|d| (1.0 / d).clamp(tau_floor, 1.0 / tau_floor))
        .collect();
    let r_hat: Vec<f64> = op
        .a
        .tr_mul_vec(&state.s_hat)?
        .into_iter()
        .zip(tau_r.iter().zip(&state.x_hat))
        .map(|(ats, (tr, x))| x + tr * ats)
        .collect();
    Ok((r_hat, tau_r))
}

/// Which input denoiser the inner loop uses; the SI parameter is the piece
/// the outer EM loop mutates.
enum Denoiser<'a> {
    Bg,
    Laplacian { x_tilde: &'a [f64], v_s: f64 },
    Gaussian { x_tilde: &'a [f64], v_s: f64 },
    Support { labels: &'a [i8], beta: f64 },
}

impl<'a> Denoiser<'a> {
    fn from_side_info(si: &'a SideInfo) -> Result<Self> {
        Ok(match si {
            SideInfo::None => {
                return Err(Error::Usage(
                    "run_with_si requires side information; use run_noisy1bg".into(),
                ))
            }
            SideInfo::AmplitudeLaplacian(a) => Denoiser::Laplacian {
                x_tilde: &a.x_tilde,
                v_s: a.v_s,
            },
            SideInfo::AmplitudeGaussian(a) => Denoiser::Gaussian {
                x_tilde: &a.x_tilde,
                v_s: a.v_s,
            },
            SideInfo::Support(s) => Denoiser::Support {
                labels: &s.labels,
                beta: s.beta,
            },
        })
    }

    fn apply(
        &self,
        r_hat: &[f64],
        tau_r: &[f64],
        prior: &SignalPrior,
    ) -> Result<DenoiserOutput> {
        match self {
            Denoiser::Bg => bg_denoise(r_hat, tau_r, prior),
            Denoiser::Laplacian { x_tilde, v_s } => {
                let si = AmplitudeSi {
                    x_tilde: x_tilde.to_vec(),
                    v_s: *v_s,
                };
                laplacian_si_denoise(r_hat, tau_r, prior, &si)
            }
            Denoiser::Gaussian { x_tilde, v_s } => {
                let si = AmplitudeSi {
                    x_tilde: x_tilde.to_vec(),
                    v_s: *v_s,
                };
                gaussian_si_denoise(r_hat, tau_r, prior, &si)
            }
            Denoiser::Support { labels, beta } => {
                let si = SupportSi {
                    labels: labels.to_vec(),
                    beta: *beta,
                };
                support_si_denoise(r_hat, tau_r, prior, &si)
            }
        }
    }

    fn param(&self) -> Option<f64> {
        match self {
            Denoiser::Bg => None,
            Denoiser::Laplacian { v_s, .. } | Denoiser::Gaussian { v_s, .. } => Some(*v_s),
            Denoiser::Support { beta, .. } => Some(*beta),
        }
    }

    fn set_param(&mut self, p: f64) {
        match self {
            Denoiser::Bg => {}
            Denoiser::Laplacian { v_s, .. } | Denoiser::Gaussian { v_s, .. } => *v_s = p,
            Denoiser::Support { beta, .. } => *beta = p,
        }
    }
}

/// Reconstruction without side-information.
pub fn run_noisy1bg(
    a: &Mat,
    y: &[i8],
    prior: &SignalPrior,
    ch: &ChannelParams,
    cfg: &GampConfig,
) -> Result<GampResult> {
    run_noisy1bg_tracked(a, y, prior, ch, cfg, None)
}

/// [`run_noisy1bg`] recording a per-iteration NMSE trajectory against a
/// known ground truth.
pub fn run_noisy1bg_tracked(
    a: &Mat,
    y: &[i8],
    prior: &SignalPrior,
    ch: &ChannelParams,
    cfg: &GampConfig,
    truth: Option<&[f64]>,
) -> Result<GampResult> {
    run_internal(a, y, prior, ch, Denoiser::Bg, cfg, truth)
}

/// Reconstruction with side-information and, when `cfg.em_enabled`, an outer
/// EM loop that re-estimates `v_s` (amplitude SI) or `β` (support SI) after
/// each inner pass.
pub fn run_with_si(
    a: &Mat,
    y: &[i8],
    prior: &SignalPrior,
    ch: &ChannelParams,
    si: &SideInfo,
    cfg: &GampConfig,
) -> Result<GampResult> {
    run_with_si_tracked(a, y, prior, ch, si, cfg, None)
}

/// [`run_with_si`] with an NMSE trajectory against a known ground truth.
pub fn run_with_si_tracked(
    a: &Mat,
    y: &[i8],
    prior: &SignalPrior,
    ch: &ChannelParams,
    si: &SideInfo,
    cfg: &GampConfig,
    truth: Option<&[f64]>,
) -> Result<GampResult> {
    let denoiser = Denoiser::from_side_info(si)?;
    if let Some(n) = si.len() {
        ensure_same_len(a.cols(), n, "side info length")?;
    }
    run_internal(a, y, prior, ch, denoiser, cfg, truth)
}

fn check_signs(y: &[i8]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::domain(format!(
            "measurements must be +1 or -1, got {bad}"
        )));
    }
    Ok(())
}

fn run_internal(
    a: &Mat,
    y: &[i8],
    prior: &SignalPrior,
    ch: &ChannelParams,
    mut denoiser: Denoiser,
    cfg: &GampConfig,
    truth: Option<&[f64]>,
) -> Result<GampResult> {
    cfg.validate()?;
    check_signs(y)?;
    ensure_same_len(a.rows(), y.len(), "measurement length")?;
    if let Some(t) = truth {
        ensure_same_len(a.cols(), t.len(), "truth length")?;
    }

    let op = SensingMatrix::new(a.clone());
    let (m, n) = (op.rows(), op.cols());
    let em_active = cfg.em_enabled && !matches!(denoiser, Denoiser::Bg);
    let outer_total = if em_active { cfg.max_outer_iters } else { 1 };

    let mut state = GampState::init(m, n, prior);
    let mut last_out = DenoiserOutput {
        mean: vec![0.0; n],
        variance: vec![prior.variance(); n],
        active_prob: vec![prior.lambda(); n],
    };
    let mut trajectory = truth.map(|_| Vec::new());
    let mut warnings = Vec::new();
    let mut inner_used = 0usize;
    let mut outer_used = 0usize;

    for outer in 0..outer_total {
        outer_used = outer + 1;
        if outer > 0 && !cfg.warm_start {
            state = GampState::init(m, n, prior);
        }
        for _ in 0..cfg.max_inner_iters {
            let global_iter = state.iteration;
            let (p_hat, tau_p) = linear_measurement_step(&op, &state, cfg.tau_floor)?;
            state.p_hat = p_hat;
            state.tau_p = tau_p;

            let (s_new, tau_s) = f_update(y, &state.p_hat, &state.tau_p, ch, cfg.tau_floor)?;
            for (s, s_new) in state.s_hat.iter_mut().zip(&s_new) {
                *s = cfg.damping * s_new + (1.0 - cfg.damping) * *s;
            }
            state.tau_s = tau_s;

            let (r_hat, tau_r) = linear_estimation_step(&op, &state, cfg.tau_floor)?;
            state.r_hat = r_hat;
            state.tau_r = tau_r;

            let out = denoiser.apply(&state.r_hat, &state.tau_r, prior)?;
            let mut delta_sq = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..n {
                let x_new = cfg.damping * out.mean[i] + (1.0 - cfg.damping) * state.x_hat[i];
                delta_sq += (x_new - state.x_hat[i]) * (x_new - state.x_hat[i]);
                norm_sq += x_new * x_new;
                state.x_hat[i] = x_new;
                state.tau_x[i] = out.variance[i].max(cfg.tau_floor);
            }
            last_out = out;
            state.iteration += 1;
            inner_used += 1;

            let finite = state.x_hat.iter().all(|v| v.is_finite())
                && state.tau_x.iter().all(|v| v.is_finite())
                && state.s_hat.iter().all(|v| v.is_finite())
                && state.tau_s.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Diverged {
                    iteration: global_iter,
                });
            }

            if let (Some(traj), Some(t)) = (trajectory.as_mut(), truth) {
                let (value, _) = sim::nmse_checked(t, &state.x_hat)?;
                traj.push(value);
            }

            if delta_sq.sqrt() <= cfg.convergence_tol * norm_sq.sqrt() {
                break;
            }
        }

        if em_active && outer + 1 < outer_total {
            let current = denoiser.param().expect("SI denoiser carries a parameter");
            let si_owned = denoiser_side_info(&denoiser);
            let inputs = em::EmInputs {
                r_hat: &state.r_hat,
                tau_r: &state.tau_r,
                active_prob: &last_out.active_prob,
                prior: *prior,
                si: &si_owned,
                current_param: current,
            };
            let updated = match denoiser {
                Denoiser::Laplacian { .. } => em::update_vs_laplacian(&inputs)?,
                Denoiser::Gaussian { .. } => em::update_vs_gaussian(&inputs)?,
                Denoiser::Support { .. } => em::update_beta(&inputs)?,
                Denoiser::Bg => unreachable!(),
            };
            if updated == em::VS_BOUNDS.0
                || updated == em::VS_BOUNDS.1
                || updated == em::BETA_BOUNDS.0
            {
                warnings.push(format!(
                    "EM update clamped to {updated} at outer iteration {}",
                    outer + 1
                ));
            }
            denoiser.set_param(updated);
        }
    }

    Ok(GampResult {
        x_hat: state.x_hat,
        tau_x: state.tau_x,
        active_prob: last_out.active_prob,
        estimated_param: if em_active { denoiser.param() } else { None },
        inner_iterations_used: inner_used,
        outer_iterations_used: outer_used,
        trajectory,
        warnings,
    })
}

fn denoiser_side_info(d: &Denoiser) -> SideInfo {
    match d {
        Denoiser::Bg => SideInfo::None,
        Denoiser::Laplacian { x_tilde, v_s } => SideInfo::AmplitudeLaplacian(AmplitudeSi {
            x_tilde: x_tilde.to_vec(),
            v_s: *v_s,
        }),
        Denoiser::Gaussian { x_tilde, v_s } => SideInfo::AmplitudeGaussian(AmplitudeSi {
            x_tilde: x_tilde.to_vec(),
            v_s: *v_s,
        }),
        Denoiser::Support { labels, beta } => SideInfo::Support(SupportSi {
            labels: labels.to_vec(),
            beta: *beta,
        }),
    }
}
