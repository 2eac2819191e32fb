//! Independent brute-force references for every closed-form moment in the
//! crate: adaptive Gauss-Kronrod quadrature over the continuous slab pieces
//! plus exact point-mass bookkeeping for the spike.
//!
//! These live in the shipped library (not only in tests) so the CLI `oracle`
//! subcommand can re-verify the numerics on any platform. Correctness over
//! speed throughout; a quadrature that cannot reach its tolerance fails
//! loudly instead of returning a value.

use crate::error::{Error, Result};

// 15-point Kronrod / 7-point Gauss pair (positive abscissae).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and subdivision limits for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Absolute floor on the requested total error.
    pub abs_tol: f64,
    /// Requested total error relative to the L1 mass of the integrand.
    pub rel_tol: f64,
    /// Hard cap on the number of subintervals.
    pub max_subdivisions: usize,
    /// Uniform pre-split of each smooth piece, so no narrow feature can
    /// hide between the nodes of a single wide panel.
    pub initial_segments: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
            initial_segments: 32,
        }
    }
}

impl QuadratureSpec {
    /// Purely relative termination; the right choice when integrals can be
    /// far below 1 in magnitude.
    pub fn tight() -> Self {
        Self {
            abs_tol: f64::MIN_POSITIVE,
            ..Self::default()
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    result: f64,
    err: f64,
    resabs: f64,
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = f1;
        fv[14 - j] = f2;
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - reskh).abs() + (fv[14 - j] - reskh).abs());
    }
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let resabs = resabs * half.abs();
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Segment {
        a,
        b,
        result: resk * half,
        err,
        resabs,
    }
}

/// Adaptive integral of `f` over `[a, b]`, pre-split at `splits`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    splits: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Oracle(format!("bad interval [{a}, {b}]")));
    }
    let f = &f;
    let mut bounds: Vec<f64> = vec![a];
    let mut pts: Vec<f64> = splits.iter().copied().filter(|p| *p > a && *p < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    bounds.extend(pts);
    bounds.push(b);

    let per_piece = (spec.initial_segments / (bounds.len() - 1)).max(8);
    let mut segments: Vec<Segment> = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let step = (hi - lo) / per_piece as f64;
        for k in 0..per_piece {
            let sa = lo + step * k as f64;
            let sb = if k + 1 == per_piece { hi } else { lo + step * (k + 1) as f64 };
            segments.push(gk15(f, sa, sb));
        }
    }

    loop {
        let total: f64 = segments.iter().map(|s| s.result).sum();
        let total_err: f64 = segments.iter().map(|s| s.err).sum();
        let total_abs: f64 = segments.iter().map(|s| s.resabs).sum();
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Oracle("integrand produced a non-finite value".into()));
        }
        if total_err <= spec.abs_tol.max(spec.rel_tol * total_abs) {
            return Ok(total);
        }
        if segments.len() >= spec.max_subdivisions {
            return Err(Error::Oracle(format!(
                "subdivision limit {} reached (err {total_err:.3e} over tol)",
                spec.max_subdivisions
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Segment { a: sa, b: sb, .. } = segments[worst];
        let mid = 0.5 * (sa + sb);
        if !(mid > sa && mid < sb) {
            return Err(Error::Oracle(format!(
                "interval [{sa}, {sb}] cannot be split further"
            )));
        }
        segments[worst] = gk15(f, sa, mid);
        segments.push(gk15(f, mid, sb));
    }
}

// ---------------------------------------------------------------------------
// Oracle-local density helpers (deliberately not shared with the closed
// forms they are used to check).
// ---------------------------------------------------------------------------

fn npdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

fn ncdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn probit_factor(z: f64, v: f64) -> f64 {
    if v == 0.0 {
        if z > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        ncdf(z / v.sqrt())
    }
}

fn laplace_pdf(x: f64, m: f64, v_s: f64) -> f64 {
    (-(x - m).abs() / (2.0 * v_s)).exp() / (4.0 * v_s)
}

const WINDOW_SIGMAS: f64 = 45.0;

// ---------------------------------------------------------------------------
// Moment oracles.
// ---------------------------------------------------------------------------

/// Unnormalized density selector for [`oracle_moments`]; the continuous part
/// is integrated adaptively, the spike handled exactly.
#[derive(Debug, Clone, Copy)]
pub enum OracleDensity {
    /// `[(1-λ)δ(x) + λN(x;0,v_x)] · N(x; r̂, τ_r)`
    Bg {
        lambda: f64,
        v_x: f64,
        r_hat: f64,
        tau_r: f64,
    },
    /// BG posterior times a Laplacian SI factor `L(x; x̃, 2v_s)`.
    BgLaplace {
        lambda: f64,
        v_x: f64,
        r_hat: f64,
        tau_r: f64,
        x_tilde: f64,
        v_s: f64,
    },
    /// BG posterior times a Gaussian SI factor `N(x; x̃, v_s)`.
    BgGauss {
        lambda: f64,
        v_x: f64,
        r_hat: f64,
        tau_r: f64,
        x_tilde: f64,
        v_s: f64,
    },
    /// BG posterior with the spike/slab reweighted by a ±1 support label.
    BgSupportWeight {
        lambda: f64,
        v_x: f64,
        r_hat: f64,
        tau_r: f64,
        label: i8,
        beta: f64,
    },
    /// `p(y|z; v, γ) · N(z; p̂, τ_p)`, the output-channel posterior.
    ProbitChannel {
        v: f64,
        gamma: f64,
        y: i8,
        p_hat: f64,
        tau_p: f64,
    },
}

/// Normalization constant plus normalized first and second moments of the
/// selected unnormalized density.
pub fn oracle_moments(density: &OracleDensity, spec: &QuadratureSpec) -> Result<(f64, f64, f64)> {
    match *density {
        OracleDensity::Bg {
            lambda,
            v_x,
            r_hat,
            tau_r,
        } => {
            let spike = (1.0 - lambda) * npdf(0.0, r_hat, tau_r);
            let slab = |x: f64| lambda * npdf(x, 0.0, v_x) * npdf(x, r_hat, tau_r);
            let (lo, hi) = slab_window(v_x, r_hat, tau_r, None);
            moments_with_spike(spike, slab, lo, hi, &[0.0], spec)
        }
        OracleDensity::BgLaplace {
            lambda,
            v_x,
            r_hat,
            tau_r,
            x_tilde,
            v_s,
        } => {
            let spike =
                (1.0 - lambda) * npdf(0.0, r_hat, tau_r) * laplace_pdf(0.0, x_tilde, v_s);
            let slab = move |x: f64| {
                lambda * npdf(x, 0.0, v_x) * npdf(x, r_hat, tau_r) * laplace_pdf(x, x_tilde, v_s)
            };
            let (lo, hi) = slab_window(v_x, r_hat, tau_r, Some(x_tilde));
            moments_with_spike(spike, slab, lo, hi, &laplace_splits(x_tilde, v_s), spec)
        }
        OracleDensity::BgGauss {
            lambda,
            v_x,
            r_hat,
            tau_r,
            x_tilde,
            v_s,
        } => {
            let spike = (1.0 - lambda) * npdf(0.0, r_hat, tau_r) * npdf(0.0, x_tilde, v_s);
            let slab = move |x: f64| {
                lambda * npdf(x, 0.0, v_x) * npdf(x, r_hat, tau_r) * npdf(x, x_tilde, v_s)
            };
            // Combine the three Gaussian factors for the window.
            let v_c = v_x * tau_r / (v_x + tau_r);
            let m_c = v_x * r_hat / (v_x + tau_r);
            let v_d = v_c * v_s / (v_c + v_s);
            let m_d = (m_c * v_s + x_tilde * v_c) / (v_c + v_s);
            let w = WINDOW_SIGMAS * v_d.sqrt();
            moments_with_spike(spike, slab, m_d - w, m_d + w, &[0.0], spec)
        }
        OracleDensity::BgSupportWeight {
            lambda,
            v_x,
            r_hat,
            tau_r,
            label,
            beta,
        } => {
            let (p_active, p_zero) = if label == 1 {
                (beta, 1.0 - beta)
            } else {
                (1.0 - beta, beta)
            };
            let spike = (1.0 - lambda) * p_zero * npdf(0.0, r_hat, tau_r);
            let slab =
                move |x: f64| lambda * p_active * npdf(x, 0.0, v_x) * npdf(x, r_hat, tau_r);
            let (lo, hi) = slab_window(v_x, r_hat, tau_r, None);
            moments_with_spike(spike, slab, lo, hi, &[0.0], spec)
        }
        OracleDensity::ProbitChannel {
            v,
            gamma,
            y,
            p_hat,
            tau_p,
        } => {
            let like = move |z: f64| {
                let a_plus = probit_factor(z, v);
                let a = if y == 1 { a_plus } else { 1.0 - a_plus };
                gamma * a + (1.0 - gamma) * (1.0 - a)
            };
            let dens = move |z: f64| like(z) * npdf(z, p_hat, tau_p);
            let w = WINDOW_SIGMAS * tau_p.sqrt();
            moments_with_spike(0.0, dens, p_hat - w, p_hat + w, &[0.0], spec)
        }
    }
}

/// Split points for a Laplacian factor: the kink itself plus brackets at
/// the factor's own scale, so a kink far narrower than the window cannot
/// hide between panel nodes.
fn laplace_splits(x_tilde: f64, v_s: f64) -> Vec<f64> {
    let b = 2.0 * v_s;
    vec![
        0.0,
        x_tilde - 40.0 * b,
        x_tilde,
        x_tilde + 40.0 * b,
    ]
}

fn slab_window(v_x: f64, r_hat: f64, tau_r: f64, extra_center: Option<f64>) -> (f64, f64) {
    let v_c = v_x * tau_r / (v_x + tau_r);
    let m_c = v_x * r_hat / (v_x + tau_r);
    let w = WINDOW_SIGMAS * v_c.sqrt();
    match extra_center {
        None => (m_c - w, m_c + w),
        Some(c) => ((m_c.min(c)) - w, (m_c.max(c)) + w),
    }
}

fn moments_with_spike(
    spike: f64,
    slab: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    splits: &[f64],
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    let m1 = integrate(|x| x * slab(x), lo, hi, splits, spec)?;
    let m2 = integrate(|x| x * x * slab(x), lo, hi, splits, spec)?;
    let z = spike + integrate(slab, lo, hi, splits, spec)?;
    if z <= 0.0 {
        return Err(Error::Oracle(format!("degenerate oracle mass {z}")));
    }
    Ok((z, m1 / z, m2 / z))
}

// ---------------------------------------------------------------------------
// Raw integral oracles for the special-function layer.
// ---------------------------------------------------------------------------

/// Quadrature version of `PI_q = ∫ z^q Φ(z/√v) N(z; p̂, τ_p) dz`, q = 0, 1, 2.
pub fn oracle_probit_integrals(
    v: f64,
    p_hat: f64,
    tau_p: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    let g = move |z: f64| probit_factor(z, v) * npdf(z, p_hat, tau_p);
    let w = WINDOW_SIGMAS * tau_p.sqrt();
    let (lo, hi) = (p_hat - w, p_hat + w);
    Ok((
        integrate(g, lo, hi, &[0.0], spec)?,
        integrate(|z| z * g(z), lo, hi, &[0.0], spec)?,
        integrate(|z| z * z * g(z), lo, hi, &[0.0], spec)?,
    ))
}

/// Quadrature version of `I_q = ∫_{-∞}^{upper} x^q N(x; m, τ) dx`, q = 0, 1, 2.
pub fn oracle_trunc_integrals(
    upper: f64,
    m: f64,
    tau: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    let g = move |x: f64| npdf(x, m, tau);
    let lo = m.min(upper) - WINDOW_SIGMAS * tau.sqrt();
    Ok((
        integrate(g, lo, upper, &[], spec)?,
        integrate(|x| x * g(x), lo, upper, &[], spec)?,
        integrate(|x| x * x * g(x), lo, upper, &[], spec)?,
    ))
}

/// Quadrature version of the Laplacian-EM expectation `E|x - x̃|` under the
/// BG × Gaussian-pseudo-observation × Laplacian-SI posterior; piecewise with
/// splits at the spike location and the kink.
pub fn oracle_abs_deviation(
    lambda: f64,
    v_x: f64,
    r_hat: f64,
    tau_r: f64,
    x_tilde: f64,
    v_s: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let slab = move |x: f64| {
        lambda * npdf(x, 0.0, v_x) * npdf(x, r_hat, tau_r) * laplace_pdf(x, x_tilde, v_s)
    };
    let spike = (1.0 - lambda) * npdf(0.0, r_hat, tau_r) * laplace_pdf(0.0, x_tilde, v_s);
    let (lo, hi) = slab_window(v_x, r_hat, tau_r, Some(x_tilde));
    let splits = laplace_splits(x_tilde, v_s);
    let dev = integrate(
        |x| (x - x_tilde).abs() * slab(x),
        lo,
        hi,
        &splits,
        spec,
    )?;
    let z = spike + integrate(slab, lo, hi, &splits, spec)?;
    Ok((spike * x_tilde.abs() + dev) / z)
}
