//! Generative model: sparse signals, Gaussian measurement matrices, noisy
//! one-bit measurements and the side-information protocols, plus the NMSE
//! metric.
//!
//! Reproducibility: one master seed spawns independent per-trial streams by
//! a documented splitting rule ([`derive_seed`]: a splitmix64 finalizer
//! chained over the master seed and the stream labels, feeding a ChaCha12
//! generator). Trials are therefore reproducible and order-independent, so
//! they can run on any number of worker threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelParams;
use crate::error::{ensure_same_len, Error, Result};
use crate::mat::Mat;
use crate::priors::{AmplitudeSi, SideInfo, SignalPrior, SupportSi};

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream-splitting rule: fold each label into the master
/// seed through the splitmix64 finalizer.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut s = mix(master);
    for &l in labels {
        s = mix(s ^ mix(l));
    }
    s
}

/// Independent RNG stream for `(master seed, labels)`.
pub fn stream_rng(master: u64, labels: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, labels))
}

/// Measurement matrix with i.i.d. `N(0, 1)` entries (no column
/// normalization).
pub fn gen_matrix(m: usize, n: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// Draws a Bernoulli-Gaussian signal: each element is 0 with probability
/// `1-λ`, otherwise `N(0, v_x)`.
///
/// Consumes exactly two draws per element regardless of the outcome, so
/// signals generated from a shared stream stay aligned across variants.
pub fn gen_signal(prior: &SignalPrior, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let g: f64 = rng.sample(StandardNormal);
            if u < prior.lambda() {
                prior.v_x().sqrt() * g
            } else {
                0.0
            }
        })
        .collect()
}

/// One-bit quantizer of the measurement model: `+1` for positive input,
/// `-1` otherwise (zero maps to `-1`).
#[inline]
pub fn quantize(z: f64) -> i8 {
    if z > 0.0 {
        1
    } else {
        -1
    }
}

/// `y = η ⊙ sign(Ax + n)` from pre-drawn unit noise: `gauss[m]` scales to
/// the AWGN sample and the sign is kept iff `flip_u[m] < γ`.
///
/// Exposing the unit draws lets a sweep reuse one set of randomness across
/// channel parameters (common random numbers), which is what makes paired
/// comparisons across sweep values tight.
pub fn gen_measurements_from_noise(
    x: &[f64],
    a: &Mat,
    ch: &ChannelParams,
    gauss: &[f64],
    flip_u: &[f64],
) -> Result<Vec<i8>> {
    let z = a.mul_vec(x)?;
    ensure_same_len(z.len(), gauss.len(), "gen_measurements gauss")?;
    ensure_same_len(z.len(), flip_u.len(), "gen_measurements flip_u")?;
    let sd = ch.noise_var().sqrt();
    Ok(z.iter()
        .zip(gauss.iter().zip(flip_u))
        .map(|(&zm, (&g, &u))| {
            let q = quantize(zm + sd * g);
            if u < ch.gamma() {
                q
            } else {
                -q
            }
        })
        .collect())
}

/// `y = η ⊙ sign(Ax + n)` drawing the noise from `rng`.
pub fn gen_measurements(
    x: &[f64],
    a: &Mat,
    ch: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<Vec<i8>> {
    let m = a.rows();
    let gauss: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let flip_u: Vec<f64> = (0..m).map(|_| rng.random()).collect();
    gen_measurements_from_noise(x, a, ch, &gauss, &flip_u)
}

/// ±1 support encoding: `+1` where `x_n ≠ 0`, `-1` where `x_n = 0`.
pub fn support_labels(x: &[f64]) -> Vec<i8> {
    x.iter().map(|&v| if v != 0.0 { 1 } else { -1 }).collect()
}

/// Which kind of additive noise the amplitude-SI generator draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiNoiseKind {
    /// `N(0, add_noise_var)`.
    Gaussian,
    /// Laplacian with parameter `v_s = add_noise_var` (scale `2·v_s`), the
    /// matched draw for the Laplacian SI model.
    Laplacian,
}

/// Side-information protocols of the experiment suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SiProtocol {
    NoneSi,
    /// Move `support_error_frac` of the active indices to fresh locations
    /// (amplitudes redrawn from the prior slab), then add i.i.d. noise of
    /// the given kind and level to every entry.
    NoisyAmplitude {
        support_error_frac: f64,
        add_noise_var: f64,
        noise_kind: SiNoiseKind,
    },
    /// ±1 labels of the true support, each flipped independently with
    /// probability `flip_frac`.
    NoisySupport { flip_frac: f64 },
    /// A sequence of signals whose support turns over slowly; surviving
    /// amplitudes random-walk, fresh ones redraw from the slab.
    SlowVarying {
        support_change_frac: f64,
        amp_innovation_var: f64,
        epochs: usize,
    },
}

/// Scenario for one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub m: usize,
    pub prior: SignalPrior,
    pub ch: ChannelParams,
    pub si_protocol: SiProtocol,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        match self.si_protocol {
            SiProtocol::NoneSi => {}
            SiProtocol::NoisyAmplitude {
                support_error_frac,
                add_noise_var,
                ..
            } => {
                if !frac_ok(support_error_frac) {
                    return Err(Error::Config("support_error_frac must lie in [0,1]".into()));
                }
                if add_noise_var < 0.0 {
                    return Err(Error::Config("add_noise_var must be >= 0".into()));
                }
            }
            SiProtocol::NoisySupport { flip_frac } => {
                if !frac_ok(flip_frac) {
                    return Err(Error::Config("flip_frac must lie in [0,1]".into()));
                }
            }
            SiProtocol::SlowVarying {
                support_change_frac,
                amp_innovation_var,
                epochs,
            } => {
                if !frac_ok(support_change_frac) {
                    return Err(Error::Config(
                        "support_change_frac must lie in [0,1]".into(),
                    ));
                }
                if amp_innovation_var < 0.0 {
                    return Err(Error::Config("amp_innovation_var must be >= 0".into()));
                }
                if epochs == 0 {
                    return Err(Error::Config("epochs must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Raw side-information material, before it is wrapped in a model for a
/// particular reconstruction algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum SiData {
    None,
    /// Noisy amplitude copy plus the ±1 encoding of its pre-noise support
    /// (what a support-only algorithm consumes; additive noise does not
    /// change that knowledge).
    Amplitude {
        x_tilde: Vec<f64>,
        support: Vec<i8>,
    },
    Support { labels: Vec<i8> },
}

/// One epoch of a slow-varying sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub x_true: Vec<f64>,
    pub y: Vec<i8>,
}

/// Everything one Monte-Carlo trial consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub x_true: Vec<f64>,
    pub a: Mat,
    pub y: Vec<i8>,
    pub si: SiData,
    /// Present only for the slow-varying protocol; `epochs[0]` repeats
    /// (`x_true`, `y`).
    pub epochs: Option<Vec<Epoch>>,
}

/// Inverse-cdf sample of the Laplacian density `exp(-|w|/(2 v_s))/(4 v_s)`.
pub fn laplace_draw(v_s: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -2.0 * v_s * u.abs().mul_add(-2.0, 1.0).ln() * u.signum()
}

/// Unit noise draw for an SI noise kind; scale with [`si_noise_scale`] to
/// reach a target level. Keeping draw and scale separate lets a sweep over
/// the noise level reuse one set of randomness (common random numbers).
pub fn si_unit_noise(kind: SiNoiseKind, rng: &mut impl Rng) -> f64 {
    match kind {
        SiNoiseKind::Gaussian => rng.sample(StandardNormal),
        SiNoiseKind::Laplacian => laplace_draw(1.0, rng),
    }
}

/// Multiplier taking a unit draw of `kind` to noise level `add_noise_var`
/// (`√var` for Gaussian variance, `v_s` for the Laplacian parameter).
pub fn si_noise_scale(kind: SiNoiseKind, add_noise_var: f64) -> f64 {
    match kind {
        SiNoiseKind::Gaussian => add_noise_var.sqrt(),
        SiNoiseKind::Laplacian => add_noise_var,
    }
}

/// Draws `count` distinct indices from `pool` (partial Fisher-Yates).
fn choose_indices(pool: &mut Vec<usize>, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let count = count.min(pool.len());
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(k));
    }
    picked
}

/// Support perturbation step of the amplitude-SI protocol: moves a fraction
/// of the active indices to fresh locations with amplitudes redrawn from the
/// prior slab. Returns the perturbed signal and its ±1 support encoding.
pub fn gen_support_perturbed(
    x: &[f64],
    support_error_frac: f64,
    prior: &SignalPrior,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<i8>) {
    let mut base = x.to_vec();
    let active: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let n_move = (support_error_frac * active.len() as f64).round() as usize;
    if n_move > 0 {
        let mut from_pool = active.clone();
        let moved = choose_indices(&mut from_pool, n_move, rng);
        let mut inactive: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 0.0).collect();
        let fresh = choose_indices(&mut inactive, n_move, rng);
        for &i in &moved {
            base[i] = 0.0;
        }
        for &i in &fresh {
            let g: f64 = rng.sample(StandardNormal);
            base[i] = prior.v_x().sqrt() * g;
        }
    }
    let support = support_labels(&base);
    (base, support)
}

/// Amplitude-SI generator: support perturbation then additive noise.
/// Returns the noisy copy and the pre-noise support encoding.
pub fn gen_amplitude_si(
    x: &[f64],
    support_error_frac: f64,
    add_noise_var: f64,
    noise_kind: SiNoiseKind,
    prior: &SignalPrior,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<i8>) {
    let (mut base, support) = gen_support_perturbed(x, support_error_frac, prior, rng);
    if add_noise_var > 0.0 {
        let scale = si_noise_scale(noise_kind, add_noise_var);
        for b in base.iter_mut() {
            *b += scale * si_unit_noise(noise_kind, rng);
        }
    }
    (base, support)
}

/// Materializes the protocol's side-information for a signal.
pub fn gen_side_info(
    x: &[f64],
    protocol: &SiProtocol,
    prior: &SignalPrior,
    rng: &mut impl Rng,
) -> Result<SiData> {
    match *protocol {
        SiProtocol::NoneSi | SiProtocol::SlowVarying { .. } => Ok(SiData::None),
        SiProtocol::NoisyAmplitude {
            support_error_frac,
            add_noise_var,
            noise_kind,
        } => {
            let (x_tilde, support) =
                gen_amplitude_si(x, support_error_frac, add_noise_var, noise_kind, prior, rng);
            Ok(SiData::Amplitude { x_tilde, support })
        }
        SiProtocol::NoisySupport { flip_frac } => {
            let labels = support_labels(x)
                .into_iter()
                .map(|l| {
                    if rng.random::<f64>() < flip_frac {
                        -l
                    } else {
                        l
                    }
                })
                .collect();
            Ok(SiData::Support { labels })
        }
    }
}

/// Wraps raw SI material in the model a given reconstruction uses.
pub fn si_as_laplacian(data: &SiData, v_s: f64) -> Result<SideInfo> {
    match data {
        SiData::Amplitude { x_tilde, .. } => Ok(SideInfo::AmplitudeLaplacian(AmplitudeSi::new(
            x_tilde.clone(),
            v_s,
        )?)),
        _ => Err(Error::Usage("amplitude side info required".into())),
    }
}

pub fn si_as_gaussian(data: &SiData, v_s: f64) -> Result<SideInfo> {
    match data {
        SiData::Amplitude { x_tilde, .. } => Ok(SideInfo::AmplitudeGaussian(AmplitudeSi::new(
            x_tilde.clone(),
            v_s,
        )?)),
        _ => Err(Error::Usage("amplitude side info required".into())),
    }
}

pub fn si_as_support(data: &SiData, beta: f64) -> Result<SideInfo> {
    let labels = match data {
        SiData::Amplitude { support, .. } => support.clone(),
        SiData::Support { labels } => labels.clone(),
        SiData::None => return Err(Error::Usage("support side info required".into())),
    };
    Ok(SideInfo::Support(SupportSi::new(labels, beta)?))
}

/// Next signal of a slow-varying sequence: `⌈(1-frac)·K⌉` of the `K` active
/// indices survive (with a Gaussian amplitude innovation), the rest move to
/// fresh indices redrawn from the slab. The support size stays `K` exactly.
pub fn evolve_signal(
    x: &[f64],
    support_change_frac: f64,
    amp_innovation_var: f64,
    prior: &SignalPrior,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let active: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let k = active.len();
    let n_keep = ((1.0 - support_change_frac) * k as f64).ceil() as usize;
    let n_change = k - n_keep.min(k);

    let mut pool = active.clone();
    let dropped = choose_indices(&mut pool, n_change, rng);
    let kept = pool;
    let mut inactive: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 0.0).collect();
    let fresh = choose_indices(&mut inactive, n_change, rng);

    let mut next = vec![0.0; x.len()];
    for &i in &kept {
        let g: f64 = rng.sample(StandardNormal);
        next[i] = x[i] + amp_innovation_var.sqrt() * g;
    }
    for &i in &fresh {
        let g: f64 = rng.sample(StandardNormal);
        next[i] = prior.v_x().sqrt() * g;
    }
    let _ = dropped;
    next
}

/// Generates one trial of a scenario from its own RNG stream.
pub fn gen_trial(sc: &ScenarioConfig, trial_index: u64) -> Result<TrialData> {
    sc.validate()?;
    let mut rng = stream_rng(sc.seed, &[0xda7a, trial_index]);
    let x = gen_signal(&sc.prior, sc.n, &mut rng);
    let a = gen_matrix(sc.m, sc.n, &mut rng);
    let y = gen_measurements(&x, &a, &sc.ch, &mut rng)?;
    let si = gen_side_info(&x, &sc.si_protocol, &sc.prior, &mut rng)?;

    let epochs = if let SiProtocol::SlowVarying {
        support_change_frac,
        amp_innovation_var,
        epochs,
    } = sc.si_protocol
    {
        let mut seq = Vec::with_capacity(epochs);
        seq.push(Epoch {
            x_true: x.clone(),
            y: y.clone(),
        });
        let mut current = x.clone();
        for _ in 1..epochs {
            current = evolve_signal(
                &current,
                support_change_frac,
                amp_innovation_var,
                &sc.prior,
                &mut rng,
            );
            let ye = gen_measurements(&current, &a, &sc.ch, &mut rng)?;
            seq.push(Epoch {
                x_true: current.clone(),
                y: ye,
            });
        }
        Some(seq)
    } else {
        None
    };

    Ok(TrialData {
        x_true: x,
        a,
        y,
        si,
        epochs,
    })
}

/// Normalized mean square error: `‖x/‖x‖ - x̂/‖x̂‖‖₂`, the distance between
/// the unit-normalized vectors (scale-invariant, range [0, 2]).
///
/// `x̂ = 0` is reported as the convention value 1 with the flag set;
/// `x = 0` leaves the metric undefined and is an error.
pub fn nmse_checked(x_true: &[f64], x_hat: &[f64]) -> Result<(f64, bool)> {
    ensure_same_len(x_true.len(), x_hat.len(), "nmse")?;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nt = norm(x_true);
    if nt == 0.0 {
        return Err(Error::domain("nmse undefined for an all-zero true signal"));
    }
    let nh = norm(x_hat);
    if nh == 0.0 {
        return Ok((1.0, true));
    }
    let d = x_true
        .iter()
        .zip(x_hat)
        .map(|(a, b)| {
            let e = a / nt - b / nh;
            e * e
        })
        .sum::<f64>()
        .sqrt();
    Ok((d, false))
}

/// [`nmse_checked`] without the zero-estimate flag.
pub fn nmse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    nmse_checked(x_true, x_hat).map(|(v, _)| v)
}
