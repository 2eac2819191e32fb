//! Monte-Carlo experiment runner: paired-trial NMSE sweeps over the channel
//! and side-information parameters, slow-varying sequential reconstruction,
//! deterministic aggregation and CSV output.
//!
//! Pairing is strict in two directions. Within a trial, every algorithm sees
//! the same `(x, A, y, SI)` data (verified by data digests). Across sweep
//! values, a trial reuses one set of base randomness and only the swept
//! parameter's deterministic materialization changes (first `M` rows of a
//! shared matrix, flip indicators thresholded against the shared uniforms,
//! shared unit SI noise rescaled), so sweep comparisons are common-random-
//! number paired as well.
//!
//! Aggregation reduces trial outcomes in `(sweep value, trial index)` order,
//! so the number of worker threads never changes the output.

use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::gamp::{run_noisy1bg, run_with_si, GampConfig, GampResult};
use crate::mat::Mat;
use crate::priors::{AmplitudeSi, SideInfo, SignalPrior, SupportSi};
use crate::sim::{
    self, gen_measurements_from_noise, gen_signal, gen_support_perturbed, nmse_checked,
    si_noise_scale, si_unit_noise, stream_rng, support_labels, ScenarioConfig, SiData,
    SiNoiseKind, SiProtocol,
};

/// Threshold (relative to the largest amplitude) above which a previous
/// estimate's coefficient counts as active when deriving support SI.
pub const SUPPORT_THRESHOLD_REL: f64 = 1e-3;

const DATA_STREAM: u64 = 0xda7a;

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// GAMP with the full noisy channel model.
    Noisy1bG,
    /// Amplitude SI, Laplacian noise model.
    LaplacianSi,
    /// Amplitude SI, Gaussian noise model.
    GaussianSi,
    /// ±1 support labels as SI.
    SupportSi,
    /// Baseline: GAMP that assumes a noiseless channel (v = 0, γ = 1) while
    /// the data is generated with the true noisy channel.
    SignGamp,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Noisy1bG => "noisy1bg",
            Algorithm::LaplacianSi => "laplacian_si",
            Algorithm::GaussianSi => "gaussian_si",
            Algorithm::SupportSi => "support_si",
            Algorithm::SignGamp => "sign_gamp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "noisy1bg" => Algorithm::Noisy1bG,
            "laplacian_si" => Algorithm::LaplacianSi,
            "gaussian_si" => Algorithm::GaussianSi,
            "support_si" => Algorithm::SupportSi,
            "sign_gamp" => Algorithm::SignGamp,
            _ => return Err(Error::Config(format!("unknown algorithm '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    None,
    /// Sign-flip probability `1 - γ`.
    FlipProb,
    /// Number of measurements `M`.
    Measurements,
    /// Additive SI noise level of the amplitude protocol.
    SiNoiseVar,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::None => "none",
            SweepParam::FlipProb => "flip_prob",
            SweepParam::Measurements => "measurements",
            SweepParam::SiNoiseVar => "si_noise_var",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => SweepParam::None,
            "flip_prob" => SweepParam::FlipProb,
            "measurements" => SweepParam::Measurements,
            "si_noise_var" => SweepParam::SiNoiseVar,
            _ => return Err(Error::Config(format!("unknown sweep_param '{s}'"))),
        })
    }
}

/// Full description of one Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<Algorithm>,
    pub sweep: SweepParam,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub gamp: GampConfig,
    /// Initial `v_s` handed to the amplitude-SI algorithms (EM refines it).
    pub initial_vs: f64,
    /// Initial `β` handed to the support-SI algorithm (EM refines it).
    pub initial_beta: f64,
    /// When false the runtime column is reported as zero, which makes the
    /// CSV byte-reproducible (wall-clock time never is).
    pub report_runtime: bool,
    /// Reconstruct a slow-varying sequence epoch by epoch instead of
    /// sweeping a parameter.
    pub sequential: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must not be empty".into()));
        }
        if !(self.initial_vs.is_finite() && self.initial_vs > 0.0) {
            return Err(Error::Config("initial_vs must be > 0".into()));
        }
        if !(self.initial_beta > 0.5 && self.initial_beta <= 1.0) {
            return Err(Error::Config("initial_beta must lie in (0.5, 1]".into()));
        }

        let slow = matches!(self.scenario.si_protocol, SiProtocol::SlowVarying { .. });
        if self.sequential {
            if !slow {
                return Err(Error::Config(
                    "sequential experiments need the slow_varying protocol".into(),
                ));
            }
            if self.sweep != SweepParam::None {
                return Err(Error::Config(
                    "sequential experiments are keyed by epoch; sweep_param must be none".into(),
                ));
            }
            if self.algorithms.contains(&Algorithm::SignGamp) {
                return Err(Error::Config(
                    "sign_gamp is not defined for sequential experiments".into(),
                ));
            }
        } else {
            if slow {
                return Err(Error::Config(
                    "slow_varying protocol requires sequential = true".into(),
                ));
            }
            for algo in &self.algorithms {
                match algo {
                    Algorithm::LaplacianSi | Algorithm::GaussianSi
                        if !matches!(
                            self.scenario.si_protocol,
                            SiProtocol::NoisyAmplitude { .. }
                        ) =>
                    {
                        return Err(Error::Config(format!(
                            "{} needs the noisy_amplitude protocol",
                            algo.as_str()
                        )));
                    }
                    Algorithm::SupportSi
                        if !matches!(
                            self.scenario.si_protocol,
                            SiProtocol::NoisyAmplitude { .. } | SiProtocol::NoisySupport { .. }
                        ) =>
                    {
                        return Err(Error::Config(
                            "support_si needs an SI-bearing protocol".into(),
                        ));
                    }
                    _ => {}
                }
            }
        }

        match self.sweep {
            SweepParam::None => {
                if !self.sweep_values.is_empty() {
                    return Err(Error::Config(
                        "sweep_values must be empty when sweep_param is none".into(),
                    ));
                }
            }
            SweepParam::FlipProb => {
                if self.sweep_values.is_empty()
                    || self.sweep_values.iter().any(|v| !(0.0..0.5).contains(v))
                {
                    return Err(Error::Config(
                        "flip_prob sweep values must lie in [0, 0.5)".into(),
                    ));
                }
            }
            SweepParam::Measurements => {
                if self.sweep_values.is_empty()
                    || self
                        .sweep_values
                        .iter()
                        .any(|v| *v < 1.0 || v.fract() != 0.0)
                {
                    return Err(Error::Config(
                        "measurement sweep values must be positive integers".into(),
                    ));
                }
            }
            SweepParam::SiNoiseVar => {
                if !matches!(self.scenario.si_protocol, SiProtocol::NoisyAmplitude { .. }) {
                    return Err(Error::Config(
                        "si_noise_var sweep needs the noisy_amplitude protocol".into(),
                    ));
                }
                if self.sweep_values.is_empty() || self.sweep_values.iter().any(|v| *v < 0.0) {
                    return Err(Error::Config(
                        "si_noise_var sweep values must be >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(s).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let cfg = file.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

// --- TOML schema (unknown keys rejected). ---------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: ScenarioSection,
    experiment: ExperimentSection,
    #[serde(default)]
    gamp: GampSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    n: usize,
    m: usize,
    lambda: f64,
    v_x: f64,
    noise_var: f64,
    gamma: f64,
    seed: u64,
    si: Option<SiSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SiSection {
    protocol: String,
    support_error_frac: Option<f64>,
    add_noise_var: Option<f64>,
    noise_kind: Option<String>,
    flip_frac: Option<f64>,
    support_change_frac: Option<f64>,
    amp_innovation_var: Option<f64>,
    epochs: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    algorithms: Vec<String>,
    #[serde(default = "default_sweep")]
    sweep_param: String,
    #[serde(default)]
    sweep_values: Vec<f64>,
    trials: usize,
    #[serde(default)]
    sequential: bool,
    #[serde(default = "default_initial_vs")]
    initial_vs: f64,
    #[serde(default = "default_initial_beta")]
    initial_beta: f64,
    #[serde(default = "default_true")]
    report_runtime: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GampSection {
    max_inner_iters: Option<usize>,
    max_outer_iters: Option<usize>,
    damping: Option<f64>,
    tau_floor: Option<f64>,
    convergence_tol: Option<f64>,
    em_enabled: Option<bool>,
    warm_start: Option<bool>,
}

fn default_sweep() -> String {
    "none".into()
}
fn default_initial_vs() -> f64 {
    1.0
}
fn default_initial_beta() -> f64 {
    0.75
}
fn default_true() -> bool {
    true
}

impl ConfigFile {
    fn into_config(self) -> Result<ExperimentConfig> {
        let si_protocol = match self.scenario.si {
            None => SiProtocol::NoneSi,
            Some(si) => match si.protocol.as_str() {
                "none" => SiProtocol::NoneSi,
                "noisy_amplitude" => SiProtocol::NoisyAmplitude {
                    support_error_frac: si.support_error_frac.unwrap_or(0.0),
                    add_noise_var: si.add_noise_var.unwrap_or(0.0),
                    noise_kind: match si.noise_kind.as_deref().unwrap_or("gaussian") {
                        "gaussian" => SiNoiseKind::Gaussian,
                        "laplacian" => SiNoiseKind::Laplacian,
                        other => {
                            return Err(Error::Config(format!("unknown noise_kind '{other}'")))
                        }
                    },
                },
                "noisy_support" => SiProtocol::NoisySupport {
                    flip_frac: si.flip_frac.unwrap_or(0.0),
                },
                "slow_varying" => SiProtocol::SlowVarying {
                    support_change_frac: si.support_change_frac.unwrap_or(0.1),
                    amp_innovation_var: si.amp_innovation_var.unwrap_or(0.1),
                    epochs: si.epochs.unwrap_or(10),
                },
                other => return Err(Error::Config(format!("unknown protocol '{other}'"))),
            },
        };
        let scenario = ScenarioConfig {
            n: self.scenario.n,
            m: self.scenario.m,
            prior: SignalPrior::new(self.scenario.lambda, self.scenario.v_x)
                .map_err(|e| Error::Config(e.to_string()))?,
            ch: ChannelParams::new(self.scenario.noise_var, self.scenario.gamma)
                .map_err(|e| Error::Config(e.to_string()))?,
            si_protocol,
            seed: self.scenario.seed,
        };
        let d = GampConfig::default();
        let gamp = GampConfig {
            max_inner_iters: self.gamp.max_inner_iters.unwrap_or(d.max_inner_iters),
            max_outer_iters: self.gamp.max_outer_iters.unwrap_or(d.max_outer_iters),
            damping: self.gamp.damping.unwrap_or(d.damping),
            tau_floor: self.gamp.tau_floor.unwrap_or(d.tau_floor),
            convergence_tol: self.gamp.convergence_tol.unwrap_or(d.convergence_tol),
            em_enabled: self.gamp.em_enabled.unwrap_or(d.em_enabled),
            warm_start: self.gamp.warm_start.unwrap_or(d.warm_start),
        };
        Ok(ExperimentConfig {
            scenario,
            algorithms: self
                .experiment
                .algorithms
                .iter()
                .map(|s| Algorithm::parse(s))
                .collect::<Result<_>>()?,
            sweep: SweepParam::parse(&self.experiment.sweep_param)?,
            sweep_values: self.experiment.sweep_values,
            trials: self.experiment.trials,
            gamp,
            initial_vs: self.experiment.initial_vs,
            initial_beta: self.experiment.initial_beta,
            report_runtime: self.experiment.report_runtime,
            sequential: self.experiment.sequential,
        })
    }
}

// ---------------------------------------------------------------------------
// Results.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    /// Successful trials aggregated in this row.
    pub trials: usize,
    pub mean_nmse: f64,
    pub std_err: f64,
    pub mean_runtime_ms: f64,
    pub mean_estimated_param: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// 17 significant decimal digits, enough to round-trip any f64.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl ResultTable {
    pub const CSV_HEADER: &'static str = "sweep_param,sweep_value,algorithm,trials,mean_nmse,std_err,mean_runtime_ms,mean_estimated_param,failures";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let est = r.mean_estimated_param.map(fmt17).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.sweep_param,
                fmt17(r.sweep_value),
                r.algorithm.as_str(),
                r.trials,
                fmt17(r.mean_nmse),
                fmt17(r.std_err),
                fmt17(r.mean_runtime_ms),
                est,
                r.failures
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn row(&self, sweep_value: f64, algorithm: Algorithm) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.algorithm == algorithm)
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }
}

/// Two-pass sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-pass (Welford) mean and standard error, the independent cross-check
/// of [`mean_and_stderr`].
pub fn mean_and_stderr_streaming(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let n = xs.len() as f64;
    ((mean), (m2 / (n - 1.0) / n).sqrt())
}

// ---------------------------------------------------------------------------
// Per-trial execution.
// ---------------------------------------------------------------------------

/// Outcome of one algorithm on one materialized trial.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoOutcome {
    pub algorithm: Algorithm,
    /// NMSE on success; `None` records a failure row contribution.
    pub nmse: Option<f64>,
    pub zero_estimate: bool,
    pub runtime_ms: f64,
    pub estimated_param: Option<f64>,
    /// Digest over the `(A, y)` data the algorithm consumed.
    pub digest_ay: u64,
    /// Digest over the SI payload it consumed, when any.
    pub digest_si: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub sweep_idx: usize,
    pub trial: usize,
    pub algos: Vec<AlgoOutcome>,
}

/// Sweep-independent randomness of one trial.
struct TrialBase {
    x: Vec<f64>,
    a: Mat,
    meas_gauss: Vec<f64>,
    flip_u: Vec<f64>,
    si: SiBase,
}

enum SiBase {
    None,
    Amplitude {
        base: Vec<f64>,
        support: Vec<i8>,
        unit_noise: Vec<f64>,
        kind: SiNoiseKind,
    },
    Support {
        labels_true: Vec<i8>,
        flip_u: Vec<f64>,
    },
}

/// Everything one algorithm invocation needs for one (sweep value, trial).
pub struct MaterializedTrial {
    pub x: Vec<f64>,
    pub a: Mat,
    pub y: Vec<i8>,
    pub ch: ChannelParams,
    pub si: SiData,
}

fn make_trial_base(sc: &ScenarioConfig, m_max: usize, trial: usize) -> Result<TrialBase> {
    let mut rng = stream_rng(sc.seed, &[DATA_STREAM, trial as u64]);
    let x = gen_signal(&sc.prior, sc.n, &mut rng);
    let a = sim::gen_matrix(m_max, sc.n, &mut rng);
    let meas_gauss: Vec<f64> = (0..m_max)
        .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
        .collect();
    let flip_u: Vec<f64> = (0..m_max).map(|_| rand::Rng::random(&mut rng)).collect();
    let si = match sc.si_protocol {
        SiProtocol::NoneSi => SiBase::None,
        SiProtocol::NoisyAmplitude {
            support_error_frac,
            noise_kind,
            ..
        } => {
            let (base, support) = gen_support_perturbed(&x, support_error_frac, &sc.prior, &mut rng);
            let unit_noise: Vec<f64> = (0..sc.n)
                .map(|_| si_unit_noise(noise_kind, &mut rng))
                .collect();
            SiBase::Amplitude {
                base,
                support,
                unit_noise,
                kind: noise_kind,
            }
        }
        SiProtocol::NoisySupport { .. } => SiBase::Support {
            labels_true: support_labels(&x),
            flip_u: (0..sc.n).map(|_| rand::Rng::random(&mut rng)).collect(),
        },
        SiProtocol::SlowVarying { .. } => {
            return Err(Error::Config(
                "slow_varying protocol is handled by run_sequential_experiment".into(),
            ))
        }
    };
    Ok(TrialBase {
        x,
        a,
        meas_gauss,
        flip_u,
        si,
    })
}

fn materialize(
    cfg: &ExperimentConfig,
    base: &TrialBase,
    sweep_value: Option<f64>,
) -> Result<MaterializedTrial> {
    let sc = &cfg.scenario;
    let mut gamma = sc.ch.gamma();
    let mut m_eff = sc.m;
    let mut si_var = match sc.si_protocol {
        SiProtocol::NoisyAmplitude { add_noise_var, .. } => add_noise_var,
        _ => 0.0,
    };
    if let Some(sv) = sweep_value {
        match cfg.sweep {
            SweepParam::None => {}
            SweepParam::FlipProb => gamma = 1.0 - sv,
            SweepParam::Measurements => m_eff = sv as usize,
            SweepParam::SiNoiseVar => si_var = sv,
        }
    }
    let ch = ChannelParams::new(sc.ch.noise_var(), gamma)?;
    let a = base.a.top_rows(m_eff)?;
    let y = gen_measurements_from_noise(
        &base.x,
        &a,
        &ch,
        &base.meas_gauss[..m_eff],
        &base.flip_u[..m_eff],
    )?;
    let si = match &base.si {
        SiBase::None => SiData::None,
        SiBase::Amplitude {
            base: b,
            support,
            unit_noise,
            kind,
        } => {
            let scale = si_noise_scale(*kind, si_var);
            let x_tilde: Vec<f64> = b
                .iter()
                .zip(unit_noise)
                .map(|(v, u)| v + scale * u)
                .collect();
            SiData::Amplitude {
                x_tilde,
                support: support.clone(),
            }
        }
        SiBase::Support { labels_true, flip_u } => {
            let flip_frac = match sc.si_protocol {
                SiProtocol::NoisySupport { flip_frac } => flip_frac,
                _ => 0.0,
            };
            SiData::Support {
                labels: labels_true
                    .iter()
                    .zip(flip_u)
                    .map(|(&l, &u)| if u < flip_frac { -l } else { l })
                    .collect(),
            }
        }
    };
    Ok(MaterializedTrial {
        x: base.x.clone(),
        a,
        y,
        ch,
        si,
    })
}

/// Materializes the data one `(sweep value, trial)` cell consumes; exposed
/// so tests can recompose a table entry from a direct engine call.
pub fn trial_inputs(
    cfg: &ExperimentConfig,
    sweep_value: Option<f64>,
    trial: usize,
) -> Result<MaterializedTrial> {
    let m_max = sweep_m_max(cfg);
    let base = make_trial_base(&cfg.scenario, m_max, trial)?;
    materialize(cfg, &base, sweep_value)
}

fn sweep_m_max(cfg: &ExperimentConfig) -> usize {
    if cfg.sweep == SweepParam::Measurements {
        cfg.sweep_values
            .iter()
            .fold(0.0f64, |acc, v| acc.max(*v)) as usize
    } else {
        cfg.scenario.m
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn digest_ay(a: &Mat, y: &[i8]) -> u64 {
    let bytes = a
        .data()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .chain(y.iter().map(|&s| s as u8));
    fnv1a(bytes)
}

fn digest_si(si: &SideInfo) -> Option<u64> {
    match si {
        SideInfo::None => None,
        SideInfo::AmplitudeLaplacian(a) | SideInfo::AmplitudeGaussian(a) => {
            Some(fnv1a(a.x_tilde.iter().flat_map(|v| v.to_le_bytes())))
        }
        SideInfo::Support(s) => Some(fnv1a(s.labels.iter().map(|&l| l as u8))),
    }
}

/// Builds the [`SideInfo`] an algorithm consumes from raw trial SI data.
fn side_info_for(algo: Algorithm, cfg: &ExperimentConfig, si: &SiData) -> Result<SideInfo> {
    match algo {
        Algorithm::Noisy1bG | Algorithm::SignGamp => Ok(SideInfo::None),
        Algorithm::LaplacianSi => sim::si_as_laplacian(si, cfg.initial_vs),
        Algorithm::GaussianSi => sim::si_as_gaussian(si, cfg.initial_vs),
        Algorithm::SupportSi => sim::si_as_support(si, cfg.initial_beta),
    }
}

fn run_algorithm(
    algo: Algorithm,
    cfg: &ExperimentConfig,
    mt: &MaterializedTrial,
) -> AlgoOutcome {
    let side_info = match side_info_for(algo, cfg, &mt.si) {
        Ok(si) => si,
        Err(_) => {
            return AlgoOutcome {
                algorithm: algo,
                nmse: None,
                zero_estimate: false,
                runtime_ms: 0.0,
                estimated_param: None,
                digest_ay: digest_ay(&mt.a, &mt.y),
                digest_si: None,
            }
        }
    };
    let started = cfg.report_runtime.then(Instant::now);
    let result: Result<GampResult> = match algo {
        Algorithm::Noisy1bG => run_noisy1bg(&mt.a, &mt.y, &cfg.scenario.prior, &mt.ch, &cfg.gamp),
        Algorithm::SignGamp => {
            let assumed = ChannelParams::new(0.0, 1.0).expect("valid baseline channel");
            run_noisy1bg(&mt.a, &mt.y, &cfg.scenario.prior, &assumed, &cfg.gamp)
        }
        Algorithm::LaplacianSi | Algorithm::GaussianSi | Algorithm::SupportSi => run_with_si(
            &mt.a,
            &mt.y,
            &cfg.scenario.prior,
            &mt.ch,
            &side_info,
            &cfg.gamp,
        ),
    };
    let runtime_ms = started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
    let (nmse, zero_estimate, estimated_param) = match result {
        Ok(res) => match nmse_checked(&mt.x, &res.x_hat) {
            Ok((v, flagged)) if v.is_finite() => (Some(v), flagged, res.estimated_param),
            _ => (None, false, res.estimated_param),
        },
        Err(_) => (None, false, None),
    };
    AlgoOutcome {
        algorithm: algo,
        nmse,
        zero_estimate,
        runtime_ms,
        estimated_param,
        digest_ay: digest_ay(&mt.a, &mt.y),
        digest_si: digest_si(&side_info),
    }
}

// ---------------------------------------------------------------------------
// Drivers.
// ---------------------------------------------------------------------------

/// Runs the configured sweep: for every sweep value × trial, generates the
/// paired trial data, runs every requested algorithm on identical data and
/// aggregates NMSE per (sweep value, algorithm). Deterministic for a given
/// master seed, independent of thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_experiment_detailed(cfg).map(|(t, _)| t)
}

/// [`run_experiment`] also returning the per-trial outcomes (used to verify
/// the paired-trial design).
pub fn run_experiment_detailed(
    cfg: &ExperimentConfig,
) -> Result<(ResultTable, Vec<TrialOutcome>)> {
    cfg.validate()?;
    if cfg.sequential {
        return Err(Error::Config(
            "sequential config: use run_sequential_experiment".into(),
        ));
    }
    let sweep_values: Vec<Option<f64>> = if cfg.sweep == SweepParam::None {
        vec![None]
    } else {
        cfg.sweep_values.iter().copied().map(Some).collect()
    };
    let m_max = sweep_m_max(cfg);

    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialOutcome>> {
            let base = make_trial_base(&cfg.scenario, m_max, trial)?;
            let mut per_sweep = Vec::with_capacity(sweep_values.len());
            for (sweep_idx, sv) in sweep_values.iter().enumerate() {
                let mt = materialize(cfg, &base, *sv)?;
                let algos = cfg
                    .algorithms
                    .iter()
                    .map(|&algo| run_algorithm(algo, cfg, &mt))
                    .collect();
                per_sweep.push(TrialOutcome {
                    sweep_idx,
                    trial,
                    algos,
                });
            }
            Ok(per_sweep)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let table = aggregate(cfg, &sweep_values, &outcomes);
    Ok((table, outcomes))
}

fn aggregate(
    cfg: &ExperimentConfig,
    sweep_values: &[Option<f64>],
    outcomes: &[TrialOutcome],
) -> ResultTable {
    let mut rows = Vec::new();
    for (sweep_idx, sv) in sweep_values.iter().enumerate() {
        for &algo in &cfg.algorithms {
            // Reduction ordered by (sweep value, trial index); `outcomes`
            // is already trial-major.
            let cell: Vec<&AlgoOutcome> = outcomes
                .iter()
                .filter(|o| o.sweep_idx == sweep_idx)
                .flat_map(|o| o.algos.iter().filter(|a| a.algorithm == algo))
                .collect();
            let nmses: Vec<f64> = cell.iter().filter_map(|a| a.nmse).collect();
            let failures = cell.len() - nmses.len();
            let (mean, se) = mean_and_stderr(&nmses);
            let runtimes: Vec<f64> = cell
                .iter()
                .filter(|a| a.nmse.is_some())
                .map(|a| a.runtime_ms)
                .collect();
            let params: Vec<f64> = cell.iter().filter_map(|a| a.estimated_param).collect();
            rows.push(ResultRow {
                sweep_param: cfg.sweep.as_str().to_string(),
                sweep_value: sv.unwrap_or(0.0),
                algorithm: algo,
                trials: nmses.len(),
                mean_nmse: mean,
                std_err: se,
                mean_runtime_ms: if runtimes.is_empty() {
                    0.0
                } else {
                    runtimes.iter().sum::<f64>() / runtimes.len() as f64
                },
                mean_estimated_param: if params.is_empty() {
                    None
                } else {
                    Some(params.iter().sum::<f64>() / params.len() as f64)
                },
                failures,
            });
        }
    }
    ResultTable { rows }
}

/// Derives ±1 support labels from a previous estimate by thresholding at
/// `SUPPORT_THRESHOLD_REL · max|x̂|`.
pub fn support_from_estimate(x_hat: &[f64]) -> Vec<i8> {
    let max = x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thr = SUPPORT_THRESHOLD_REL * max;
    x_hat
        .iter()
        .map(|&v| if max > 0.0 && v.abs() > thr { 1 } else { -1 })
        .collect()
}

/// Per-trial result grid of a sequential run: `nmse[epoch][algo_index]`.
#[derive(Debug, Clone)]
pub struct SequentialTrial {
    pub nmse: Vec<Vec<Option<f64>>>,
}

/// Sequential (slow-varying) experiment: epoch 0 is reconstructed without
/// SI; from epoch 1 on, every SI algorithm feeds its own previous-epoch
/// estimate back as side-information (amplitude SI directly, support SI by
/// thresholding). Rows are keyed by epoch index.
pub fn run_sequential_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_sequential_experiment_detailed(cfg).map(|(t, _)| t)
}

/// [`run_sequential_experiment`] also returning the per-trial NMSE grids,
/// which paired (within-trial) comparisons need.
pub fn run_sequential_experiment_detailed(
    cfg: &ExperimentConfig,
) -> Result<(ResultTable, Vec<SequentialTrial>)> {
    cfg.validate()?;
    if !cfg.sequential {
        return Err(Error::Config(
            "non-sequential config: use run_experiment".into(),
        ));
    }
    let epochs = match cfg.scenario.si_protocol {
        SiProtocol::SlowVarying { epochs, .. } => epochs,
        _ => unreachable!("validated above"),
    };

    struct SeqTrial {
        // nmse[epoch][algo_index]
        nmse: Vec<Vec<Option<f64>>>,
        runtime: Vec<Vec<f64>>,
        param: Vec<Vec<Option<f64>>>,
    }

    let per_trial: Vec<SeqTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<SeqTrial> {
            let data = sim::gen_trial(&cfg.scenario, trial as u64)?;
            let seq = data.epochs.as_ref().expect("slow-varying trial has epochs");
            let n_algos = cfg.algorithms.len();
            let mut nmse = vec![vec![None; n_algos]; epochs];
            let mut runtime = vec![vec![0.0; n_algos]; epochs];
            let mut param = vec![vec![None; n_algos]; epochs];

            // Epoch 0: one SI-free reconstruction shared by every chain.
            let started = cfg.report_runtime.then(Instant::now);
            let base = run_noisy1bg(
                &data.a,
                &seq[0].y,
                &cfg.scenario.prior,
                &cfg.scenario.ch,
                &cfg.gamp,
            );
            let base_ms = started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
            let base_est = match &base {
                Ok(res) => {
                    let v = nmse_checked(&seq[0].x_true, &res.x_hat)
                        .ok()
                        .map(|(v, _)| v)
                        .filter(|v| v.is_finite());
                    for ai in 0..n_algos {
                        nmse[0][ai] = v;
                        runtime[0][ai] = base_ms;
                    }
                    Some(res.x_hat.clone())
                }
                Err(_) => None,
            };

            for (ai, &algo) in cfg.algorithms.iter().enumerate() {
                let mut prev = base_est.clone();
                for (e, epoch) in seq.iter().enumerate().skip(1) {
                    let started = cfg.report_runtime.then(Instant::now);
                    let result: Result<GampResult> = match (algo, &prev) {
                        (Algorithm::Noisy1bG, _) | (_, None) => run_noisy1bg(
                            &data.a,
                            &epoch.y,
                            &cfg.scenario.prior,
                            &cfg.scenario.ch,
                            &cfg.gamp,
                        ),
                        (Algorithm::LaplacianSi, Some(p)) => {
                            let si = SideInfo::AmplitudeLaplacian(AmplitudeSi::new(
                                p.clone(),
                                cfg.initial_vs,
                            )?);
                            run_with_si(
                                &data.a,
                                &epoch.y,
                                &cfg.scenario.prior,
                                &cfg.scenario.ch,
                                &si,
                                &cfg.gamp,
                            )
                        }
                        (Algorithm::GaussianSi, Some(p)) => {
                            let si = SideInfo::AmplitudeGaussian(AmplitudeSi::new(
                                p.clone(),
                                cfg.initial_vs,
                            )?);
                            run_with_si(
                                &data.a,
                                &epoch.y,
                                &cfg.scenario.prior,
                                &cfg.scenario.ch,
                                &si,
                                &cfg.gamp,
                            )
                        }
                        (Algorithm::SupportSi, Some(p)) => {
                            let si = SideInfo::Support(SupportSi::new(
                                support_from_estimate(p),
                                cfg.initial_beta,
                            )?);
                            run_with_si(
                                &data.a,
                                &epoch.y,
                                &cfg.scenario.prior,
                                &cfg.scenario.ch,
                                &si,
                                &cfg.gamp,
                            )
                        }
                        (Algorithm::SignGamp, _) => unreachable!("rejected by validate"),
                    };
                    runtime[e][ai] = started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
                    if let Ok(res) = result {
                        nmse[e][ai] = nmse_checked(&epoch.x_true, &res.x_hat)
                            .ok()
                            .map(|(v, _)| v)
                            .filter(|v| v.is_finite());
                        param[e][ai] = res.estimated_param;
                        prev = Some(res.x_hat);
                    }
                }
            }
            Ok(SeqTrial {
                nmse,
                runtime,
                param,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let detailed: Vec<SequentialTrial> = per_trial
        .iter()
        .map(|t| SequentialTrial {
            nmse: t.nmse.clone(),
        })
        .collect();

    let mut rows = Vec::new();
    for e in 0..epochs {
        for (ai, &algo) in cfg.algorithms.iter().enumerate() {
            let nmses: Vec<f64> = per_trial.iter().filter_map(|t| t.nmse[e][ai]).collect();
            let failures = cfg.trials - nmses.len();
            let (mean, se) = mean_and_stderr(&nmses);
            let runtimes: Vec<f64> = per_trial
                .iter()
                .filter(|t| t.nmse[e][ai].is_some())
                .map(|t| t.runtime[e][ai])
                .collect();
            let params: Vec<f64> = per_trial.iter().filter_map(|t| t.param[e][ai]).collect();
            rows.push(ResultRow {
                sweep_param: "epoch".into(),
                sweep_value: e as f64,
                algorithm: algo,
                trials: nmses.len(),
                mean_nmse: mean,
                std_err: se,
                mean_runtime_ms: if runtimes.is_empty() {
                    0.0
                } else {
                    runtimes.iter().sum::<f64>() / runtimes.len() as f64
                },
                mean_estimated_param: if params.is_empty() {
                    None
                } else {
                    Some(params.iter().sum::<f64>() / params.len() as f64)
                },
                failures,
            });
        }
    }
    Ok((ResultTable { rows }, detailed))
}

/// Dispatches on `cfg.sequential`.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.sequential {
        run_sequential_experiment(cfg)
    } else {
        run_experiment(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioConfig {
                n: 16,
                m: 48,
                prior: SignalPrior::new(0.2, 5.5).unwrap(),
                ch: ChannelParams::new(0.15, 0.9).unwrap(),
                si_protocol: SiProtocol::NoisyAmplitude {
                    support_error_frac: 0.1,
                    add_noise_var: 0.15,
                    noise_kind: SiNoiseKind::Gaussian,
                },
                seed: 7,
            },
            algorithms: vec![
                Algorithm::Noisy1bG,
                Algorithm::LaplacianSi,
                Algorithm::GaussianSi,
                Algorithm::SupportSi,
            ],
            sweep: SweepParam::None,
            sweep_values: vec![],
            trials: 3,
            gamp: GampConfig {
                max_inner_iters: 10,
                max_outer_iters: 3,
                ..Default::default()
            },
            initial_vs: 1.0,
            initial_beta: 0.75,
            report_runtime: false,
            sequential: false,
        }
    }

    #[test]
    fn stats_cross_check() {
        let xs = [0.3, 1.7, -0.2, 0.9, 2.4, 0.05];
        let (m1, s1) = mean_and_stderr(&xs);
        let (m2, s2) = mean_and_stderr_streaming(&xs);
        assert!((m1 - m2).abs() < 1e-12);
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn deterministic_csv_and_paired_digests() {
        let cfg = tiny_config();
        let (t1, outcomes) = run_experiment_detailed(&cfg).unwrap();
        let (t2, _) = run_experiment_detailed(&cfg).unwrap();
        assert_eq!(t1.to_csv(), t2.to_csv());

        for o in &outcomes {
            // Identical (A, y) for every algorithm of a trial.
            let first = o.algos[0].digest_ay;
            assert!(o.algos.iter().all(|a| a.digest_ay == first));
            // Identical amplitude payload for the two amplitude-SI models.
            let lap = o
                .algos
                .iter()
                .find(|a| a.algorithm == Algorithm::LaplacianSi)
                .unwrap();
            let gau = o
                .algos
                .iter()
                .find(|a| a.algorithm == Algorithm::GaussianSi)
                .unwrap();
            assert_eq!(lap.digest_si, gau.digest_si);
        }
    }

    #[test]
    fn single_trial_row_matches_direct_composition() {
        let mut cfg = tiny_config();
        cfg.trials = 1;
        cfg.algorithms = vec![Algorithm::Noisy1bG];
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);

        let mt = trial_inputs(&cfg, None, 0).unwrap();
        let res = run_noisy1bg(&mt.a, &mt.y, &cfg.scenario.prior, &mt.ch, &cfg.gamp).unwrap();
        let direct = sim::nmse(&mt.x, &res.x_hat).unwrap();
        assert_eq!(table.rows[0].mean_nmse, direct);
        assert_eq!(table.rows[0].trials, 1);
        assert_eq!(table.rows[0].failures, 0);
    }

    #[test]
    fn config_validation_rejects_bad_combos() {
        let mut cfg = tiny_config();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.sweep = SweepParam::FlipProb;
        cfg.sweep_values = vec![0.6];
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.scenario.si_protocol = SiProtocol::NoneSi;
        assert!(cfg.validate().is_err()); // SI algorithms without SI data

        let mut cfg = tiny_config();
        cfg.sequential = true;
        assert!(cfg.validate().is_err()); // not slow-varying
    }

    #[test]
    fn toml_round_trip_and_unknown_key_rejection() {
        let good = r#"
            [scenario]
            n = 16
            m = 48
            lambda = 0.2
            v_x = 5.5
            noise_var = 0.15
            gamma = 0.9
            seed = 7

            [scenario.si]
            protocol = "noisy_amplitude"
            support_error_frac = 0.1
            add_noise_var = 0.15
            noise_kind = "gaussian"

            [experiment]
            algorithms = ["noisy1bg", "laplacian_si"]
            sweep_param = "flip_prob"
            sweep_values = [0.05, 0.15]
            trials = 2
            report_runtime = false

            [gamp]
            max_inner_iters = 8
            max_outer_iters = 2
        "#;
        let cfg = ExperimentConfig::from_toml_str(good).unwrap();
        assert_eq!(cfg.sweep, SweepParam::FlipProb);
        assert_eq!(cfg.gamp.max_inner_iters, 8);
        assert!(!cfg.report_runtime);

        let bad = good.replace("trials = 2", "trials = 2\nunknown_key = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn undefined_nmse_becomes_failure_row_not_abort() {
        // λ small enough that most trials draw an all-zero signal, for
        // which the metric is undefined; the sweep must keep going and
        // count failures.
        let mut cfg = tiny_config();
        cfg.scenario.prior = SignalPrior::new(1e-9, 5.5).unwrap();
        cfg.scenario.si_protocol = SiProtocol::NoneSi;
        cfg.algorithms = vec![Algorithm::Noisy1bG];
        cfg.trials = 4;
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].failures, 4);
        assert_eq!(table.rows[0].trials, 0);
        assert!(table.rows[0].mean_nmse.is_nan());
        let csv = table.to_csv();
        assert!(csv.lines().nth(1).unwrap().contains("noisy1bg"));
    }

    #[test]
    fn csv_shape() {
        let mut cfg = tiny_config();
        cfg.algorithms = vec![Algorithm::Noisy1bG, Algorithm::SupportSi];
        let table = run_experiment(&cfg).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), ResultTable::CSV_HEADER);
        assert_eq!(lines.count(), 2);
        assert!(csv.ends_with('\n'));
        assert!(!csv.contains('\r'));
    }
}
