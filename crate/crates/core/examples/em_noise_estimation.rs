//! EM estimation of the side-information noise parameter.
//!
//! Generates side information at a known noise level, runs the
//! reconstruction with EM enabled, and reports how close the estimated
//! parameter lands: `v_s` for Laplacian amplitude noise and the label
//! agreement probability `β` for support SI.
//!
//! Run with: `cargo run --release --example em_noise_estimation`

use onebit_gamp::experiment::{
    run_experiment_detailed, Algorithm, ExperimentConfig, SweepParam,
};
use onebit_gamp::gamp::GampConfig;
use onebit_gamp::priors::SignalPrior;
use onebit_gamp::sim::{ScenarioConfig, SiNoiseKind, SiProtocol};
use onebit_gamp::ChannelParams;

fn main() -> onebit_gamp::Result<()> {
    let trials = 40;
    for (true_vs, label) in [(0.1, "v_s* = 0.1"), (0.5, "v_s* = 0.5")] {
        let cfg = ExperimentConfig {
            scenario: ScenarioConfig {
                n: 200,
                m: 800,
                prior: SignalPrior::new(0.1, 5.5)?,
                ch: ChannelParams::new(0.15, 0.95)?,
                si_protocol: SiProtocol::NoisyAmplitude {
                    support_error_frac: 0.0,
                    add_noise_var: true_vs,
                    noise_kind: SiNoiseKind::Laplacian,
                },
                seed: 17,
            },
            algorithms: vec![Algorithm::LaplacianSi],
            sweep: SweepParam::None,
            sweep_values: vec![],
            trials,
            gamp: GampConfig::default(),
            initial_vs: 1.0,
            initial_beta: 0.75,
            report_runtime: false,
            sequential: false,
        };
        let (_, outcomes) = run_experiment_detailed(&cfg)?;
        let estimates: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.algos.iter().filter_map(|a| a.estimated_param))
            .collect();
        let within: usize = estimates
            .iter()
            .filter(|v| **v >= true_vs / 2.0 && **v <= true_vs * 2.0)
            .count();
        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        println!(
            "{label}: mean estimate {mean:.4}, within factor 2 in {}/{} trials",
            within,
            estimates.len()
        );
    }

    // Support labels with a 10% flip rate: EM should put 1-β near 0.1.
    let cfg = ExperimentConfig {
        scenario: ScenarioConfig {
            n: 200,
            m: 800,
            prior: SignalPrior::new(0.1, 5.5)?,
            ch: ChannelParams::new(0.15, 0.95)?,
            si_protocol: SiProtocol::NoisySupport { flip_frac: 0.1 },
            seed: 17,
        },
        algorithms: vec![Algorithm::SupportSi],
        sweep: SweepParam::None,
        sweep_values: vec![],
        trials,
        gamp: GampConfig::default(),
        initial_vs: 1.0,
        initial_beta: 0.75,
        report_runtime: false,
        sequential: false,
    };
    let (_, outcomes) = run_experiment_detailed(&cfg)?;
    let estimates: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.algos.iter().filter_map(|a| a.estimated_param))
        .collect();
    let within = estimates
        .iter()
        .filter(|b| (0.05..=0.15).contains(&(1.0 - **b)))
        .count();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    println!(
        "flip rate 0.1: mean estimated β {mean:.4}, 1-β in [0.05, 0.15] in {}/{} trials",
        within,
        estimates.len()
    );
    Ok(())
}
