//! Monte-Carlo sweep over the sign-flip probability, comparing the full
//! channel model against a baseline that assumes the channel is noiseless.
//! Prints the aggregated result table as CSV.
//!
//! Run with: `cargo run --release --example flip_probability_sweep`

use onebit_gamp::experiment::{run_experiment, Algorithm, ExperimentConfig, SweepParam};
use onebit_gamp::gamp::GampConfig;
use onebit_gamp::priors::SignalPrior;
use onebit_gamp::sim::{ScenarioConfig, SiProtocol};
use onebit_gamp::ChannelParams;

fn main() -> onebit_gamp::Result<()> {
    let cfg = ExperimentConfig {
        scenario: ScenarioConfig {
            n: 50,
            m: 300,
            prior: SignalPrior::new(0.15, 5.5)?,
            ch: ChannelParams::new(0.15, 1.0)?,
            si_protocol: SiProtocol::NoneSi,
            seed: 1,
        },
        algorithms: vec![Algorithm::Noisy1bG, Algorithm::SignGamp],
        sweep: SweepParam::FlipProb,
        sweep_values: vec![0.0, 0.05, 0.10, 0.15],
        trials: 25,
        gamp: GampConfig::default(),
        initial_vs: 1.0,
        initial_beta: 0.75,
        report_runtime: true,
        sequential: false,
    };
    let table = run_experiment(&cfg)?;
    print!("{}", table.to_csv());
    Ok(())
}
