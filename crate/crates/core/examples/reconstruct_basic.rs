//! Reconstruct a sparse signal from noisy one-bit measurements.
//!
//! Draws a Bernoulli-Gaussian signal, compresses it through a Gaussian
//! matrix, quantizes to signs with pre-quantization AWGN and post-
//! quantization sign flips, then recovers it with `run_noisy1bg` and
//! reports the NMSE per iteration.
//!
//! Run with: `cargo run --release --example reconstruct_basic`

use onebit_gamp::channel::ChannelParams;
use onebit_gamp::gamp::{run_noisy1bg_tracked, GampConfig};
use onebit_gamp::priors::SignalPrior;
use onebit_gamp::sim::{gen_matrix, gen_measurements, gen_signal, nmse, stream_rng};

fn main() -> onebit_gamp::Result<()> {
    let n = 200;
    let m = 800;
    let prior = SignalPrior::new(0.1, 5.5)?;
    let ch = ChannelParams::new(0.15, 0.9)?; // 10% sign-flip probability

    let mut rng = stream_rng(42, &[0]);
    let x = gen_signal(&prior, n, &mut rng);
    let a = gen_matrix(m, n, &mut rng);
    let y = gen_measurements(&x, &a, &ch, &mut rng)?;

    let result = run_noisy1bg_tracked(&a, &y, &prior, &ch, &GampConfig::default(), Some(&x))?;

    println!(
        "N = {n}, M = {m}, sparsity λ = {}, flip prob = {:.2}",
        prior.lambda(),
        1.0 - ch.gamma()
    );
    for (t, e) in result.trajectory.as_ref().unwrap().iter().enumerate() {
        println!("  iteration {:>2}: NMSE = {:.4}", t + 1, e);
    }
    println!(
        "final NMSE = {:.4} after {} iterations",
        nmse(&x, &result.x_hat)?,
        result.inner_iterations_used
    );
    Ok(())
}
