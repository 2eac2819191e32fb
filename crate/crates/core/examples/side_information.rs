//! Compare the four reconstruction variants on one trial with noisy
//! amplitude side-information (10% wrong support, additive noise).
//!
//! Run with: `cargo run --release --example side_information`

use onebit_gamp::channel::ChannelParams;
use onebit_gamp::gamp::{run_noisy1bg, run_with_si, GampConfig};
use onebit_gamp::priors::{SideInfo, SignalPrior, SupportSi};
use onebit_gamp::sim::{
    gen_amplitude_si, gen_matrix, gen_measurements, gen_signal, nmse, stream_rng, SiNoiseKind,
};
use onebit_gamp::{AmplitudeSi, Result};

fn main() -> Result<()> {
    let n = 200;
    let m = 600;
    let prior = SignalPrior::new(0.15, 5.5)?;
    let ch = ChannelParams::new(0.15, 0.85)?;

    let mut rng = stream_rng(7, &[0]);
    let x = gen_signal(&prior, n, &mut rng);
    let a = gen_matrix(m, n, &mut rng);
    let y = gen_measurements(&x, &a, &ch, &mut rng)?;
    // Side information: 10% of the support moved, Gaussian noise on top.
    let (x_tilde, si_support) =
        gen_amplitude_si(&x, 0.1, 0.15, SiNoiseKind::Gaussian, &prior, &mut rng);

    let cfg = GampConfig::default();

    let plain = run_noisy1bg(&a, &y, &prior, &ch, &cfg)?;
    println!("noisy1bg     NMSE = {:.4}", nmse(&x, &plain.x_hat)?);

    let lap = run_with_si(
        &a,
        &y,
        &prior,
        &ch,
        &SideInfo::AmplitudeLaplacian(AmplitudeSi::new(x_tilde.clone(), 1.0)?),
        &cfg,
    )?;
    println!(
        "laplacian_si NMSE = {:.4}  (EM v_s -> {:.4})",
        nmse(&x, &lap.x_hat)?,
        lap.estimated_param.unwrap()
    );

    let gau = run_with_si(
        &a,
        &y,
        &prior,
        &ch,
        &SideInfo::AmplitudeGaussian(AmplitudeSi::new(x_tilde, 1.0)?),
        &cfg,
    )?;
    println!(
        "gaussian_si  NMSE = {:.4}  (EM v_s -> {:.4})",
        nmse(&x, &gau.x_hat)?,
        gau.estimated_param.unwrap()
    );

    let sup = run_with_si(
        &a,
        &y,
        &prior,
        &ch,
        &SideInfo::Support(SupportSi::new(si_support, 0.75)?),
        &cfg,
    )?;
    println!(
        "support_si   NMSE = {:.4}  (EM β  -> {:.4})",
        nmse(&x, &sup.x_hat)?,
        sup.estimated_param.unwrap()
    );
    Ok(())
}
