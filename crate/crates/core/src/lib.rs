//! Sparse signal reconstruction from noisy one-bit compressed measurements.
//!
//! The measurement chain is `y = η ⊙ sign(Ax + n)`: a sparse
//! Bernoulli-Gaussian signal `x` is compressed by a Gaussian matrix `A`,
//! corrupted by AWGN, quantized to one bit, and each sign is flipped
//! independently with probability `1-γ`. Reconstruction runs generalized
//! approximate message passing (GAMP) with closed-form channel and prior
//! updates, in four flavors:
//!
//! * [`gamp::run_noisy1bg`] — no side-information,
//! * [`gamp::run_with_si`] with Laplacian-noise amplitude SI,
//! * [`gamp::run_with_si`] with Gaussian-noise amplitude SI,
//! * [`gamp::run_with_si`] with ±1 support labels as SI,
//!
//! plus EM estimation of the SI noise parameter (`v_s` or `β`), a simulator
//! for the generative model, a Monte-Carlo NMSE experiment harness with CSV
//! output, and a quadrature oracle that re-derives every closed form by
//! brute force.
//!
//! Start with the `examples/` directory; each file exercises one capability
//! end to end.

pub mod channel;
pub mod checks;
pub mod em;
pub mod error;
pub mod experiment;
pub mod gamp;
pub mod gauss;
pub mod mat;
pub mod oracle;
pub mod priors;
pub mod sim;

pub use channel::ChannelParams;
pub use error::{Error, Result};
pub use mat::Mat;
pub use priors::{AmplitudeSi, DenoiserOutput, SideInfo, SignalPrior, SupportSi};
