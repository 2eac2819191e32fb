//! Re-derive every closed-form moment by adaptive quadrature and print the
//! agreement table (the same suite the `oracle` CLI subcommand runs).
//!
//! Run with: `cargo run --release --example oracle_check`

use onebit_gamp::checks::{all_passed, format_reports, validation_suite};

fn main() -> onebit_gamp::Result<()> {
    let reports = validation_suite(0xbeef, 500)?;
    print!("{}", format_reports(&reports));
    std::process::exit(if all_passed(&reports) { 0 } else { 1 });
}
