//! Iterative reduction of a quasi-periodically forced harmonic oscillator,
//! printing the contraction ledger.
//!
//! Run with `cargo run --release --example reduce -- configs/contraction.toml`.

use kamred::config::RunConfig;
use kamred::report::{emit_report, Format, Table};

fn main() -> kamred::error::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/contraction.toml").to_string());
    let config = RunConfig::load(path.as_ref())?;
    let run = config.problem()?.reduce(&config.schedule)?;

    emit_report(&Table::ledger(&run.ledger), Format::Csv, std::io::stdout().lock())?;
    println!();
    println!("stages above the rounding floor {:.2e}: {}", run.floor, run.stages_above_floor());
    println!("eps_(l+1) / eps_l^2: {:?}", run.contraction_constants());
    println!("log-decrements: {:?}", run.decrements());
    let worst = run.deviations.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    println!("largest eigenvalue shift {worst:.3e}, remainder {:.2e}", run.remainder_norm());
    Ok(())
}
