//! Diophantine frequencies: exact scans, Monte Carlo measure of the excluded
//! set, and resonance widths along a frequency sweep.

use kamred::diophantine::{
    excluded_measure, is_diophantine_0, resonance_width, DiophantineParams, DiophantineSet, ResonanceQuery,
};

fn main() -> kamred::error::Result<()> {
    let omega = [2f64.powf(1.0 / 3.0), 2f64.powf(2.0 / 3.0)];
    let accepted = is_diophantine_0(&omega, &DiophantineParams::new(1e-3, 2.5, 50))?;
    println!("(2^(1/3), 2^(2/3)) with gamma = 1e-3, tau = 2.5: {accepted}");

    for gamma in [0.005, 0.01, 0.02] {
        let params = DiophantineParams::new(gamma, 2.5, 40);
        let est = excluded_measure(2, &params, DiophantineSet::Omega0, 200_000, 7)?;
        println!("gamma {gamma:<6} excluded {:.4e} +- {:.1e}", est.fraction, est.ci95);
    }

    let harmonic = |i: usize, _: &[f64]| 2.0 * i as f64 - 1.0;
    for (i, j, k) in [(3, 1, vec![-2, -1]), (2, 1, vec![1, -2]), (4, 2, vec![-1, -2]), (9, 1, vec![1, 0])] {
        let query = ResonanceQuery {
            i,
            j,
            k: k.clone(),
            d: 1.0,
            alpha: 0.2,
        };
        let w = resonance_width(harmonic, &query, 2.0, &[1.5, 1.5], 4001)?;
        println!(
            "R({i},{j},{k:?}): width {:.4} of bound {:.4}, possibly nonempty: {}",
            w.measured, w.bound, w.may_be_nonempty
        );
    }
    Ok(())
}
