//! Finite-smoothness reduction: a perturbation with algebraically decaying
//! modes is smoothed at shrinking radii and each approximant is reduced.

use std::collections::BTreeMap;

use kamred::diophantine::DiophantineParams;
use kamred::kam::{banded_perturbation, finite_smoothness_loop, DiagonalHamiltonian, KamSchedule, QPOperator};
use kamred::linalg::{c, CMat};

fn main() -> kamred::error::Result<()> {
    let dim = 16;
    let ell = 8.0;
    let omega = [5f64.sqrt() - 1.0];
    let lambda: Vec<f64> = (1..=dim).map(|j| 2.0 * j as f64 - 1.0).collect();
    let a0 = DiagonalHamiltonian::single(omega.to_vec(), lambda, 1.0, DiophantineParams::new(0.1, 1.5, 8))?;

    let ks: Vec<Vec<i32>> = (1..=8).map(|k| vec![k]).collect();
    let modes: BTreeMap<Vec<i32>, CMat> = banded_perturbation(1, dim, &ks, 0.5, 3)?
        .modes
        .into_iter()
        .map(|(k, m)| {
            let weight = (k[0].abs() as f64).powf(-(ell + 2.0));
            (k, m * c(weight))
        })
        .collect();
    let r0 = QPOperator::from_modes(1, dim, modes)?;

    let schedule = KamSchedule {
        tol: 1e-12,
        d2: 1.0,
        ..Default::default()
    };
    let report = finite_smoothness_loop(&a0, &r0, &omega, 0.0, ell, 1e-3, &schedule, 8)?;
    println!("nu  r_nu      increment   chain diff  KAM stages  direct residual");
    for s in &report.stages {
        println!(
            "{:<3} {:<9.4} {:<11.3e} {:<11.3e} {:<11} {:.2e}",
            s.nu, s.r_nu, s.increment, s.chain_difference, s.kam_stages, s.direct_residual
        );
    }
    println!("converged: {}, fitted C_U = {:.3e}", report.converged, report.cu_fit);
    Ok(())
}
