//! Dynamics of the forced oscillator: the reduced flow against direct
//! integration, Sobolev norms over a thousand periods, and Floquet phases
//! near and away from resonance.

use kamred::config::RunConfig;
use kamred::linalg::c;
use kamred::propagator::{
    floquet_continuation, floquet_eigenphases, monodromy, reduced_compare, ForcedHamiltonian,
};
use nalgebra::DVector;

fn main() -> kamred::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/periodic.toml");
    let config = RunConfig::load(path.as_ref())?;
    let problem = config.problem()?;
    let run = problem.reduce(&config.schedule)?;
    let h = ForcedHamiltonian::from_problem(&problem);
    let omega = config.omega();
    let psi0 = DVector::from_fn(h.dim(), |i, _| c(if i == 0 { 1.0 } else { 0.0 }));

    let times: Vec<f64> = (0..=5).map(|i| 20.0 * i as f64).collect();
    let full = reduced_compare(&h, config.eps, &omega, &run.lambda_inf, &run.chain, run.remainder_norm(), &psi0, &times, 1.0, 0.02)?;
    let first = run.chain.truncated(1);
    let ablated = reduced_compare(&h, config.eps, &omega, &run.lambda_inf, &first, run.remainder_norm(), &psi0, &times, 1.0, 0.02)?;
    println!("t      full chain   first generator only");
    for (i, t) in times.iter().enumerate() {
        println!("{t:<6} {:<12.3e} {:.3e}", full.discrepancy[i], ablated.discrepancy[i]);
    }

    for w in [omega[0], 2.0] {
        let m = monodromy(&h, config.eps, w, 256, 8)?;
        let trace = m.stroboscopic(&psi0, 1000, &[1.0])?;
        let spectrum = floquet_eigenphases(&m)?;
        println!(
            "omega = {w:.4}: H1 growth over 1000 periods {:.3}, leakage flagged {}, Floquet collisions {}",
            trace.growth_ratio(1.0).unwrap_or(f64::NAN),
            trace.leakage_flagged,
            spectrum.collisions
        );
    }

    let cont = floquet_continuation(&h, omega[0], &[2.5e-3, 5e-3, 1e-2], 8, 256)?;
    println!("eigenphase shifts {:?}, Lipschitz constant in eps^2: {:.4}", cont.max_shift, cont.lipschitz);
    Ok(())
}
