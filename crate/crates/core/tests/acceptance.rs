//! Acceptance checks. Every criterion prints one `criterion N: PASS|FAIL`
//! line with the measured quantities; the process fails if any criterion
//! fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use kamred::basis::{fit_exponent, solve_h0, GridSpec, PotentialSpec};
use kamred::config::RunConfig;
use kamred::diophantine::{
    excluded_measure, resonance_width, DiophantineParams, DiophantineSet, FrequencyBox, ResonanceQuery,
};
use kamred::kam::{
    banded_perturbation, finite_smoothness_loop, forced_problem, homological_residual, lemma_suite,
    quantum_homological, rico_iterate, DiagonalHamiltonian, KamSchedule, QPOperator,
};
use kamred::linalg::{c, CMat, C64};
use kamred::propagator::{
    floquet_eigenphases, monodromy, reduced_compare, ForcedHamiltonian,
};
use kamred::basis::SobolevFrame;
use kamred::symbol::grid::{solve_hom_flow, GridSymbol, Lattice, OrbitLattice};
use kamred::symbol::Symbol;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, pass: bool, detail: String) -> bool {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn sci(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    RunConfig::load(&path).unwrap()
}

fn criterion_01_eigenvalue_asymptotics() -> bool {
    let start = Instant::now();
    let v = PotentialSpec::monomial(2);
    let basis = solve_h0(&v, 128, GridSpec::for_basis(&v, 128)).unwrap();
    let (d, _) = fit_exponent(&basis, 20, 60).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rel = (d / (4.0 / 3.0) - 1.0).abs();
    let pass = rel <= 0.02 && secs < 10.0;
    verdict(1, pass, format!("exponent {d:.6} (rel. error {rel:.2e}), {secs:.2} s"))
}

fn criterion_02_harmonic_levels() -> bool {
    let v = PotentialSpec::harmonic();
    let basis = solve_h0(&v, 32, GridSpec::for_basis(&v, 32)).unwrap();
    // -d^2 + x^2 has levels 2 (j + 1/2), j = 0, 1, ...
    let worst = (0..=10)
        .map(|j| (basis.lambda_v[j] - 2.0 * (j as f64 + 0.5)).abs())
        .fold(0.0, f64::max);
    verdict(2, worst <= 1e-8, format!("max |lambda - (2j + 1)| = {worst:.2e} for j <= 10"))
}

fn criterion_03_homological_residuals() -> bool {
    let omega = [2f64.powf(1.0 / 7.0), 3f64.powf(0.25)];
    let params = DiophantineParams::new(1e-3, 2.5, 3);
    let modes = vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![1, -1], vec![2, -1]];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_quantum: f64 = 0.0;
    for seed in 0..100 {
        let lambda: Vec<f64> = (1..=16).map(|j| 2.0 * j as f64 - 1.0 + rng.random_range(-0.1..0.1)).collect();
        let mut p = banded_perturbation(2, 16, &modes, 0.6, seed).unwrap();
        let m = CMat::from_fn(16, 16, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        p.modes.insert(vec![0, 0], (&m + m.adjoint()) * c(0.5));
        let sol = quantum_homological(&lambda, &p, &omega, &params, 1.0).unwrap();
        let scale = p.analytic_norm(0.0, SobolevFrame::L2).unwrap();
        worst_quantum = worst_quantum.max(homological_residual(&lambda, &p, &sol.x, &omega) / scale);
    }

    let energies: Vec<f64> = (0..24).map(|i| 32f64.powf(i as f64 / 23.0)).collect();
    let x = Symbol::x(1);
    let xi = Symbol::xi(1);
    let p = x
        .times(&x)
        .times(&Symbol::monomial(1, 0, 0, vec![1], c(0.5)).plus(&Symbol::monomial(1, 0, 0, vec![-1], c(0.5))))
        .plus(&x.times(&xi))
        .plus(&xi.times(&xi).times(&xi).times(&xi));
    let mut worst_flow: f64 = 0.0;
    for l in [1, 2] {
        let v = PotentialSpec::monomial(l);
        let lattice = Lattice::Orbits(Arc::new(OrbitLattice::new(&v, energies.clone(), 256).unwrap()));
        let sol = solve_hom_flow(&GridSymbol::from_symbol(&p, &lattice)).unwrap();
        worst_flow = worst_flow.max(sol.residual);
    }
    let pass = worst_quantum <= 1e-10 && worst_flow <= 1e-4;
    verdict(
        3,
        pass,
        format!("quantum residual / ||P|| <= {worst_quantum:.2e} (100 solves), flow residual / sup|p| <= {worst_flow:.2e}")
    )
}

fn criterion_04_operator_estimates() -> bool {
    let report = lemma_suite(1, 100).unwrap();
    let pos96 = report.check("pos96").unwrap();
    let relie = report.check("relie").unwrap();
    let rico = report.check("rico_closed_form").unwrap();
    let s1 = rico_iterate(1.0, 0, 0.125, 1)[1];
    let pass = pos96.trials == 100
        && pos96.worst_ratio <= 1.0
        && relie.trials == 100
        && relie.violations == 0
        && rico.violations == 0
        && s1 == 1.0 / 64.0;
    verdict(
        4,
        pass,
        format!(
            "pos96 worst ratio / (pi/sqrt 3) = {:.3}, relie violations {} of {}, rico closed-form violations {} of {}, s1 = {s1}",
            pos96.worst_ratio, relie.violations, relie.trials, rico.violations, rico.trials
        )
    )
}

fn criterion_05_quadratic_contraction() -> bool {
    let start = Instant::now();
    let cfg = config("contraction.toml");
    let run = cfg.problem().unwrap().reduce(&cfg.schedule).unwrap();
    let constants = run.contraction_constants();
    let stages = run.stages_above_floor();
    // one constant for every stage, fixed before the run
    let c_fixed = 1.0;
    let contracting = constants.len() + 1 >= stages && constants.iter().all(|q| *q <= c_fixed);
    let decrements = run.decrements();
    let superexponential = decrements.windows(2).all(|w| w[1] >= 1.7 * w[0]);

    let mut doubled = cfg.clone();
    doubled.eps *= 2.0;
    let run2 = doubled.problem().unwrap().reduce(&doubled.schedule).unwrap();
    let ratio = run2.ledger[1].eps1_measured / run.ledger[1].eps1_measured;
    let secs = start.elapsed().as_secs_f64();
    let pass = stages >= 4 && contracting && superexponential && (ratio - 4.0).abs() <= 0.5 && secs < 60.0;
    verdict(
        5,
        pass,
        format!(
            "{stages} stages above floor {:.2e}, eps_(l+1)/eps_l^2 = {} (C = {}), decrements {}, doubling ratio {ratio:.3}, {secs:.1} s",
            run.floor,
            sci(&constants),
            c_fixed,
            sci(&decrements)
        )
    )
}

/// The torus average of `x a(phi)` vanishes for mean-zero `a`, and for
/// constant `a` the shift of `x^2 + eps a x` is `-eps^2 a^2 / 4`; the
/// deviation is therefore of order `eps^2` and the fitted `C` of the
/// first-order law halves with `eps`. This test fails.
fn criterion_06_eigenvalue_deviation_law() -> bool {
    let omega = [2f64.powf(1.0 / 7.0), 3f64.powf(0.25)];
    let mut w = Symbol::zero(2);
    for k in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
        w = w.plus(&Symbol::monomial(2, 1, 0, k.to_vec(), c(0.5)));
    }
    let params = DiophantineParams::new(0.5, 2.5, 2);
    let schedule = KamSchedule {
        tol: 1e-14,
        d2: 1.0,
        ..Default::default()
    };
    let fitted: Vec<f64> = [1e-3, 5e-4]
        .iter()
        .map(|&eps| {
            let problem = forced_problem(&PotentialSpec::harmonic(), 64, &w, eps, &omega, &params).unwrap();
            let run = problem.reduce(&schedule).unwrap();
            // beta-tilde = 0: the weight j^(beta-tilde / (l + 1)) is 1
            run.deviations
                .iter()
                .take(problem.basis.certified)
                .map(|d| d.abs() / eps)
                .fold(0.0, f64::max)
        })
        .collect();
    let drift = (fitted[1] / fitted[0] - 1.0).abs();
    verdict(
        6,
        drift <= 0.2,
        format!("C(1e-3) = {:.4e}, C(5e-4) = {:.4e}, relative change {drift:.3}", fitted[0], fitted[1])
    )
}

fn criterion_07_measure_scaling() -> bool {
    let start = Instant::now();
    let gamma = 0.01;
    let estimate = |g: f64| {
        excluded_measure(2, &DiophantineParams::new(g, 2.5, 40), DiophantineSet::Omega0, 1_000_000, 11).unwrap()
    };
    let (a, b) = (estimate(gamma), estimate(2.0 * gamma));
    let ratio = b.fraction / a.fraction;
    let secs = start.elapsed().as_secs_f64();
    let pass = (1.5..=2.5).contains(&ratio) && secs < 30.0;
    verdict(
        7,
        pass,
        format!(
            "excluded {:.4e} at gamma {gamma}, {:.4e} at {}, ratio {ratio:.3}, {secs:.1} s",
            a.fraction,
            b.fraction,
            2.0 * gamma
        )
    )
}

fn criterion_08_resonance_width() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let harmonic = |i: usize, _: &[f64]| 2.0 * i as f64 - 1.0;
    let k0 = 2.0;
    let mut worst: f64 = 0.0;
    let mut nonempty = 0;
    let mut hypotheses = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let k: Vec<i32> = loop {
            let k: Vec<i32> = (0..n).map(|_| rng.random_range(-6..=6)).collect();
            if k.iter().any(|v| *v != 0) {
                break k;
            }
        };
        let query = ResonanceQuery {
            i: rng.random_range(1..=20),
            j: rng.random_range(1..=20),
            k,
            d: 1.0,
            alpha: rng.random_range(0.01..1.0),
        };
        let base = FrequencyBox { n }.sample(8, rng.random_range(0..1000));
        let width = resonance_width(harmonic, &query, k0, &base, 4001).unwrap();
        hypotheses &= width.hypotheses_hold;
        if width.measured > 0.0 {
            nonempty += 1;
        }
        worst = worst.max(width.measured / width.bound);
    }
    verdict(
        8,
        worst <= 1.0 && hypotheses,
        format!("max measured / bound = {worst:.3} over 100 queries ({nonempty} nonempty, hypotheses hold: {hypotheses})")
    )
}

fn criterion_09_dynamics() -> bool {
    let cfg = config("periodic.toml");
    let problem = cfg.problem().unwrap();
    let run = problem.reduce(&cfg.schedule).unwrap();
    let h = ForcedHamiltonian::from_problem(&problem);
    let omega = cfg.omega();
    let psi0 = DVector::from_fn(h.dim(), |i, _| c(if i == 0 { 1.0 } else { 0.0 }));
    let times: Vec<f64> = (0..=10).map(|i| 10.0 * i as f64).collect();
    let cmp = reduced_compare(
        &h,
        cfg.eps,
        &omega,
        &run.lambda_inf,
        &run.chain,
        run.remainder_norm(),
        &psi0,
        &times,
        1.0,
        0.01,
    )
    .unwrap();

    let growth = |w: f64| {
        let m = monodromy(&h, cfg.eps, w, 256, 8).unwrap();
        let trace = m.stroboscopic(&psi0, 1000, &[1.0]).unwrap();
        (trace.growth_ratio(1.0).unwrap(), floquet_eigenphases(&m).unwrap().collisions)
    };
    let (diophantine, c_dio) = growth(omega[0]);
    let (resonant, c_res) = growth(2.0);
    let pass = cmp.max_discrepancy <= 1e-6 && diophantine <= 2.0 && resonant >= 5.0;
    verdict(
        9,
        pass,
        format!(
            "max discrepancy {:.2e} on t <= 100, H1 growth {diophantine:.4} (omega = {:.4}, {c_dio} collisions) vs {resonant:.2} (omega = 2, {c_res} collisions)",
            cmp.max_discrepancy, omega[0]
        )
    )
}

fn criterion_10_finite_smoothness() -> bool {
    let dim = 16;
    let ell = 8.0;
    let lambda: Vec<f64> = (1..=dim).map(|j| 2.0 * j as f64 - 1.0).collect();
    let omega = [5f64.sqrt() - 1.0];
    let params = DiophantineParams::new(0.1, 1.5, 8);
    let a0 = DiagonalHamiltonian::single(omega.to_vec(), lambda, 1.0, params).unwrap();
    // C^ell family: unit modes weighted by |k|^-(ell + 2)
    let ks: Vec<Vec<i32>> = (1..=8).map(|k| vec![k]).collect();
    let unit = banded_perturbation(1, dim, &ks, 0.5, 3).unwrap();
    let modes: BTreeMap<Vec<i32>, CMat> = unit
        .modes
        .iter()
        .map(|(k, m)| (k.clone(), m * c((k[0].abs() as f64).powf(-(ell + 2.0)))))
        .collect();
    let r0 = QPOperator::from_modes(1, dim, modes).unwrap();
    let schedule = KamSchedule {
        tol: 1e-12,
        d2: 1.0,
        ..Default::default()
    };
    let report = finite_smoothness_loop(&a0, &r0, &omega, 0.0, ell, 1e-3, &schedule, 8).unwrap();
    let inc: Vec<f64> = report.stages.iter().map(|s| s.increment).collect();
    let ratios: Vec<f64> = inc.windows(2).map(|w| w[1] / w[0]).collect();
    let geometric = !ratios.is_empty() && ratios.iter().all(|q| *q <= 2f64.powf(-ell));
    // the stage bound with the constant fitted at the first stage
    let stage_bound = report
        .stages
        .iter()
        .all(|s| s.chain_difference <= 2.0 * report.cu_fit * s.chain_scale * (1.0 + 1e-9));
    let residuals = report.stages.iter().all(|s| s.direct_residual <= schedule.tol);
    let pass = geometric && stage_bound && residuals && report.converged && report.stages.len() <= 8;
    verdict(
        10,
        pass,
        format!(
            "increment ratios {} (<= 2^-{ell}), chain differences / scale {} (<= 2 C_U = {:.3e}), {} stages",
            sci(&ratios),
            sci(&report.stages.iter().map(|s| s.chain_difference / s.chain_scale).collect::<Vec<_>>()),
            2.0 * report.cu_fit,
            report.stages.len()
        )
    )
}

fn main() {
    let criteria: [fn() -> bool; 10] = [
        criterion_01_eigenvalue_asymptotics,
        criterion_02_harmonic_levels,
        criterion_03_homological_residuals,
        criterion_04_operator_estimates,
        criterion_05_quadratic_contraction,
        criterion_06_eigenvalue_deviation_law,
        criterion_07_measure_scaling,
        criterion_08_resonance_width,
        criterion_09_dynamics,
        criterion_10_finite_smoothness,
    ];
    let mut failed = Vec::new();
    for (i, criterion) in criteria.iter().enumerate() {
        let n = i as u32 + 1;
        match std::panic::catch_unwind(criterion) {
            Ok(true) => {}
            Ok(false) => failed.push(n),
            Err(_) => {
                println!("criterion {n}: FAIL | panicked");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
