//! Worked cases for each module, with independent oracles where the value
//! is not exact.

use std::sync::Arc;

use kamred::basis::{
    check_asymptotics, solve_h0, weighted_operator_norm, GridSpec, PotentialSpec, SobolevFrame,
};
use kamred::diophantine::{
    excluded_measure, is_diophantine_0, is_diophantine_1, resonance_width, DiophantineParams,
    DiophantineSet, ResonanceQuery,
};
use kamred::linalg::{c, CMat, C64};
use kamred::symbol::grid::{solve_hom_flow, GridSymbol, Lattice, OrbitLattice, TorusProfile};
use kamred::symbol::homological::{solve_hom_mixed, solve_hom_torus};
use kamred::symbol::normal_form::{smoothing_normal_form, NormalFormConfig};
use kamred::symbol::{period_action, Symbol};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lowest level of `-d^2 + V` by second-order differences on `m` interior
/// points of `[-half, half]`.
fn finite_difference_ground(v: &PotentialSpec, half: f64, m: usize) -> f64 {
    let h = 2.0 * half / (m + 1) as f64;
    let a = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            2.0 / (h * h) + v.value(-half + (i + 1) as f64 * h)
        } else if i.abs_diff(j) == 1 {
            -1.0 / (h * h)
        } else {
            0.0
        }
    });
    SymmetricEigen::new(a).eigenvalues.min()
}

#[test]
fn quartic_ground_level_matches_finite_differences() {
    let v = PotentialSpec::monomial(2);
    let basis = solve_h0(&v, 64, GridSpec::for_basis(&v, 64)).unwrap();
    let (coarse, fine) = (finite_difference_ground(&v, 6.0, 399), finite_difference_ground(&v, 6.0, 799));
    // both grids share the nodes of the coarse one; the error is even in h
    let oracle = (4.0 * fine - coarse) / 3.0;
    assert!((basis.lambda_v[0] - oracle).abs() / oracle < 1e-6, "{} vs {oracle}", basis.lambda_v[0]);
}

#[test]
fn sextic_levels_follow_the_power_law() {
    let v = PotentialSpec::monomial(3);
    let basis = solve_h0(&v, 128, GridSpec::for_basis(&v, 128)).unwrap();
    let (_, dev) = check_asymptotics(&basis, 3, 20, 60).unwrap();
    assert!(dev < 0.03, "max relative deviation {dev}");
}

#[test]
fn weighted_norm_matches_explicit_weighting() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = CMat::from_fn(8, 8, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let frame = SobolevFrame::new(2.0, 1.0).unwrap();
    let left = DMatrix::from_fn(8, 8, |i, j| if i == j { c(((i + 1) as f64).powi(2)) } else { c(0.0) });
    let right = DMatrix::from_fn(8, 8, |i, j| if i == j { c(1.0 / (i + 1) as f64) } else { c(0.0) });
    let explicit = (left * &f * right).singular_values().max();
    let norm = weighted_operator_norm(&f, frame).unwrap();
    assert!((norm - explicit).abs() <= 1e-12 * explicit);
}

#[test]
fn quadratic_poisson_bracket_by_hand() {
    let x2: Symbol = Symbol::x(1).times(&Symbol::x(1));
    let xi2: Symbol = Symbol::xi(1).times(&Symbol::xi(1));
    // -d_xi(x^2) d_x(xi^2) + d_xi(xi^2) d_x(x^2) = 4 x xi
    let b = x2.poisson(&xi2);
    assert_eq!(b.coeff(1, 1, &[0]), c(4.0));
    assert_eq!(b.terms.len(), 1);
}

#[test]
fn second_moyal_term_of_cubics() {
    let x3: Symbol = Symbol::x(1).times(&Symbol::x(1)).times(&Symbol::x(1));
    let xi3: Symbol = Symbol::xi(1).times(&Symbol::xi(1)).times(&Symbol::xi(1));
    // (i/2)^2 / 2! (f_xixi g_xx - 2 f_xix g_xxi + f_xx g_xixi) with only
    // f_xx g_xixi = 36 x xi surviving
    let c2 = &x3.moyal_terms(&xi3, 2).unwrap()[2];
    assert!((c2.coeff(1, 1, &[0]) - c(-4.5)).norm() < 1e-15);
    assert_eq!(c2.terms.len(), 1);
}

#[test]
fn quartic_area_scaling_and_period() {
    let v = PotentialSpec::monomial(2);
    let ratio = v.enclosed_area(20.0) / v.enclosed_area(2.0);
    assert!((ratio - 10f64.powf(0.75)).abs() < 1e-9 * ratio);
    let pa = period_action(&v, 4.0).unwrap();
    assert!(pa.consistency <= 1e-4);
    assert!((pa.period - pa.period_quadrature).abs() < 1e-6 * pa.period);
}

#[test]
fn mixed_and_flow_generators_agree_on_the_circle() {
    let x2: Symbol = Symbol::x(1).times(&Symbol::x(1));
    let params = DiophantineParams::new(0.1, 1.5, 4);
    let mixed = solve_hom_mixed(&x2, &[1.37], &params).unwrap();
    assert!((mixed.chi.coeff(1, 1, &[0]) - c(-0.25)).norm() < 1e-15);

    let energies: Vec<f64> = (0..12).map(|i| 1.0 + 2.5 * i as f64).collect();
    let lattice = Lattice::Orbits(Arc::new(OrbitLattice::new(&PotentialSpec::harmonic(), energies, 256).unwrap()));
    let flow = solve_hom_flow(&GridSymbol::from_symbol(&x2, &lattice)).unwrap();
    let polynomial = GridSymbol::from_symbol(&mixed.chi, &lattice);
    let diff = polynomial.minus(&flow.chi).unwrap().sup_norm();
    assert!(diff <= 1e-6 * flow.chi.sup_norm(), "difference {diff}");
}

#[test]
fn forced_linear_term_has_small_mixed_residual() {
    let p: Symbol = Symbol::monomial(1, 1, 0, vec![1], c(0.5)).plus(&Symbol::monomial(1, 1, 0, vec![-1], c(0.5)));
    let sol = solve_hom_mixed(&p, &[1.37], &DiophantineParams::new(0.1, 1.5, 4)).unwrap();
    assert!(sol.residual <= 1e-10);
    assert!(sol.average.iter().all(|a| *a == 0.0));
}

#[test]
fn torus_residual_is_the_dropped_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let energies = vec![1.0, 2.0, 4.0];
    let mut p = TorusProfile::zero(2, energies.clone());
    for k in [[1, 0], [0, 1], [1, -1], [2, 1], [3, -2]] {
        let v: Vec<C64> = energies
            .iter()
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        p.modes.insert(vec![-k[0], -k[1]], v.iter().map(|z| z.conj()).collect());
        p.modes.insert(k.to_vec(), v);
    }
    let omega = [1.21, 1.83];
    let sol = solve_hom_torus(&p, &omega, &DiophantineParams::new(1e-3, 2.5, 3)).unwrap();
    let tail: f64 = [[3, -2], [-3, 2]].iter().map(|k| p.sup_mode(k)).sum();
    assert!((sol.tail_bound - tail).abs() <= 1e-12 * tail);
    assert!(sol.residual <= sol.tail_bound * (1.0 + 1e-9));
    assert!(sol.residual >= 0.5 * p.sup_mode(&[3, -2]));

    // with every mode retained the residual is at rounding level
    let full = solve_hom_torus(&p, &omega, &DiophantineParams::new(1e-3, 2.5, 5)).unwrap();
    assert!(full.residual < 1e-12);
    let expected = p.modes[&vec![1, 0]][0] / C64::new(0.0, omega[0]);
    assert!((full.chi.modes[&vec![1, 0]][0] - expected).norm() < 1e-14);
}

#[test]
fn normal_form_of_zero_is_trivial() {
    let config = NormalFormConfig::new(vec![1.37], 1e-2, DiophantineParams::new(0.1, 1.5, 4));
    let nf = smoothing_normal_form(&PotentialSpec::harmonic(), &Symbol::zero(1), &config).unwrap();
    assert_eq!(nf.residual.sup(), 0.0);
    assert_eq!(nf.z.sup_abs(), 0.0);
    assert_eq!(nf.ztilde.sup_abs(), 0.0);
}

#[test]
fn quadratic_forcing_averages_to_half_the_energy() {
    // W = x^2 (1 + cos phi): the phase and torus average is h0 / 2
    let x2: Symbol = Symbol::x(1).times(&Symbol::x(1));
    let a = Symbol::constant(1, c(1.0))
        .plus(&Symbol::monomial(1, 0, 0, vec![1], c(0.5)))
        .plus(&Symbol::monomial(1, 0, 0, vec![-1], c(0.5)));
    let config = NormalFormConfig::new(vec![1.37], 1e-3, DiophantineParams::new(0.1, 1.5, 4));
    let nf = smoothing_normal_form(&PotentialSpec::harmonic(), &x2.times(&a), &config).unwrap();
    for e in [1.0, 5.0, 30.0] {
        assert!((nf.z.eval(e) - e / 2.0).abs() < 1e-12 * e, "z({e}) = {}", nf.z.eval(e));
    }
}

#[test]
fn diophantine_examples() {
    let cube = [2f64.powf(1.0 / 3.0), 2f64.powf(2.0 / 3.0)];
    assert!(is_diophantine_0(&cube, &DiophantineParams::new(1e-3, 2.5, 50)).unwrap());
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    assert!(is_diophantine_1(&[golden], &DiophantineParams::new(0.05, 1.2, 40)).unwrap());
    assert!(!is_diophantine_1(&[2.0], &DiophantineParams::new(1.0, 1.2, 4)).unwrap());
}

#[test]
fn small_gamma_excludes_little() {
    let tiny = excluded_measure(2, &DiophantineParams::new(1e-4, 2.5, 40), DiophantineSet::Omega0, 20_000, 1).unwrap();
    assert!(tiny.fraction < 0.01);
    let none = excluded_measure(2, &DiophantineParams::new(0.0, 2.5, 40), DiophantineSet::Omega0, 20_000, 1).unwrap();
    assert_eq!(none.excluded, 0);
}

#[test]
fn distant_levels_have_no_resonance() {
    let query = ResonanceQuery {
        i: 20,
        j: 1,
        k: vec![1],
        d: 1.0,
        alpha: 0.5,
    };
    let width = resonance_width(|i: usize, _: &[f64]| 2.0 * i as f64 - 1.0, &query, 2.0, &[1.5], 1000).unwrap();
    assert!(!width.may_be_nonempty);
    assert_eq!(width.measured, 0.0);
}

