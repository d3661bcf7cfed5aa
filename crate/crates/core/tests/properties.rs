use std::f64::consts::PI;

use kamred::basis::SobolevFrame;
use kamred::diophantine::{ceil_m, DiophantineParams, DiophantineScanner, DiophantineSet};
use kamred::kam::{banded_perturbation, homological_residual, quantum_homological, smoothing_multiplier};
use kamred::linalg::{c, expi_herm, unitarity_defect, C64};
use kamred::propagator::{leakage, phase_distance, sobolev_norm};
use kamred::report::fmt17;
use kamred::symbol::Symbol;
use nalgebra::DVector;
use proptest::prelude::*;

type Term = (u32, u32, i32, f64, f64);

fn symbol(terms: &[Term]) -> Symbol {
    terms.iter().fold(Symbol::zero(1), |acc, &(a, b, k, re, im)| {
        acc.plus(&Symbol::monomial(1, a, b, vec![k], C64::new(re, im)))
    })
}

fn terms(max_degree: u32) -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec(
        (0..=max_degree, 0..=max_degree, -2i32..=2, -1.0..1.0f64, -1.0..1.0f64),
        1..5,
    )
}

fn close(a: &Symbol, b: &Symbol, tol: f64) -> bool {
    a.minus(b).sup_coeff() <= tol * (1.0 + a.sup_coeff().max(b.sup_coeff()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn poisson_bracket_is_antisymmetric(f in terms(3), g in terms(3)) {
        let (f, g) = (symbol(&f), symbol(&g));
        prop_assert!(close(&f.poisson(&g), &g.poisson(&f).scale(c(-1.0)), 1e-14));
    }

    #[test]
    fn moyal_bracket_is_antisymmetric(f in terms(4), g in terms(4)) {
        let (f, g) = (symbol(&f), symbol(&g));
        let (fg, _) = f.moyal_bracket(&g);
        let (gf, _) = g.moyal_bracket(&f);
        prop_assert!(close(&fg, &gf.scale(c(-1.0)), 1e-13));
    }

    #[test]
    fn moyal_and_poisson_agree_on_quadratics(f in terms(1), g in terms(2)) {
        let (f, g) = (symbol(&f), symbol(&g));
        let (m, exact) = f.moyal_bracket(&g);
        prop_assert!(exact);
        prop_assert!(close(&m, &f.poisson(&g), 1e-13));
    }

    #[test]
    fn product_evaluates_pointwise(
        f in terms(3), g in terms(3),
        x in -2.0..2.0f64, xi in -2.0..2.0f64, phi in 0.0..2.0 * PI,
    ) {
        let (f, g) = (symbol(&f), symbol(&g));
        let lhs = f.times(&g).eval(x, xi, &[phi]);
        let rhs = f.eval(x, xi, &[phi]) * g.eval(x, xi, &[phi]);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn smoothing_multiplier_is_a_monotone_cutoff(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (m_lo, m_hi) = (smoothing_multiplier(lo), smoothing_multiplier(hi));
        prop_assert!((0.0..=1.0).contains(&m_lo) && (0.0..=1.0).contains(&m_hi));
        prop_assert!(m_hi <= m_lo);
        prop_assert_eq!(smoothing_multiplier(-a), smoothing_multiplier(a));
    }

    #[test]
    fn ceil_m_is_at_least_one(m in -1e6..1e6f64) {
        prop_assert!(ceil_m(m) >= 1.0);
        prop_assert!(ceil_m(m) >= m.abs());
    }

    #[test]
    fn diophantine_sets_shrink_with_gamma(w0 in 1.0..2.0f64, w1 in 1.0..2.0f64, gamma in 1e-4..0.05f64) {
        let omega = [w0, w1];
        for set in [DiophantineSet::Omega0, DiophantineSet::Omega1] {
            let strict = DiophantineScanner::new(2, DiophantineParams::new(2.0 * gamma, 2.5, 12)).unwrap();
            let loose = DiophantineScanner::new(2, DiophantineParams::new(gamma, 2.5, 12)).unwrap();
            if strict.accepts(set, &omega) {
                prop_assert!(loose.accepts(set, &omega));
            }
        }
    }

    #[test]
    fn homological_residual_is_small(seed in 0u64..1000, w in 1.0..2.0f64, shift in -0.4..0.4f64) {
        let dim = 10;
        let lambda: Vec<f64> = (1..=dim).map(|j| 2.0 * j as f64 - 1.0 + shift * (j % 3) as f64).collect();
        let p = banded_perturbation(1, dim, &[vec![1], vec![2]], 0.5, seed).unwrap();
        let params = DiophantineParams::new(1e-6, 1.5, 2);
        if let Ok(sol) = quantum_homological(&lambda, &p, &[w], &params, 1.0) {
            let scale = p.analytic_norm(0.0, SobolevFrame::L2).unwrap();
            prop_assert!(homological_residual(&lambda, &p, &sol.x, &[w]) <= 1e-10 * scale);
        }
    }

    #[test]
    fn banded_modes_are_selfadjoint_and_seeded(seed in 0u64..1000, rho in 0.1..0.9f64) {
        let ks = [vec![1, 0], vec![1, -1]];
        let a = banded_perturbation(2, 8, &ks, rho, seed).unwrap();
        let b = banded_perturbation(2, 8, &ks, rho, seed).unwrap();
        prop_assert!(a.check_selfadjoint(1e-14).is_ok());
        prop_assert_eq!(a.modes, b.modes);
    }

    #[test]
    fn unitary_conjugation_keeps_the_norm(seed in 0u64..1000, t in 0.1..3.0f64) {
        let p = banded_perturbation(1, 8, &[vec![1]], 0.5, seed).unwrap();
        let h = banded_perturbation(1, 8, &[vec![1]], 0.5, seed + 1).unwrap();
        let u = expi_herm(&(h.modes[&vec![1]].clone() + h.modes[&vec![-1]].clone()), t);
        prop_assert!(unitarity_defect(&u) < 1e-12);
        let before = p.analytic_norm(0.3, SobolevFrame::L2).unwrap();
        let after = p.conjugate(&u).analytic_norm(0.3, SobolevFrame::L2).unwrap();
        prop_assert!((before - after).abs() <= 1e-12 * before);
    }

    #[test]
    fn sobolev_norms_increase_with_s(values in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..40)) {
        let psi = DVector::from_iterator(values.len(), values.iter().map(|(re, im)| C64::new(*re, *im)));
        let mass = psi.norm_squared();
        prop_assert!((sobolev_norm(&psi, 0.0) - mass.sqrt()).abs() <= 1e-12 * (1.0 + mass));
        prop_assert!(sobolev_norm(&psi, 1.0) <= sobolev_norm(&psi, 2.0) * (1.0 + 1e-15));
        prop_assert!((0.0..=mass * (1.0 + 1e-15)).contains(&leakage(&psi)));
    }

    #[test]
    fn phase_distance_is_a_circle_metric(a in -20.0..20.0f64, b in -20.0..20.0f64) {
        let d = phase_distance(a, b);
        prop_assert!((0.0..=PI + 1e-15).contains(&d));
        prop_assert!((d - phase_distance(b, a)).abs() < 1e-12);
        prop_assert!(phase_distance(a, a + 2.0 * PI) < 1e-12);
    }

    #[test]
    fn printed_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
    }
}

