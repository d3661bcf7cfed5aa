use rayon::prelude::*;
use serde::Serialize;

use crate::basis::SobolevFrame;
use crate::diophantine::DiophantineParams;
use crate::error::{invalid, KamError, Result};
use crate::linalg::{c, eigh, expi_herm, gauss_legendre, gemm, matmul, C64, CMat};

use super::homological::quantum_homological;
use super::{frobenius, AngleGrid, KamSchedule, QPOperator};

/// Largest generator size for which the Lie series estimates apply.
pub const RELIE_GUARD: f64 = std::f64::consts::LN_2 / 2.0;

fn relie_guard(x: &QPOperator, r: f64) -> Result<f64> {
    let size = x.analytic_norm(r, SobolevFrame::L2)?;
    if size >= RELIE_GUARD {
        return Err(KamError::BoundViolation(format!(
            "generator size {size:.3e} exceeds ln2/2"
        )));
    }
    Ok(size)
}

/// `Y_X(phi) = int_0^1 e^{i(1-s)X} Xdot e^{-i(1-s)X} ds` by Gauss-Legendre
/// quadrature; returns the value and the change under node doubling.
pub fn y_correction(x: &QPOperator, omega: &[f64], phi: &[f64], quad_nodes: usize) -> Result<(CMat, f64)> {
    if quad_nodes == 0 {
        return invalid("quadrature needs at least one node");
    }
    relie_guard(x, 0.0)?;
    let (mu, v) = eigh(&x.eval(phi));
    let vd = v.adjoint();
    let xdot = matmul(&matmul(&vd, &x.dot_derivative(omega).eval(phi)), &v);
    let rule = |nodes: usize| {
        let (s, w) = gauss_legendre(nodes, 0.0, 1.0);
        CMat::from_fn(mu.len(), mu.len(), |a, b| {
            let delta = mu[a] - mu[b];
            let factor: C64 = s
                .iter()
                .zip(&w)
                .map(|(s, w)| C64::from_polar(*w, (1.0 - s) * delta))
                .sum();
            factor * xdot[(a, b)]
        })
    };
    let coarse = rule(quad_nodes);
    let fine = rule(2 * quad_nodes);
    let change = frobenius(&(&fine - &coarse));
    if change > 1e-10 * frobenius(&xdot).max(1.0) {
        return Err(KamError::NonConvergent(format!(
            "Y_X quadrature changed by {change:.3e} under node doubling"
        )));
    }
    Ok((matmul(&matmul(&v, &fine), &vd), change))
}

/// Closed form of `Y_X(phi)` through divided differences of `e^{i t mu}`.
pub fn y_exact(x: &QPOperator, omega: &[f64], phi: &[f64]) -> CMat {
    let (mu, v) = eigh(&x.eval(phi));
    let vd = v.adjoint();
    let xdot = matmul(&matmul(&vd, &x.dot_derivative(omega).eval(phi)), &v);
    let inner = CMat::from_fn(mu.len(), mu.len(), |a, b| {
        let delta = mu[a] - mu[b];
        let factor = if delta.abs() < 1e-8 {
            C64::new(1.0 - delta * delta / 6.0, delta / 2.0)
        } else {
            (C64::from_polar(1.0, delta) - 1.0) / C64::new(0.0, delta)
        };
        factor * xdot[(a, b)]
    });
    matmul(&matmul(&v, &inner), &vd)
}

#[derive(Clone, Debug)]
pub struct LieResult {
    pub op: QPOperator,
    /// Part of the transformed samples outside the retained modes.
    pub aliasing: f64,
    /// Worst `||U^dagger U - 1||_F` over the grid.
    pub unitarity_defect: f64,
}

/// `e^{iX(phi)} F(phi) e^{-iX(phi)}` on the grid, re-projected.
pub fn lie_transform(f: &QPOperator, x: &QPOperator, grid: &AngleGrid) -> Result<LieResult> {
    relie_guard(x, 0.0)?;
    let values: Vec<(CMat, f64)> = grid
        .points
        .par_iter()
        .map(|phi| {
            let u = expi_herm(&x.eval(phi), 1.0);
            let defect = frobenius(&(matmul(&u.adjoint(), &u) - CMat::identity(u.nrows(), u.ncols())));
            let g = matmul(&matmul(&u, &f.eval(phi)), &u.adjoint());
            (g, defect)
        })
        .collect();
    let unitarity_defect = values.iter().map(|v| v.1).fold(0.0, f64::max);
    if unitarity_defect > 1e-12 {
        return Err(KamError::NonConvergent(format!(
            "exponential unitarity defect {unitarity_defect:.3e}"
        )));
    }
    let samples: Vec<CMat> = values.into_iter().map(|v| v.0).collect();
    let op = grid.project(&samples);
    let aliasing = grid.projection_residual(&samples, &op);
    Ok(LieResult {
        op,
        aliasing,
        unitarity_defect,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepDiagnostics {
    /// `||P||_r`.
    pub p_norm: f64,
    /// `||P+||_{r - sigma}`.
    pub p_plus_norm: f64,
    /// `||P+||_{r-sigma} sigma^b / ||P||_r^2`: the measured square-lemma constant.
    pub square_constant: f64,
    pub x_norm: f64,
    pub min_divisor: f64,
    pub min_divisor_ratio: f64,
    pub homological_residual: f64,
    /// Grid samples not represented by the retained modes (triple products
    /// and modes beyond Kmax).
    pub truncation: f64,
    pub series_terms: usize,
}

#[derive(Clone, Debug)]
pub struct KamStep {
    pub a_plus: Vec<f64>,
    pub p_plus: QPOperator,
    pub x: QPOperator,
    pub diagnostics: StepDiagnostics,
}

/// One squaring step: `A+ = A + [P]`, and `P+` from the Lie series of `A`
/// and `P` and the `Xdot - Y_X` correction.
///
/// With `A1 = -i[A;X] = Xdot - P + [P]` the three groups share the nested
/// commutators `(-i ad_X)^m` and collapse to
/// `P+ = sum_{m>=1} (-i ad_X)^m (P/m! + ([P] - P)/(m+1)!)`, summed per angle.
#[allow(clippy::too_many_arguments)]
pub fn kam_step(
    lambda: &[f64],
    p: &QPOperator,
    omega: &[f64],
    params: &DiophantineParams,
    d: f64,
    grid: &AngleGrid,
    r: f64,
    sigma: f64,
) -> Result<KamStep> {
    if !(sigma > 0.0 && sigma < r) {
        return invalid("kam_step needs 0 < sigma < r");
    }
    let sol = quantum_homological(lambda, p, omega, params, d)?;
    let x = sol.x;
    let x_norm = relie_guard(&x, r - sigma)?;
    let dim = lambda.len();
    let bracket = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        p.stationary_diagonal().into_iter().map(c),
    ));
    let results: Vec<(CMat, usize)> = grid
        .points
        .par_iter()
        .map(|phi| squared_remainder(&p.eval(phi), &bracket, &x.eval(phi)))
        .collect();
    let series_terms = results.iter().map(|v| v.1).max().unwrap_or(0);
    let samples: Vec<CMat> = results.into_iter().map(|v| v.0).collect();
    let p_plus = grid.project(&samples);
    let truncation = grid.projection_residual(&samples, &p_plus);
    let a_plus: Vec<f64> = lambda
        .iter()
        .zip(p.stationary_diagonal())
        .map(|(a, b)| a + b)
        .collect();
    let p_norm = p.analytic_norm(r, SobolevFrame::L2)?;
    let p_plus_norm = p_plus.analytic_norm(r - sigma, SobolevFrame::L2)?;
    let b = KamSchedule::loss_exponent(p.n, params.tau);
    let square_constant = if p_norm > 0.0 {
        p_plus_norm * sigma.powf(b) / (p_norm * p_norm)
    } else {
        0.0
    };
    Ok(KamStep {
        a_plus,
        p_plus,
        x,
        diagnostics: StepDiagnostics {
            p_norm,
            p_plus_norm,
            square_constant,
            x_norm,
            min_divisor: sol.min_divisor,
            min_divisor_ratio: sol.min_ratio,
            homological_residual: sol.residual,
            truncation,
            series_terms,
        },
    })
}

const MAX_LEVELS: usize = 80;

/// `sum_{m>=1} (-i ad_X)^m (P/m! + ([P] - P)/(m+1)!)` at one angle.
fn squared_remainder(p: &CMat, bracket: &CMat, x: &CMat) -> (CMat, usize) {
    let dim = p.nrows();
    let scale = frobenius(p).max(frobenius(bracket));
    let mut out = CMat::zeros(dim, dim);
    if scale == 0.0 {
        return (out, 0);
    }
    let mut chain_p = p.clone();
    let mut chain_b = bracket.clone();
    let mut fact = 1.0;
    for m in 1..=MAX_LEVELS {
        chain_p = minus_i_ad(&chain_p, x);
        chain_b = minus_i_ad(&chain_b, x);
        fact *= m as f64;
        let wp = 1.0 / fact - 1.0 / (fact * (m + 1) as f64);
        let wb = 1.0 / (fact * (m + 1) as f64);
        let term = &chain_p * c(wp) + &chain_b * c(wb);
        let size = frobenius(&term);
        out += term;
        if size <= 1e-18 * scale {
            return (out, m);
        }
    }
    (out, MAX_LEVELS)
}

/// `-i [F; X]`.
fn minus_i_ad(f: &CMat, x: &CMat) -> CMat {
    let fx = matmul(f, x);
    let comm = gemm(c(-1.0), x, f, c(1.0), fx);
    comm * C64::new(0.0, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;

    fn herm(dim: usize, seed: f64) -> CMat {
        let m = CMat::from_fn(dim, dim, |i, j| {
            C64::new((seed * (i + 2 * j + 1) as f64).sin(), (seed * (3 * i + j) as f64).cos())
        });
        (&m + m.adjoint()) * c(0.5)
    }

    fn pair(k: Vec<i32>, m: CMat) -> QPOperator {
        let neg = k.iter().map(|x| -x).collect();
        let n = k.len();
        QPOperator::from_modes(n, m.nrows(), [(neg, m.adjoint()), (k, m)]).unwrap()
    }

    #[test]
    fn commuting_family_gives_xdot() {
        let b = herm(4, 0.3) * c(0.05);
        let x = pair(vec![1], b.clone());
        let omega = [1.37];
        let phi = [0.4];
        let (y, _) = y_correction(&x, &omega, &phi, 6).unwrap();
        let xdot = x.dot_derivative(&omega).eval(&phi);
        assert!(frobenius(&(y - xdot)) < 1e-13);
    }

    #[test]
    fn stationary_generator_has_no_correction() {
        let x = QPOperator::stationary(1, herm(5, 0.8) * c(0.1));
        let (y, _) = y_correction(&x, &[1.2], &[0.3], 4).unwrap();
        assert!(frobenius(&y) == 0.0);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let x = pair(vec![1, 0], herm(5, 0.4) * c(0.03)).plus(&QPOperator::stationary(2, herm(5, 1.1) * c(0.05)));
        let omega = [1.2, 1.9];
        let phi = [0.7, 2.1];
        let (y, change) = y_correction(&x, &omega, &phi, 8).unwrap();
        assert!(change < 1e-12);
        assert!(frobenius(&(y - y_exact(&x, &omega, &phi))) < 1e-12);
    }

    #[test]
    fn scalar_operator_is_invariant() {
        let f = QPOperator::stationary(1, CMat::identity(4, 4) * c(2.5));
        let x = pair(vec![1], herm(4, 0.9) * c(0.04));
        let grid = AngleGrid::for_kmax(1, 3);
        let out = lie_transform(&f, &x, &grid).unwrap();
        assert!(out.op.minus(&f).analytic_norm(0.0, SobolevFrame::L2).unwrap() < 1e-12);
        assert!(out.unitarity_defect <= 1e-12);
    }

    #[test]
    fn lie_transform_preserves_frozen_spectra() {
        let f = QPOperator::stationary(1, herm(6, 0.6));
        let x = pair(vec![1], herm(6, 0.2) * c(0.03));
        let phi = [0.9];
        let u = expi_herm(&x.eval(&phi), 1.0);
        assert!(unitarity_defect(&u) < 1e-12);
        let g = matmul(&matmul(&u, &f.eval(&phi)), &u.adjoint());
        let (a, _) = eigh(&f.eval(&phi));
        let (b, _) = eigh(&g);
        assert!(a.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn diagonal_stationary_perturbation_is_a_fixed_point() {
        let lambda = [1.0, 3.0, 5.0, 7.0];
        let diag = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.1), c(0.2), c(-0.1), c(0.05)]));
        let p = QPOperator::stationary(1, diag);
        let grid = AngleGrid::for_kmax(1, 1);
        let params = DiophantineParams::new(0.1, 1.5, 1);
        let step = kam_step(&lambda, &p, &[1.3], &params, 1.0, &grid, 0.5, 0.1).unwrap();
        assert!(step.p_plus.analytic_norm(0.0, SobolevFrame::L2).unwrap() < 1e-15);
        let expect = [1.1, 3.2, 4.9, 7.05];
        assert!(step.a_plus.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
