//! Randomized checks of the operator estimates used by the iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{weighted_operator_norm, SobolevFrame};
use crate::diophantine::DiophantineParams;
use crate::error::{KamError, Result};
use crate::linalg::{c, expi_herm, matmul, C64, CMat};

use super::homological::quantum_homological;
use super::lie::{lie_transform, y_exact, RELIE_GUARD};
use super::{lipschitz_norm, AngleGrid, QPOperator};

#[derive(Clone, Debug, Serialize)]
pub struct LemmaCheck {
    pub name: String,
    pub trials: usize,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
    pub violations: usize,
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn check(&self, name: &str) -> Option<&LemmaCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tally {
    check: LemmaCheck,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally {
            check: LemmaCheck {
                name: name.to_string(),
                trials: 0,
                worst_ratio: 0.0,
                violations: 0,
                counterexample: None,
            },
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, context: impl FnOnce() -> String) {
        self.check.trials += 1;
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        self.check.worst_ratio = self.check.worst_ratio.max(ratio);
        if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
            self.check.violations += 1;
            if self.check.counterexample.is_none() {
                self.check.counterexample = Some(format!("lhs {lhs:.17e} rhs {rhs:.17e}; {}", context()));
            }
        }
    }
}

const R: f64 = 0.4;
const SIGMA: f64 = 0.1;
const FINE_KMAX: i32 = 16;

/// Runs every check; any violation is returned as an error carrying the
/// serialized counterexamples.
pub fn lemma_suite(seed: u64, trials: usize) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = SobolevFrame::L2;
    let grid = AngleGrid::for_kmax(1, FINE_KMAX);
    let dim = 6;

    let mut relie = Tally::new("relie");
    let mut relie_lip = Tally::new("relie_lipschitz");
    let mut estia = Tally::new("estia");
    let mut estiy = Tally::new("estiy");
    let mut pos96 = Tally::new("pos96");
    let mut rico = Tally::new("rico_closed_form");
    let mut rico_tail = Tally::new("rico_tail");
    let mut rico_weighted = Tally::new("rico_weighted_sum");

    let h = 1e-3;
    for trial in 0..trials {
        // Lie transform of a bounded family.
        let size = rng.random_range(0.05..0.95) * RELIE_GUARD;
        let x = scaled(random_qp(&mut rng, dim, 2), R - SIGMA, size)?;
        let x1 = random_qp(&mut rng, dim, 2);
        let f = random_qp(&mut rng, dim, 2);
        let f1 = random_qp(&mut rng, dim, 2);
        let lie = lie_transform(&f, &x, &grid)?.op.minus(&f);
        let lhs = lie.analytic_norm(R - SIGMA, frame)?;
        let rhs = 4.0 * size * f.analytic_norm(R, frame)?;
        relie.record(lhs, rhs, || format!("trial {trial}, ||X|| = {size:.6e}"));

        let xb = x.plus(&x1.scale(h * size));
        let fb = f.plus(&f1.scale(h));
        if xb.analytic_norm(R - SIGMA, frame)? < RELIE_GUARD {
            let lie_b = lie_transform(&fb, &xb, &grid)?.op.minus(&fb);
            let (wa, wb) = (vec![1.3], vec![1.3 + h]);
            let lip = |a: &QPOperator, b: &QPOperator, r: f64| {
                lipschitz_norm(&[(wa.clone(), a.clone()), (wb.clone(), b.clone())], r, frame)
            };
            let x_sup = size.max(xb.analytic_norm(R - SIGMA, frame)?);
            let f_sup = f.analytic_norm(R, frame)?.max(fb.analytic_norm(R, frame)?);
            let lhs = lip(&lie, &lie_b, R - SIGMA)?;
            let rhs = 4.0 * x_sup * lip(&f, &fb, R)? + 2.0 * lip(&x, &xb, R - SIGMA)? * f_sup;
            relie_lip.record(lhs, rhs, || format!("trial {trial}"));
        }

        // Second-order remainder of the unbounded diagonal part.
        let lambda: Vec<f64> = (1..=dim).map(|j| 2.0 * j as f64 - 1.0).collect();
        let omega = [rng.random_range(1.2..1.8)];
        let p = scaled(random_qp(&mut rng, dim, 2), R - 2.0 * SIGMA, rng.random_range(0.002..0.02))?;
        let params = DiophantineParams::new(1e-3, 1.5, 2);
        if let Ok(sol) = quantum_homological(&lambda, &p, &omega, &params, 1.0) {
            let xs = sol.x;
            let x_size = xs.analytic_norm(R - SIGMA, frame)?;
            if x_size < RELIE_GUARD {
                let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(dim, lambda.iter().map(|v| c(*v))));
                let samples: Vec<CMat> = grid
                    .points
                    .iter()
                    .map(|phi| {
                        let xv = xs.eval(phi);
                        let u = expi_herm(&xv, 1.0);
                        let lie = matmul(&matmul(&u, &diag), &u.adjoint());
                        let a1 = (matmul(&diag, &xv) - matmul(&xv, &diag)) * C64::new(0.0, -1.0);
                        lie - &diag - a1
                    })
                    .collect();
                let lhs = grid.project(&samples).analytic_norm(R - 2.0 * SIGMA, frame)?;
                let rhs = 4.0 * x_size * (x_size / SIGMA + 2.0 * p.analytic_norm(R - 2.0 * SIGMA, frame)?);
                estia.record(lhs, rhs, || format!("trial {trial}, omega = {}", omega[0]));
            }
        }

        // Time-dependent correction of the transform.
        let omega = [rng.random_range(1.0..2.0)];
        let size = rng.random_range(0.01..0.3);
        let xy = scaled(random_qp(&mut rng, dim, 2), R - SIGMA, size)?;
        let lhs = y_minus_xdot(&xy, &omega, &grid, frame)?;
        let rhs = 4.0 / SIGMA * size * size;
        estiy.record(lhs, rhs, || format!("trial {trial}, omega = {}", omega[0]));
    }

    let weighted = SobolevFrame::new(1.0, 0.5)?;
    for trial in 0..trials {
        let p = CMat::from_fn(32, 32, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let ratio = pos96_ratio(&p, weighted)?;
        pos96.record(ratio, std::f64::consts::PI / 3f64.sqrt(), || format!("trial {trial}"));
    }

    let mut sets = vec![(1.0, 0u32, 0.125), (3.0, 2, 1.0 / 96.0)];
    while sets.len() < 20 {
        let c1 = rng.random_range(0.5..4.0);
        let a = rng.random_range(0..4u32);
        let q = rng.random_range(0.05..0.5);
        sets.push((c1, a, q / (4f64.powi(a as i32) * c1)));
    }
    for (c1, a, s0) in sets {
        let iterated = rico_iterate(c1, a, s0, 8);
        for (nu, value) in iterated.iter().enumerate() {
            if *value < 1e-280 {
                continue;
            }
            let closed = rico_closed_form(c1, a, s0, nu as u32);
            rico.record((closed - value).abs(), 1e-12 * value.abs(), || {
                format!("c1 = {c1}, a = {a}, s0 = {s0}, nu = {nu}")
            });
        }
        let q = 4f64.powi(a as i32) * c1 * s0;
        let long = rico_iterate(c1, a, s0, 40);
        for k in 0..6u32 {
            let tail: f64 = long[k as usize..].iter().sum();
            let bound = 2.0 * q.powf(2f64.powi(k as i32)) / (c1 * 2f64.powi((a * k) as i32));
            rico_tail.record(tail, bound, || format!("c1 = {c1}, a = {a}, s0 = {s0}, k = {k}"));
        }
        let weighted_sum: f64 = long.iter().enumerate().map(|(nu, s)| (nu as f64).powi(2) * s).sum();
        rico_weighted.record(weighted_sum, rico_weight_constant(2) * s0, || {
            format!("c1 = {c1}, a = {a}, s0 = {s0}")
        });
    }

    let checks: Vec<LemmaCheck> = [relie, relie_lip, estia, estiy, pos96, rico, rico_tail, rico_weighted]
        .into_iter()
        .map(|t| t.check)
        .collect();
    let report = LemmaReport { seed, checks };
    if report.violations() > 0 {
        let failing: Vec<&LemmaCheck> = report.checks.iter().filter(|c| c.violations > 0).collect();
        return Err(KamError::BoundViolation(
            serde_json::to_string(&failing).unwrap_or_else(|e| e.to_string()),
        ));
    }
    Ok(report)
}

fn random_qp(rng: &mut ChaCha8Rng, dim: usize, kmax: i32) -> QPOperator {
    let mut op = QPOperator::zero(1, dim);
    for k in 0..=kmax {
        let m = CMat::from_fn(dim, dim, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        if k == 0 {
            op.modes.insert(vec![0], (&m + m.adjoint()) * c(0.5));
        } else {
            op.modes.insert(vec![-k], m.adjoint());
            op.modes.insert(vec![k], m);
        }
    }
    op
}

fn scaled(op: QPOperator, r: f64, size: f64) -> Result<QPOperator> {
    let norm = op.analytic_norm(r, SobolevFrame::L2)?;
    Ok(op.scale(size / norm))
}

fn y_minus_xdot(
    x: &QPOperator,
    omega: &[f64],
    grid: &AngleGrid,
    frame: SobolevFrame,
) -> Result<f64> {
    let xdot = x.dot_derivative(omega);
    let samples: Vec<CMat> = grid
        .points
        .iter()
        .map(|phi| y_exact(x, omega, phi) - xdot.eval(phi))
        .collect();
    grid.project(&samples).analytic_norm(R - 2.0 * SIGMA, frame)
}

/// `||X||_frame / ||P||_frame` for `X_ij = |P_ij| / |i - j|`, `X_ii = 0`,
/// with the weights applied to both matrices.
pub fn pos96_ratio(p: &CMat, frame: SobolevFrame) -> Result<f64> {
    let x = CMat::from_fn(p.nrows(), p.ncols(), |i, j| {
        if i == j {
            C64::new(0.0, 0.0)
        } else {
            c(p[(i, j)].norm() / (i as f64 - j as f64).abs())
        }
    });
    Ok(weighted_operator_norm(&x, frame)? / weighted_operator_norm(p, frame)?)
}

/// `s_{nu+1} = c1 2^{a nu} s_nu^2`, returning `s_0 ..= s_{nu_max}`.
pub fn rico_iterate(c1: f64, a: u32, s0: f64, nu_max: usize) -> Vec<f64> {
    let mut out = vec![s0];
    for nu in 0..nu_max {
        let s = out[nu];
        out.push(c1 * 2f64.powi((a as usize * nu) as i32) * s * s);
    }
    out
}

/// Exact solution `s_nu = (2^a c1 s0)^{2^nu} / (c1 2^{a(nu+1)})`.
pub fn rico_closed_form(c1: f64, a: u32, s0: f64, nu: u32) -> f64 {
    let base = 2f64.powi(a as i32) * c1 * s0;
    base.powf(2f64.powi(nu as i32)) / (c1 * 2f64.powi((a * (nu + 1)) as i32))
}

/// `(2^{2a} c1 s0)^{2^nu} / (c1 2^{a nu})`, an upper bound of the iteration.
pub fn rico_printed(c1: f64, a: u32, s0: f64, nu: u32) -> f64 {
    let base = 4f64.powi(a as i32) * c1 * s0;
    base.powf(2f64.powi(nu as i32)) / (c1 * 2f64.powi((a * nu) as i32))
}

/// `sum_nu nu^b 2^{1 - 2^nu}`: bounds `sum nu^b s_nu / s_0` whenever
/// `2^{2a} c1 s0 <= 1/2`.
fn rico_weight_constant(b: i32) -> f64 {
    (1..12).map(|nu| (nu as f64).powi(b) * 2f64.powf(1.0 - 2f64.powi(nu))).sum()
}
