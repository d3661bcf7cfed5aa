use std::collections::BTreeMap;

use crate::diophantine::{dot, l1, DiophantineParams};
use crate::error::{invalid, KamError, Result};
use crate::linalg::{spectral_norm, C64, CMat};

use super::{gap_weight, sample_angles, QPOperator};
use crate::basis::SobolevFrame;

#[derive(Clone, Debug)]
pub struct HomologicalSolution {
    pub x: QPOperator,
    /// Max over the sample angles of the equation residual.
    pub residual: f64,
    /// Smallest `|lambda_i - lambda_j + omega.k|` over solved entries.
    pub min_divisor: f64,
    /// Smallest divisor-to-bound ratio (>= 1 when every check passed).
    pub min_ratio: f64,
}

/// Solves `-i[A, X] - omega.d_phi X + P - [P] = 0` mode by mode.
///
/// Every divisor is checked against `gamma max(1, ceil|i^d - j^d|) / (1 + |k|^tau)`
/// before it is used.
pub fn quantum_homological(
    lambda: &[f64],
    p: &QPOperator,
    omega: &[f64],
    params: &DiophantineParams,
    d: f64,
) -> Result<HomologicalSolution> {
    let dim = lambda.len();
    if p.dim != dim || omega.len() != p.n {
        return invalid("operator, eigenvalues and frequency disagree in size");
    }
    let zero_k = vec![0; p.n];
    let mut modes = BTreeMap::new();
    let mut min_divisor = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    for (k, pk) in &p.modes {
        let wk = dot(k, omega);
        let knorm = l1(k) as f64;
        let stationary = *k == zero_k;
        let mut xk = CMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                if stationary && i == j {
                    continue;
                }
                let divisor = lambda[i] - lambda[j] + wk;
                let m = gap_weight(i + 1, j + 1, d).ceil().max(1.0);
                let bound = params.gamma * m / (1.0 + knorm.powf(params.tau));
                if divisor.abs() < bound {
                    return Err(KamError::Divisor {
                        i: i + 1,
                        j: j + 1,
                        k: k.clone(),
                        divisor,
                        bound,
                    });
                }
                min_divisor = min_divisor.min(divisor.abs());
                min_ratio = min_ratio.min(divisor.abs() / bound);
                xk[(i, j)] = pk[(i, j)] / C64::new(0.0, divisor);
            }
        }
        modes.insert(k.clone(), xk);
    }
    let x = QPOperator {
        n: p.n,
        dim,
        modes,
    };
    let residual = homological_residual(lambda, p, &x, omega);
    let scale = p.analytic_norm(0.0, SobolevFrame::L2)?;
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(KamError::Residual(format!(
            "homological residual {residual:.3e} exceeds 1e-10 * {scale:.3e}"
        )));
    }
    Ok(HomologicalSolution {
        x,
        residual,
        min_divisor,
        min_ratio,
    })
}

/// `max_phi ||-i[A, X] - omega.d_phi X + P - [P]||` over 16 fixed angles.
pub fn homological_residual(lambda: &[f64], p: &QPOperator, x: &QPOperator, omega: &[f64]) -> f64 {
    let dim = lambda.len();
    let bracket = p.stationary_diagonal();
    let xdot_op = x.dot_derivative(omega);
    let mut worst: f64 = 0.0;
    for phi in sample_angles(p.n, 16) {
        let xv = x.eval(&phi);
        let xdot = xdot_op.eval(&phi);
        let mut r = p.eval(&phi) - xdot;
        for i in 0..dim {
            for j in 0..dim {
                r[(i, j)] += C64::new(0.0, -1.0) * xv[(i, j)] * (lambda[i] - lambda[j]);
            }
            r[(i, i)] -= bracket[i];
        }
        worst = worst.max(spectral_norm(&r));
    }
    worst
}
