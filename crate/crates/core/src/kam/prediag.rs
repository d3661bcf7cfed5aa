use crate::error::{invalid, KamError, Result};
use crate::linalg::{expi_herm, is_hermitian, matmul, spectral_norm, C64, CMat};

use super::{distance, DiagonalHamiltonian};

#[derive(Clone, Debug)]
pub struct Prediagonalization {
    /// One unitary per frequency sample, `U (Lambda + eps Ra) U^dagger` diagonal.
    pub u1: Vec<CMat>,
    pub lambda0: DiagonalHamiltonian,
    /// `nu_j = (lambda0_j - lambda'_j) j^delta / eps`, per sample.
    pub nu: Vec<Vec<f64>>,
    pub nu_sup: f64,
    /// Max finite-difference quotient of `nu_j` over the samples.
    pub dnu_sup: f64,
    /// Off-diagonal norm before each conjugation, per sample.
    pub history: Vec<Vec<f64>>,
    /// Mean log-log slope of successive off-diagonal norms (2 for quadratic).
    pub contraction_slope: f64,
}

/// Removes the off-diagonal part of `Lambda + eps Ra` by repeated
/// conjugations `X_ij = -i M_ij / (M_ii - M_jj)`.
pub fn prediagonalize(
    lambda: &DiagonalHamiltonian,
    ra: &CMat,
    eps: f64,
    max_iters: usize,
    tol: f64,
    delta: f64,
) -> Result<Prediagonalization> {
    let dim = lambda.dim();
    if ra.nrows() != dim || ra.ncols() != dim || !is_hermitian(ra, 1e-12) {
        return invalid("Ra must be a selfadjoint matrix of the basis size");
    }
    let size = eps.abs() * spectral_norm(ra);
    if size > 0.1 * lambda.k0 {
        return invalid(format!(
            "eps ||Ra|| = {size:.3e} exceeds 0.1 K0 = {:.3e}",
            0.1 * lambda.k0
        ));
    }
    let mut u1 = Vec::new();
    let mut lambda0 = Vec::new();
    let mut history = Vec::new();
    for lam in &lambda.lambda {
        let mut m = ra * C64::new(eps, 0.0);
        for (i, l) in lam.iter().enumerate() {
            m[(i, i)] += l;
        }
        let mut u = CMat::identity(dim, dim);
        let mut trace = Vec::new();
        loop {
            let off = spectral_norm(&off_diagonal(&m));
            trace.push(off);
            if off <= tol {
                break;
            }
            if trace.len() > max_iters {
                return Err(KamError::NonConvergent(format!(
                    "off-diagonal norms {trace:.3?} did not reach {tol:.1e}"
                )));
            }
            let x = CMat::from_fn(dim, dim, |i, j| {
                if i == j {
                    C64::new(0.0, 0.0)
                } else {
                    m[(i, j)] * C64::new(0.0, -1.0) / (m[(i, i)].re - m[(j, j)].re)
                }
            });
            let step = expi_herm(&x, 1.0);
            m = matmul(&matmul(&step, &m), &step.adjoint());
            u = matmul(&step, &u);
        }
        lambda0.push((0..dim).map(|i| m[(i, i)].re).collect::<Vec<f64>>());
        u1.push(u);
        history.push(trace);
    }
    let nu: Vec<Vec<f64>> = lambda0
        .iter()
        .zip(&lambda.lambda)
        .map(|(new, old)| {
            new.iter()
                .zip(old)
                .enumerate()
                .map(|(j, (a, b))| {
                    if eps == 0.0 {
                        0.0
                    } else {
                        (a - b) * ((j + 1) as f64).powf(delta) / eps
                    }
                })
                .collect()
        })
        .collect();
    let nu_sup = nu.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dnu_sup: f64 = 0.0;
    for a in 0..nu.len() {
        for b in 0..a {
            let dw = distance(&lambda.omegas[a], &lambda.omegas[b]);
            for (x, y) in nu[a].iter().zip(&nu[b]) {
                dnu_sup = dnu_sup.max((x - y).abs() / dw);
            }
        }
    }
    let contraction_slope = mean_slope(&history);
    let lambda0 = DiagonalHamiltonian::new(
        lambda.omegas.clone(),
        lambda0,
        lambda.d,
        lambda.params,
    )?;
    Ok(Prediagonalization {
        u1,
        lambda0,
        nu,
        nu_sup,
        dnu_sup,
        history,
        contraction_slope,
    })
}

fn off_diagonal(m: &CMat) -> CMat {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        out[(i, i)] = C64::new(0.0, 0.0);
    }
    out
}

/// Average of `log e_{l+2}/e_{l+1} / log e_{l+1}/e_l` over consecutive
/// nonzero triples above rounding.
fn mean_slope(history: &[Vec<f64>]) -> f64 {
    let mut slopes = Vec::new();
    for trace in history {
        for w in trace.windows(3) {
            if w.iter().all(|v| *v > 1e-13) {
                slopes.push((w[2] / w[1]).ln() / (w[1] / w[0]).ln());
            }
        }
    }
    if slopes.is_empty() {
        f64::NAN
    } else {
        slopes.iter().sum::<f64>() / slopes.len() as f64
    }
}
