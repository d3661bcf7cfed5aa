use serde::Serialize;

use crate::basis::SobolevFrame;
use crate::diophantine::l1;
use crate::error::{invalid, KamError, Result};
use crate::linalg::{c, expi_herm, matmul, CMat};

use super::lie::{lie_transform, y_exact};
use super::run::run_kam;
use super::{AngleGrid, DiagonalHamiltonian, KamSchedule, QPOperator, TransformChain};

/// Fourier multiplier of the smoothing kernel: 1 on `|y| <= 1/2`, 0 on
/// `|y| >= 1`, `C^infinity` in between.
pub fn smoothing_multiplier(y: f64) -> f64 {
    let y = y.abs();
    if y <= 0.5 {
        return 1.0;
    }
    if y >= 1.0 {
        return 0.0;
    }
    let t = 2.0 * (1.0 - y);
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    f(t) / (f(t) + f(1.0 - t))
}

/// `P_k -> m(r |k|) P_k`.
pub fn smoothing_operator(p: &QPOperator, r: f64) -> Result<QPOperator> {
    if !(r > 0.0 && r <= 1.0) {
        return invalid("smoothing radius must lie in (0, 1]");
    }
    let modes = p
        .modes
        .iter()
        .filter_map(|(k, m)| {
            let w = smoothing_multiplier(r * l1(k) as f64);
            (w > 0.0).then(|| (k.clone(), m * c(w)))
        })
        .collect();
    Ok(QPOperator {
        n: p.n,
        dim: p.dim,
        modes,
    })
}

/// Conjugates `diag(lambda) + R` through every generator of `chain`
/// (`H -> e^{iX} H e^{-iX} - Y_X`) directly on the grid; returns the result,
/// the size of its part other than the stationary diagonal, and the grid
/// samples not represented by the retained modes.
pub fn conjugate_through(
    chain: &TransformChain,
    lambda: &[f64],
    r: &QPOperator,
    omega: &[f64],
    grid: &AngleGrid,
) -> Result<(QPOperator, f64, f64)> {
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        lambda.len(),
        lambda.iter().map(|v| c(*v)),
    ));
    let mut samples: Vec<CMat> = grid.points.iter().map(|phi| &diag + r.eval(phi)).collect();
    for x in &chain.generators {
        for (phi, h) in grid.points.iter().zip(samples.iter_mut()) {
            let u = expi_herm(&x.eval(phi), 1.0);
            *h = matmul(&matmul(&u, h), &u.adjoint()) - y_exact(x, omega, phi);
        }
    }
    let op = grid.project(&samples);
    let moving = op
        .without_stationary_diagonal()
        .analytic_norm(0.0, SobolevFrame::L2)?;
    let aliasing = grid.projection_residual(&samples, &op);
    Ok((op, moving, aliasing))
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessStage {
    pub nu: usize,
    pub r_nu: f64,
    /// `||R^(nu) - R^(nu-1)||_{r_nu}`; the full `R^(0)` at `nu = 0`.
    pub increment: f64,
    /// `eps M r_nu^ell (1 + 2^{2 ell})`.
    pub increment_scale: f64,
    /// Sum of the sizes of the generators added at this stage.
    pub chain_difference: f64,
    /// `r_nu^{m + n + tau}`.
    pub chain_scale: f64,
    pub kam_stages: usize,
    /// Time-dependent part left by the stage's reduction.
    pub remainder: f64,
    /// Same quantity from conjugating `A0 + R^(nu)` through the whole chain.
    pub direct_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub stages: Vec<SmoothnessStage>,
    pub lambda_inf: Vec<f64>,
    /// `max increment / increment_scale`.
    pub c1_fit: f64,
    /// `max chain_difference / (2 chain_scale)`.
    pub cu_fit: f64,
    pub converged: bool,
    /// Grid samples of the direct conjugation not represented by the modes.
    pub aliasing: f64,
    #[serde(skip)]
    pub chain: TransformChain,
}

/// Telescoping reduction of `A0 + eps R0` for `C^ell` data: the smoothed
/// perturbations `eps S_{r_nu} R0`, `r_nu = eps^{1/ell} 2^{-nu}`, are
/// reduced one increment at a time through the accumulated chain.
#[allow(clippy::too_many_arguments)]
pub fn finite_smoothness_loop(
    a0: &DiagonalHamiltonian,
    r0: &QPOperator,
    omega: &[f64],
    m: f64,
    ell: f64,
    eps: f64,
    schedule: &KamSchedule,
    max_nu: usize,
) -> Result<SmoothnessReport> {
    let params = &a0.params;
    let b = KamSchedule::loss_exponent(r0.n, params.tau);
    if !(ell > m + b) {
        return invalid(format!("need ell > m + b = {}", m + b));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    if r0.kmax() > params.kmax {
        return invalid("R0 has modes beyond Kmax");
    }
    let grid = AngleGrid::for_kmax(r0.n, params.kmax);
    let big_m: f64 = r0
        .modes
        .iter()
        .map(|(k, p)| (1.0 + l1(k) as f64).powf(ell) * crate::linalg::spectral_norm(p))
        .sum();
    let b1 = m + r0.n as f64 + params.tau;
    let radius0 = eps.powf(1.0 / ell);
    let mut chain = TransformChain::identity();
    let mut lambda = a0.primary().to_vec();
    let mut remainder = QPOperator::zero(r0.n, r0.dim);
    let mut previous = QPOperator::zero(r0.n, r0.dim);
    let mut stages = Vec::new();
    let mut converged = false;
    let mut aliasing: f64 = 0.0;
    for nu in 0..=max_nu {
        let r_nu = radius0 / 2f64.powi(nu as i32);
        let current = smoothing_operator(r0, r_nu.min(1.0))?.scale(eps);
        let increment_op = current.minus(&previous);
        let increment = increment_op.analytic_norm(r_nu, SobolevFrame::L2)?;
        let mut moved = increment_op.clone();
        for x in &chain.generators {
            moved = lie_transform(&moved, x, &grid).map_err(|e| e.at_stage(nu))?.op;
        }
        let start = DiagonalHamiltonian::single(omega.to_vec(), lambda.clone(), a0.d, *params)?;
        let run = run_kam(&start, &remainder.plus(&moved), omega, schedule).map_err(|e| match e {
            KamError::Stage { source, .. } => source.at_stage(nu),
            other => other.at_stage(nu),
        })?;
        let chain_difference: f64 = run
            .chain
            .generators
            .iter()
            .map(|x| x.analytic_norm(0.0, SobolevFrame::L2).unwrap_or(f64::NAN))
            .sum();
        lambda = run.lambda_inf.clone();
        remainder = run.remainder.clone();
        chain.generators.extend(run.chain.generators.iter().cloned());
        let (_, direct_residual, stage_aliasing) =
            conjugate_through(&chain, a0.primary(), &current, omega, &grid)?;
        aliasing = aliasing.max(stage_aliasing);
        stages.push(SmoothnessStage {
            nu,
            r_nu,
            increment,
            increment_scale: eps * big_m * r_nu.powf(ell) * (1.0 + 2f64.powf(2.0 * ell)),
            chain_difference,
            chain_scale: r_nu.powf(b1),
            kam_stages: run.chain.len(),
            remainder: run.remainder_norm(),
            direct_residual,
        });
        previous = current;
        let saturated = r0
            .modes
            .keys()
            .all(|k| smoothing_multiplier(r_nu * l1(k) as f64) == 1.0);
        if saturated {
            converged = true;
            break;
        }
    }
    let c1_fit = stages
        .iter()
        .map(|s| s.increment / s.increment_scale)
        .fold(0.0, f64::max);
    let cu_fit = stages
        .iter()
        .map(|s| s.chain_difference / (2.0 * s.chain_scale))
        .fold(0.0, f64::max);
    Ok(SmoothnessReport {
        stages,
        lambda_inf: lambda,
        c1_fit,
        cu_fit,
        converged,
        aliasing,
        chain,
    })
}
