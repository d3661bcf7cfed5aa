use std::collections::BTreeMap;

use serde::Serialize;

use crate::basis::{solve_h0, EigenBasis, GridSpec, PotentialSpec, SobolevFrame};
use crate::diophantine::DiophantineParams;
use crate::error::{invalid, KamError, Result};
use crate::linalg::{c, spectral_norm, C64, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::symbol::Symbol;

use super::lie::{kam_step, StepDiagnostics};
use super::prediag::{prediagonalize, Prediagonalization};
use super::{AngleGrid, DiagonalHamiltonian, KamSchedule, QPOperator, TransformChain};

/// `H0 + eps W(omega t)` realized on a truncated eigenbasis.
#[derive(Clone, Debug)]
pub struct ForcedProblem {
    pub basis: EigenBasis,
    pub omega: Vec<f64>,
    pub eps: f64,
    /// Weyl matrices of `W`, mode by mode, in the eigenbasis (unscaled).
    pub w: QPOperator,
    /// Diagonal part after removing the stationary perturbation.
    pub a0: DiagonalHamiltonian,
    /// `eps (W - W_0)` in the prediagonalized frame.
    pub p0: QPOperator,
    pub prediag: Option<Prediagonalization>,
}

impl ForcedProblem {
    /// Full Hamiltonian `diag(lambda_v) + eps W` in the eigenbasis.
    pub fn hamiltonian(&self) -> QPOperator {
        let mut h = self.w.scale(self.eps);
        let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.basis.n,
            self.basis.lambda_v.iter().map(|v| c(*v)),
        ));
        h = h.plus(&QPOperator::stationary(self.w.n, diag));
        h
    }

    pub fn u1(&self) -> Option<CMat> {
        self.prediag.as_ref().map(|p| p.u1[0].clone())
    }

    /// [`run_kam`] on the prediagonalized problem; the chain starts with `U1`.
    pub fn reduce(&self, schedule: &KamSchedule) -> Result<KamRun> {
        let mut run = run_kam(&self.a0, &self.p0, &self.omega, schedule)?;
        run.chain.u1 = self.u1();
        Ok(run)
    }
}

/// Builds the forced problem for a symbol `W` and prediagonalizes its
/// stationary part.
pub fn forced_problem(
    potential: &PotentialSpec,
    n_basis: usize,
    w: &Symbol,
    eps: f64,
    omega: &[f64],
    params: &DiophantineParams,
) -> Result<ForcedProblem> {
    if omega.len() != w.n {
        return invalid("omega and W disagree on the number of frequencies");
    }
    let basis = solve_h0(potential, n_basis, GridSpec::for_basis(potential, n_basis))?;
    let mut modes: BTreeMap<Vec<i32>, CMat> = BTreeMap::new();
    let mut cache: BTreeMap<(u32, u32), CMat> = BTreeMap::new();
    for (m, coeff) in &w.terms {
        let op = cache
            .entry((m.a, m.b))
            .or_insert_with(|| basis.weyl_monomial(m.a, m.b))
            .clone();
        let entry = modes
            .entry(m.k.clone())
            .or_insert_with(|| CMat::zeros(n_basis, n_basis));
        *entry += op * *coeff;
    }
    let w_op = QPOperator::from_modes(w.n, n_basis, modes)?;
    ForcedProblem::new(basis, w_op, eps, omega, params)
}

impl ForcedProblem {
    /// `diag(lambda_v) + eps W` for `W` already given in the eigenbasis.
    pub fn new(
        basis: EigenBasis,
        w: QPOperator,
        eps: f64,
        omega: &[f64],
        params: &DiophantineParams,
    ) -> Result<ForcedProblem> {
        if omega.len() != w.n || w.dim != basis.n {
            return invalid("W, omega and the basis disagree in size");
        }
        let l = basis.potential.l as f64;
        let lambda =
            DiagonalHamiltonian::single(omega.to_vec(), basis.lambda_v.clone(), 2.0 * l / (l + 1.0), *params)?;
        let zero_k = vec![0; w.n];
        let moving = QPOperator {
            n: w.n,
            dim: w.dim,
            modes: w
                .modes
                .iter()
                .filter(|(k, _)| **k != zero_k)
                .map(|(k, m)| (k.clone(), m.clone()))
                .collect(),
        }
        .scale(eps);
        let (a0, p0, prediag) = match w.mode(&zero_k) {
            Some(ra) if eps != 0.0 => {
                let pre = prediagonalize(&lambda, ra, eps, 30, 1e-13, 0.0)?;
                let p0 = moving.conjugate(&pre.u1[0]);
                (pre.lambda0.clone(), p0, Some(pre))
            }
            _ => (lambda, moving, None),
        };
        Ok(ForcedProblem {
            basis,
            omega: omega.to_vec(),
            eps,
            w,
            a0,
            p0,
            prediag,
        })
    }
}

/// Bounded selfadjoint perturbation with modes `k` and `-k` for each given
/// `k`: entries `u_ij rho^{|i-j|}` with `u` uniform in the unit square,
/// every mode scaled to unit spectral norm.
pub fn banded_perturbation(n: usize, dim: usize, ks: &[Vec<i32>], rho: f64, seed: u64) -> Result<QPOperator> {
    if !(rho > 0.0 && rho < 1.0) {
        return invalid("band decay must lie in (0, 1)");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = BTreeMap::new();
    for k in ks {
        if k.len() != n {
            return invalid(format!("mode {k:?} does not have {n} entries"));
        }
        let raw = CMat::from_fn(dim, dim, |i, j| {
            let u = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            u * rho.powi((i as i32 - j as i32).abs())
        });
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        let m = if *k == neg { (&raw + raw.adjoint()) * c(0.5) } else { raw };
        let m = &m / c(spectral_norm(&m));
        modes.insert(neg, m.adjoint());
        modes.insert(k.clone(), m);
    }
    QPOperator::from_modes(n, dim, modes)
}

#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub stage: usize,
    pub r_l: f64,
    pub sigma_l: f64,
    pub eps1_measured: f64,
    pub eps1_scheduled: f64,
    pub gamma_l: f64,
    #[serde(rename = "K_l")]
    pub k_l: f64,
    pub min_divisor: f64,
    pub offdiag_norm: f64,
}

#[derive(Clone, Debug)]
pub struct KamRun {
    pub lambda_inf: Vec<f64>,
    /// `lambda_inf - lambda` of the starting diagonal.
    pub deviations: Vec<f64>,
    pub chain: TransformChain,
    pub ledger: Vec<LedgerEntry>,
    pub steps: Vec<StepDiagnostics>,
    /// `100 eps_machine max|lambda|`.
    pub floor: f64,
    pub floor_reached: bool,
    pub converged: bool,
    /// What is left after the last stage.
    pub remainder: QPOperator,
    /// `||P0||_r / r^b`, to compare with the smallness constant.
    pub initial_smallness: f64,
    /// Square-lemma constant fitted at stage 0.
    pub c_star: f64,
}

/// Iterates [`kam_step`] on shrinking strips until the perturbation drops
/// below `tol` or the rounding floor.
pub fn run_kam(
    a0: &DiagonalHamiltonian,
    p0: &QPOperator,
    omega: &[f64],
    schedule: &KamSchedule,
) -> Result<KamRun> {
    schedule.validate()?;
    let params = &a0.params;
    params.validate(p0.n)?;
    if p0.kmax() > params.kmax {
        return invalid(format!(
            "perturbation has modes up to |k| = {} beyond Kmax = {}",
            p0.kmax(),
            params.kmax
        ));
    }
    if p0.dim != a0.dim() || omega.len() != p0.n {
        return invalid("perturbation, eigenvalues and frequency disagree in size");
    }
    let start = a0.primary().to_vec();
    let scale = start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 100.0 * f64::EPSILON * scale;
    let b = KamSchedule::loss_exponent(p0.n, params.tau);
    let grid = AngleGrid::for_kmax(p0.n, params.kmax);
    let frame = schedule.frame;

    let mut lambda = start.clone();
    let mut p = p0.clone();
    let mut gamma = params.gamma;
    let mut chain = TransformChain::identity();
    let mut ledger = Vec::new();
    let mut steps: Vec<StepDiagnostics> = Vec::new();
    let mut scheduled = f64::NAN;
    let mut c_star = f64::NAN;
    let mut converged = false;
    let mut floor_reached = false;
    let initial_smallness = p0.analytic_norm(schedule.r, frame)? / schedule.r.powf(b);

    for stage in 0..=schedule.max_stages {
        let r_l = schedule.radius(stage);
        let sigma = schedule.sigma(stage + 1);
        let eps1 = p.analytic_norm(r_l, frame)?;
        let offdiag = p.without_stationary_diagonal().analytic_norm(r_l, frame)?;
        if stage == 0 {
            scheduled = eps1;
        } else if let Some(last) = ledger.last() {
            let last: &LedgerEntry = last;
            scheduled = c_star * last.eps1_scheduled.powi(2) / schedule.sigma(stage).powf(b);
            if eps1 >= last.eps1_measured && eps1 > floor && eps1 > schedule.tol {
                return Err(KamError::BoundViolation(format!(
                    "eps1 did not decrease: {eps1:.3e} after {:.3e}",
                    last.eps1_measured
                ))
                .at_stage(stage));
            }
        }
        let k_l = if eps1 > 0.0 {
            eps1.powf(-1.0 / (2.0 * params.tau))
        } else {
            f64::INFINITY
        };
        let mut entry = LedgerEntry {
            stage,
            r_l,
            sigma_l: sigma,
            eps1_measured: eps1,
            eps1_scheduled: scheduled,
            gamma_l: gamma,
            k_l,
            min_divisor: f64::NAN,
            offdiag_norm: offdiag,
        };
        if eps1 <= schedule.tol || eps1 <= floor {
            floor_reached = eps1 <= floor;
            converged = true;
            ledger.push(entry);
            break;
        }
        if stage == schedule.max_stages {
            ledger.push(entry);
            break;
        }
        let stage_params = DiophantineParams {
            gamma,
            ..*params
        };
        let step = kam_step(&lambda, &p, omega, &stage_params, a0.d, &grid, r_l, sigma)
            .map_err(|e| e.at_stage(stage))?;
        entry.min_divisor = step.diagnostics.min_divisor;
        if stage == 0 {
            c_star = step.diagnostics.square_constant;
        }
        ledger.push(entry);
        lambda = step.a_plus;
        p = step.p_plus;
        chain.generators.push(step.x);
        steps.push(step.diagnostics);
        gamma -= eps1.powf(schedule.d2);
        if gamma <= 0.0 {
            return Err(KamError::NonDiophantine(format!(
                "divisor constant exhausted after stage {stage}"
            ))
            .at_stage(stage));
        }
    }
    let deviations = lambda.iter().zip(&start).map(|(a, b)| a - b).collect();
    Ok(KamRun {
        lambda_inf: lambda,
        deviations,
        chain,
        ledger,
        steps,
        floor,
        floor_reached,
        converged,
        remainder: p,
        initial_smallness,
        c_star,
    })
}

impl KamRun {
    /// Ledger rows whose measured size is above the floor.
    pub fn stages_above_floor(&self) -> usize {
        self.ledger
            .iter()
            .filter(|e| e.eps1_measured > self.floor)
            .count()
    }

    /// `log(eps_l / eps_{l+1})` for consecutive rows above the floor.
    pub fn decrements(&self) -> Vec<f64> {
        let above: Vec<f64> = self
            .ledger
            .iter()
            .map(|e| e.eps1_measured)
            .filter(|e| *e > self.floor)
            .collect();
        above.windows(2).map(|w| (w[0] / w[1]).ln()).collect()
    }

    /// `eps_{l+1} / eps_l^2` for consecutive rows above the floor.
    pub fn contraction_constants(&self) -> Vec<f64> {
        let above: Vec<f64> = self
            .ledger
            .iter()
            .map(|e| e.eps1_measured)
            .filter(|e| *e > self.floor)
            .collect();
        above.windows(2).map(|w| w[1] / (w[0] * w[0])).collect()
    }

    /// The reduced operator is diagonal in a frame where the remainder is
    /// measured in this norm.
    pub fn remainder_norm(&self) -> f64 {
        self.remainder
            .analytic_norm(0.0, SobolevFrame::L2)
            .unwrap_or(f64::NAN)
    }
}
