//! Evolution of `i psi' = (H0 + eps W(omega t)) psi` on the truncated
//! eigenbasis.
//!
//! Steps are midpoint (order-2) Magnus steps taken in the interaction
//! picture of `diag(lambda)`, so the exponentiated generator has the size of
//! the perturbation instead of the size of the truncated spectrum. Each
//! exponential acts through its Taylor series.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, KamError, Result};
use crate::kam::{ForcedProblem, QPOperator, TransformChain};
use crate::linalg::{matmul, spectral_norm, unitarity_defect, C64, CMat, CVec};

/// Largest `dt ||H_I||` accepted by [`evolve`].
pub const STABILITY_GUARD: f64 = 0.5;
/// Mass allowed in the top tenth of the basis before a run is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-6;
/// Step-halving tolerance on the final state.
pub const STEP_TOLERANCE: f64 = 1e-6;

/// `diag(lambda) + eps W(phi)` with `W` given mode by mode.
#[derive(Clone, Debug)]
pub struct ForcedHamiltonian {
    pub lambda: Vec<f64>,
    pub w: QPOperator,
}

impl ForcedHamiltonian {
    pub fn new(lambda: Vec<f64>, w: QPOperator) -> Result<Self> {
        if lambda.len() != w.dim {
            return invalid("eigenvalues and W disagree in size");
        }
        Ok(ForcedHamiltonian { lambda, w })
    }

    pub fn from_problem(problem: &ForcedProblem) -> Self {
        ForcedHamiltonian {
            lambda: problem.basis.lambda_v.clone(),
            w: problem.w.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `eps sum_k ||W_k||`, a bound for the interaction-picture generator.
    pub fn coupling_bound(&self, eps: f64) -> f64 {
        eps.abs() * self.w.modes.values().map(spectral_norm).sum::<f64>()
    }

    /// `e^{iDt} eps W(omega t) e^{-iDt}`.
    fn interaction(&self, eps: f64, omega: &[f64], t: f64) -> CMat {
        let n = self.dim();
        let mut h = CMat::zeros(n, n);
        for (k, m) in &self.w.modes {
            let angle: f64 = k.iter().zip(omega).map(|(k, w)| *k as f64 * w * t).sum();
            let f = C64::from_polar(1.0, angle);
            h.zip_apply(m, |a, b| *a += b * f);
        }
        let rot: Vec<C64> = self.lambda.iter().map(|l| C64::from_polar(1.0, l * t)).collect();
        for j in 0..n {
            let right = rot[j].conj() * eps;
            for i in 0..n {
                h[(i, j)] *= rot[i] * right;
            }
        }
        h
    }

    /// `e^{-iDt}` applied to a vector.
    fn free_phase(&self, t: f64, v: &CVec) -> CVec {
        CVec::from_iterator(
            v.len(),
            v.iter()
                .zip(&self.lambda)
                .map(|(z, l)| z * C64::from_polar(1.0, -l * t)),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Commutator-free order-2 Magnus with midpoint sampling.
    #[default]
    Magnus2,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionRun {
    pub omega: Vec<f64>,
    pub eps: f64,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    pub psi0: Vec<C64>,
    /// Sobolev exponents to record.
    #[serde(default = "default_s")]
    pub s_values: Vec<f64>,
    /// Number of recorded intervals.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_s() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_samples() -> usize {
    100
}

impl EvolutionRun {
    pub fn new(omega: Vec<f64>, eps: f64, t_final: f64, dt: f64, psi0: Vec<C64>) -> Self {
        EvolutionRun {
            omega,
            eps,
            t_final,
            dt,
            integrator: Integrator::Magnus2,
            psi0,
            s_values: default_s(),
            samples: default_samples(),
        }
    }

    fn validate(&self, h: &ForcedHamiltonian) -> Result<()> {
        if self.omega.len() != h.w.n {
            return invalid("omega does not match the number of forcing angles");
        }
        if self.psi0.len() != h.dim() {
            return invalid("initial state does not match the basis size");
        }
        let norm = self.psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return invalid(format!("initial state has norm {norm}, expected 1"));
        }
        if !(self.t_final >= 0.0 && self.dt > 0.0) || self.samples == 0 {
            return invalid("need t_final >= 0, dt > 0 and at least one sample");
        }
        if self.s_values.iter().any(|s| *s < 0.0) {
            return invalid("Sobolev exponents must be non-negative");
        }
        let size = self.dt * h.coupling_bound(self.eps);
        if size > STABILITY_GUARD {
            return invalid(format!(
                "dt ||H_I|| = {size:.3} exceeds the stability guard {STABILITY_GUARD}"
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormTrace {
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `h[m][i]`: norm with exponent `s_values[m]` at `times[i]`.
    pub h: Vec<Vec<f64>>,
    /// Mass in the top tenth of the basis.
    pub leakage: Vec<f64>,
    /// `| ||psi||_2 - 1 |`, or the defect of the propagator when one is formed.
    pub unitarity_defect: Vec<f64>,
    /// `||psi_dt(T) - psi_{dt/2}(T)||_2`.
    pub step_error: f64,
    pub leakage_flagged: bool,
    #[serde(skip)]
    pub final_state: CVec,
}

impl NormTrace {
    fn new(s_values: &[f64]) -> Self {
        NormTrace {
            times: Vec::new(),
            l2: Vec::new(),
            s_values: s_values.to_vec(),
            h: vec![Vec::new(); s_values.len()],
            leakage: Vec::new(),
            unitarity_defect: Vec::new(),
            step_error: 0.0,
            leakage_flagged: false,
            final_state: CVec::zeros(0),
        }
    }

    fn record(&mut self, t: f64, psi: &CVec, defect: Option<f64>) {
        let l2 = psi.norm();
        let leak = leakage(psi);
        self.times.push(t);
        self.l2.push(l2);
        for (m, s) in self.s_values.iter().enumerate() {
            self.h[m].push(sobolev_norm(psi, *s));
        }
        self.leakage.push(leak);
        self.unitarity_defect.push(defect.unwrap_or((l2 - 1.0).abs()));
        self.leakage_flagged |= leak > LEAKAGE_LIMIT;
    }

    /// Norm with exponent `s`, if it was recorded.
    pub fn h_norm(&self, s: f64) -> Option<&[f64]> {
        self.s_values
            .iter()
            .position(|v| *v == s)
            .map(|m| self.h[m].as_slice())
    }

    /// `sup_t ||psi(t)||_{H^s} / ||psi(0)||_{H^s}`.
    pub fn growth_ratio(&self, s: f64) -> Option<f64> {
        let h = self.h_norm(s)?;
        let first = *h.first()?;
        Some(h.iter().fold(0.0f64, |m, v| m.max(*v)) / first)
    }

    pub fn max_l2_drift(&self) -> f64 {
        self.l2.iter().fold(0.0, |m, v| m.max((v - 1.0).abs()))
    }
}

/// `(sum_j j^{2s} |psi_j|^2)^{1/2}` with `j` counted from 1.
pub fn sobolev_norm(psi: &CVec, s: f64) -> f64 {
    psi.iter()
        .enumerate()
        .map(|(j, z)| ((j + 1) as f64).powf(2.0 * s) * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Mass in the top tenth of the modes.
pub fn leakage(psi: &CVec) -> f64 {
    let n = psi.len();
    let start = n - n.div_ceil(10);
    psi.iter().skip(start).map(|z| z.norm_sqr()).sum()
}

/// `e^{-i dt H} v` by its Taylor series.
fn expm_action(h: &CMat, dt: f64, v: &CVec) -> CVec {
    let mut out = v.clone();
    let mut term = v.clone();
    let mut next = CVec::zeros(v.len());
    let scale = v.norm().max(f64::MIN_POSITIVE);
    for m in 1..60 {
        next.gemv(C64::new(0.0, -dt / m as f64), h, &term, C64::new(0.0, 0.0));
        std::mem::swap(&mut term, &mut next);
        out += &term;
        if term.norm() <= 1e-17 * scale {
            break;
        }
    }
    out
}

/// `e^{-i dt H} U` by its Taylor series.
fn expm_apply(h: &CMat, dt: f64, u: &CMat) -> CMat {
    let mut out = u.clone();
    let mut term = u.clone();
    let scale = u.norm().max(f64::MIN_POSITIVE);
    for m in 1..60 {
        term = matmul(h, &term) * C64::new(0.0, -dt / m as f64);
        out += &term;
        if term.norm() <= 1e-18 * scale {
            break;
        }
    }
    out
}

fn step_count(t_final: f64, dt: f64) -> usize {
    ((t_final / dt).ceil() as usize).max(1)
}

/// Interaction-picture state after `steps` midpoint steps on `[t0, t0 + steps dt]`.
#[allow(clippy::too_many_arguments)]
fn march(
    h: &ForcedHamiltonian,
    eps: f64,
    omega: &[f64],
    t0: f64,
    dt: f64,
    steps: usize,
    v: &CVec,
    mut visit: impl FnMut(usize, &CVec),
) -> CVec {
    let mut v = v.clone();
    for i in 0..steps {
        let mid = t0 + (i as f64 + 0.5) * dt;
        v = expm_action(&h.interaction(eps, omega, mid), dt, &v);
        visit(i + 1, &v);
    }
    v
}

/// Integrates the run, recording norms at `samples + 1` evenly spaced times,
/// and repeats it at `dt / 2` for the step-halving estimate.
pub fn evolve(run: &EvolutionRun, h: &ForcedHamiltonian) -> Result<NormTrace> {
    run.validate(h)?;
    let psi0 = CVec::from_vec(run.psi0.clone());
    let mut trace = NormTrace::new(&run.s_values);
    if run.t_final == 0.0 {
        trace.record(0.0, &psi0, None);
        trace.final_state = psi0;
        return Ok(trace);
    }
    let coarse_steps = step_count(run.t_final, run.dt);
    let dt = run.t_final / coarse_steps as f64;
    let fine_steps = 2 * coarse_steps;
    let marks: Vec<usize> = (0..=run.samples)
        .map(|i| (i * fine_steps + run.samples / 2) / run.samples)
        .collect();
    let mut next = 0;
    trace.record(0.0, &psi0, None);
    while next < marks.len() && marks[next] == 0 {
        next += 1;
    }
    let fine = march(h, run.eps, &run.omega, 0.0, dt / 2.0, fine_steps, &psi0, |i, v| {
        while next < marks.len() && marks[next] == i {
            let t = i as f64 * dt / 2.0;
            trace.record(t, &h.free_phase(t, v), None);
            next += 1;
        }
    });
    let coarse = march(h, run.eps, &run.omega, 0.0, dt, coarse_steps, &psi0, |_, _| {});
    trace.step_error = (&fine - &coarse).norm();
    trace.final_state = h.free_phase(run.t_final, &fine);
    if trace.step_error > STEP_TOLERANCE {
        return Err(KamError::Residual(format!(
            "step-halving estimate {:.3e} exceeds {STEP_TOLERANCE:.0e}; reduce dt",
            trace.step_error
        )));
    }
    Ok(trace)
}

/// Propagator over one forcing period (`n = 1`).
#[derive(Clone, Debug)]
pub struct Monodromy {
    pub period: f64,
    /// `U(T)` in the eigenbasis.
    pub u: CMat,
    /// `U(t_m)` at `t_m = m T / checkpoints`, `m = 1..=checkpoints`.
    pub partial: Vec<CMat>,
    /// Difference between the extrapolated and the finer propagator.
    pub richardson_change: f64,
    /// Unitarity defect before the polar projection.
    pub unitarity_defect: f64,
}

/// `U(T)` from two midpoint runs with `steps` and `2 steps` steps,
/// Richardson-combined (the error expansion is even) and projected back to
/// the unitary group.
pub fn monodromy(
    h: &ForcedHamiltonian,
    eps: f64,
    omega: f64,
    steps: usize,
    checkpoints: usize,
) -> Result<Monodromy> {
    if h.w.n != 1 {
        return invalid("monodromy needs periodic forcing (n = 1)");
    }
    if !(omega > 0.0) || steps == 0 || checkpoints == 0 || !steps.is_multiple_of(checkpoints) {
        return invalid("need omega > 0 and a step count divisible by the checkpoint count");
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let dt = period / steps as f64;
    let size = dt * h.coupling_bound(eps);
    if size > STABILITY_GUARD {
        return invalid(format!(
            "dt ||H_I|| = {size:.3} exceeds the stability guard {STABILITY_GUARD}"
        ));
    }
    let n = h.dim();
    let run = |count: usize| {
        let tau = period / count as f64;
        let every = count / checkpoints;
        let mut u = CMat::identity(n, n);
        let mut marks = Vec::with_capacity(checkpoints);
        for i in 0..count {
            let mid = (i as f64 + 0.5) * tau;
            u = expm_apply(&h.interaction(eps, &[omega], mid), tau, &u);
            if (i + 1) % every == 0 {
                marks.push(u.clone());
            }
        }
        marks
    };
    let coarse = run(steps);
    let fine = run(2 * steps);
    let mut partial = Vec::with_capacity(checkpoints);
    let mut change: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for (m, (c1, c2)) in coarse.iter().zip(&fine).enumerate() {
        let extrapolated = (c2 * C64::new(4.0, 0.0) - c1) / C64::new(3.0, 0.0);
        change = change.max(spectral_norm(&(&extrapolated - c2)));
        defect = defect.max(unitarity_defect(&extrapolated));
        let t = (m + 1) as f64 * period / checkpoints as f64;
        let mut u = polar_unitary(&extrapolated);
        for i in 0..n {
            let phase = C64::from_polar(1.0, -h.lambda[i] * t);
            for j in 0..n {
                u[(i, j)] *= phase;
            }
        }
        partial.push(u);
    }
    if defect > 1e-8 {
        return Err(KamError::Residual(format!(
            "monodromy unitarity defect {defect:.3e} exceeds 1e-8; increase the step count"
        )));
    }
    Ok(Monodromy {
        period,
        u: partial.last().cloned().expect("at least one checkpoint"),
        partial,
        richardson_change: change,
        unitarity_defect: defect,
    })
}

/// Unitary factor `W V^dagger` of `M = W S V^dagger`.
fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let (w, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    matmul(&w, &vt)
}

impl Monodromy {
    /// Norm trace at every checkpoint of `periods` consecutive periods,
    /// built from powers of `U(T)`.
    pub fn stroboscopic(&self, psi0: &CVec, periods: usize, s_values: &[f64]) -> Result<NormTrace> {
        if psi0.len() != self.u.nrows() {
            return invalid("initial state does not match the basis size");
        }
        let mut trace = NormTrace::new(s_values);
        let defect = self.partial.iter().map(unitarity_defect).fold(0.0, f64::max);
        trace.record(0.0, psi0, Some(defect));
        let mut start = psi0.clone();
        let per = self.partial.len();
        for p in 0..periods {
            for (m, u) in self.partial.iter().enumerate() {
                let psi = u * &start;
                let t = self.period * (p as f64 + (m + 1) as f64 / per as f64);
                trace.record(t, &psi, Some(defect));
            }
            start = &self.u * start;
        }
        trace.final_state = start;
        Ok(trace)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FloquetSpectrum {
    /// Eigenphases in `(-pi, pi]`, ordered by the basis index they sit on.
    pub phases: Vec<f64>,
    /// Basis index carrying the largest share of each eigenvector.
    pub labels: Vec<usize>,
    /// Adjacent phases closer than `gap_tol` on the circle.
    pub collisions: usize,
    pub gap_tol: f64,
    pub min_gap: f64,
    pub unitarity_defect: f64,
}

/// Eigenphases of the monodromy. Adjacent phases closer than a tenth of the
/// mean spacing count as collisions.
pub fn floquet_eigenphases(m: &Monodromy) -> Result<FloquetSpectrum> {
    let defect = unitarity_defect(&m.u);
    if defect > 1e-8 {
        return Err(KamError::Residual(format!(
            "monodromy unitarity defect {defect:.3e} exceeds 1e-8"
        )));
    }
    let n = m.u.nrows();
    let schur = nalgebra::Schur::new(m.u.clone());
    let (q, t) = schur.unpack();
    let mut pairs: Vec<(usize, f64)> = (0..n)
        .map(|k| {
            let label = (0..n)
                .max_by(|a, b| q[(*a, k)].norm().total_cmp(&q[(*b, k)].norm()))
                .unwrap_or(0);
            (label, t[(k, k)].arg())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let phases: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut sorted = phases.clone();
    sorted.sort_by(f64::total_cmp);
    let two_pi = 2.0 * std::f64::consts::PI;
    let gaps: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                sorted[i + 1] - sorted[i]
            } else {
                sorted[0] + two_pi - sorted[n - 1]
            }
        })
        .collect();
    let gap_tol = 0.1 * two_pi / n as f64;
    Ok(FloquetSpectrum {
        labels: pairs.iter().map(|p| p.0).collect(),
        phases,
        collisions: gaps.iter().filter(|g| **g < gap_tol).count(),
        gap_tol,
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        unitarity_defect: defect,
    })
}

/// Distance on the unit circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

#[derive(Clone, Debug, Serialize)]
pub struct Continuation {
    pub eps: Vec<f64>,
    /// `max_{j <= j_max} |phase_j(eps) - phase_j(0)|` per `eps`.
    pub max_shift: Vec<f64>,
    /// `max max_shift / eps`.
    pub lipschitz: f64,
    pub collisions: Vec<usize>,
}

/// Follows the eigenphases of the lowest `j_max` basis states from `eps = 0`.
pub fn floquet_continuation(
    h: &ForcedHamiltonian,
    omega: f64,
    eps: &[f64],
    j_max: usize,
    steps: usize,
) -> Result<Continuation> {
    if j_max == 0 || j_max > h.dim() {
        return invalid("j_max must lie in 1..=N");
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    let base: Vec<f64> = h
        .lambda
        .iter()
        .map(|l| (-l * period).rem_euclid(2.0 * std::f64::consts::PI))
        .collect();
    let mut max_shift = Vec::new();
    let mut collisions = Vec::new();
    for e in eps {
        let spec = floquet_eigenphases(&monodromy(h, *e, omega, steps, 1)?)?;
        let mut worst: f64 = 0.0;
        for (label, phase) in spec.labels.iter().zip(&spec.phases) {
            if *label < j_max {
                worst = worst.max(phase_distance(*phase, base[*label]));
            }
        }
        max_shift.push(worst);
        collisions.push(spec.collisions);
    }
    let lipschitz = eps
        .iter()
        .zip(&max_shift)
        .filter(|(e, _)| **e != 0.0)
        .map(|(e, s)| s / e.abs())
        .fold(0.0, f64::max);
    Ok(Continuation {
        eps: eps.to_vec(),
        max_shift,
        lipschitz,
        collisions,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub times: Vec<f64>,
    /// `||psi_full(t) - Phi(omega t) phi(t)||_{H^s}` at each time.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    /// Step-halving estimate of the full evolution at the last time.
    pub integrator_error: f64,
    /// `residual t + integrator error`, the expected growth envelope.
    pub envelope: Vec<f64>,
}

/// Evolves the full system and the reduced diagonal flow
/// `phi_j(t) = e^{-i lambda_inf_j t} phi_j(0)`, maps the latter back through
/// `chain` and compares at the given times.
#[allow(clippy::too_many_arguments)]
pub fn reduced_compare(
    h: &ForcedHamiltonian,
    eps: f64,
    omega: &[f64],
    lambda_inf: &[f64],
    chain: &TransformChain,
    residual: f64,
    psi0: &CVec,
    times: &[f64],
    s: f64,
    dt: f64,
) -> Result<Comparison> {
    let n = h.dim();
    if lambda_inf.len() != n || psi0.len() != n {
        return invalid("reduced eigenvalues, state and basis disagree in size");
    }
    if chain.generators.iter().any(|x| x.dim != n || x.n != omega.len()) {
        return invalid("transform chain does not match the configuration");
    }
    if chain.u1.as_ref().is_some_and(|u| u.nrows() != n) {
        return invalid("prediagonalizing unitary does not match the basis size");
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return invalid("comparison times must be non-negative and increasing");
    }
    let phi_at = |t: f64| omega.iter().map(|w| w * t).collect::<Vec<f64>>();
    let reduced0 = chain.to_reduced(&phi_at(0.0), psi0);
    let mut out = Comparison {
        times: times.to_vec(),
        discrepancy: Vec::new(),
        max_discrepancy: 0.0,
        integrator_error: 0.0,
        envelope: Vec::new(),
    };
    let mut state = psi0.clone();
    let mut t_now = 0.0;
    for &t in times {
        if t > t_now {
            let mut run = EvolutionRun::new(omega.to_vec(), eps, t - t_now, dt, state.iter().copied().collect());
            run.samples = 1;
            let shifted = ShiftedHamiltonian { h, t0: t_now };
            let trace = shifted.evolve(&run)?;
            out.integrator_error += trace.step_error;
            state = trace.final_state;
            t_now = t;
        }
        let reduced = CVec::from_iterator(
            n,
            reduced0
                .iter()
                .zip(lambda_inf)
                .map(|(z, l)| z * C64::from_polar(1.0, -l * t)),
        );
        let mapped = chain.to_original(&phi_at(t), &reduced);
        let d = sobolev_norm(&(&state - &mapped), s);
        out.discrepancy.push(d);
        out.envelope.push(residual * t + out.integrator_error);
        out.max_discrepancy = out.max_discrepancy.max(d);
    }
    Ok(out)
}

/// A forced Hamiltonian whose clock starts at `t0`.
struct ShiftedHamiltonian<'a> {
    h: &'a ForcedHamiltonian,
    t0: f64,
}

impl ShiftedHamiltonian<'_> {
    fn evolve(&self, run: &EvolutionRun) -> Result<NormTrace> {
        let mut shifted = self.h.w.clone();
        for (k, m) in shifted.modes.iter_mut() {
            let phase: f64 = k.iter().zip(&run.omega).map(|(k, w)| *k as f64 * w * self.t0).sum();
            *m *= C64::from_polar(1.0, phase);
        }
        evolve(run, &ForcedHamiltonian::new(self.h.lambda.clone(), shifted)?)
    }
}
