//! Quasiperiodic matrix operators and the iterative reduction to a
//! time-independent diagonal operator.

mod homological;
mod lemmas;
mod lie;
mod prediag;
mod run;
mod smooth;

pub use homological::{homological_residual, quantum_homological, HomologicalSolution};
pub use lemmas::{
    lemma_suite, pos96_ratio, rico_closed_form, rico_iterate, rico_printed, LemmaCheck,
    LemmaReport,
};
pub use lie::{kam_step, lie_transform, y_correction, y_exact, KamStep, LieResult, StepDiagnostics};
pub use prediag::{prediagonalize, Prediagonalization};
pub use run::{
    banded_perturbation, forced_problem, run_kam, ForcedProblem, KamRun, LedgerEntry,
};
pub use smooth::{
    conjugate_through, finite_smoothness_loop, smoothing_multiplier, smoothing_operator,
    SmoothnessReport, SmoothnessStage,
};

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::{weighted_operator_norm, SobolevFrame};
use crate::diophantine::{dot, l1, lattice_ball, DiophantineParams};
use crate::error::{invalid, Result};
use crate::linalg::{c, expi_herm, C64, CMat, CVec};

/// `P(phi) = sum_k P_k e^{i k.phi}` with matrix-valued modes.
#[derive(Clone, Debug, PartialEq)]
pub struct QPOperator {
    pub n: usize,
    pub dim: usize,
    pub modes: BTreeMap<Vec<i32>, CMat>,
}

impl QPOperator {
    pub fn zero(n: usize, dim: usize) -> Self {
        QPOperator {
            n,
            dim,
            modes: BTreeMap::new(),
        }
    }

    pub fn stationary(n: usize, m: CMat) -> Self {
        let dim = m.nrows();
        let mut modes = BTreeMap::new();
        modes.insert(vec![0; n], m);
        QPOperator { n, dim, modes }
    }

    /// Builds and checks `P_{-k} = P_k^dagger`.
    pub fn from_modes(
        n: usize,
        dim: usize,
        modes: impl IntoIterator<Item = (Vec<i32>, CMat)>,
    ) -> Result<Self> {
        let mut op = QPOperator::zero(n, dim);
        for (k, m) in modes {
            if k.len() != n || m.nrows() != dim || m.ncols() != dim {
                return invalid(format!("mode {k:?} has the wrong shape"));
            }
            op.modes.insert(k, m);
        }
        op.check_selfadjoint(1e-12)?;
        Ok(op)
    }

    pub fn check_selfadjoint(&self, tol: f64) -> Result<()> {
        let scale = self
            .modes
            .values()
            .map(frobenius)
            .fold(1.0, f64::max);
        for (k, m) in &self.modes {
            let neg: Vec<i32> = k.iter().map(|x| -x).collect();
            let partner = match self.modes.get(&neg) {
                Some(p) => frobenius(&(p - m.adjoint())),
                None => frobenius(m),
            };
            if partner > tol * scale {
                return invalid(format!("mode {k:?} breaks P_-k = P_k^dagger by {partner:.2e}"));
            }
        }
        Ok(())
    }

    /// Largest `|k|_1` among stored modes.
    pub fn kmax(&self) -> i32 {
        self.modes.keys().map(|k| l1(k)).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.modes.values().all(|m| m.iter().all(|z| *z == C64::new(0.0, 0.0)))
    }

    pub fn mode(&self, k: &[i32]) -> Option<&CMat> {
        self.modes.get(k)
    }

    pub fn eval(&self, phi: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (k, m) in &self.modes {
            out += m * C64::from_polar(1.0, dot(k, phi));
        }
        out
    }

    /// Value at the complex angle `theta + i y`.
    pub fn eval_complex(&self, theta: &[f64], y: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (k, m) in &self.modes {
            out += m * C64::from_polar((-dot(k, y)).exp(), dot(k, theta));
        }
        out
    }

    /// `omega . d_phi P`.
    pub fn dot_derivative(&self, omega: &[f64]) -> QPOperator {
        let modes = self
            .modes
            .iter()
            .filter(|(k, _)| k.iter().any(|x| *x != 0))
            .map(|(k, m)| (k.clone(), m * C64::new(0.0, dot(k, omega))))
            .collect();
        QPOperator {
            n: self.n,
            dim: self.dim,
            modes,
        }
    }

    /// `sum_k e^{|k| r} ||P_k||_frame`, an upper bound for the sup over the strip.
    pub fn analytic_norm(&self, r: f64, frame: SobolevFrame) -> Result<f64> {
        if r < 0.0 {
            return invalid("analytic radius must be non-negative");
        }
        if r * self.kmax() as f64 > 700.0 {
            return invalid(format!(
                "r * Kmax = {:.1} overflows the exponential weight; rescale r",
                r * self.kmax() as f64
            ));
        }
        let mut total = 0.0;
        for (k, m) in &self.modes {
            total += (r * l1(k) as f64).exp() * weighted_operator_norm(m, frame)?;
        }
        Ok(total)
    }

    /// Sup of the weighted norm over the given real angles shifted to every
    /// corner `Im phi in {-r, r}^n`.
    pub fn grid_sup(&self, r: f64, frame: SobolevFrame, angles: &[Vec<f64>]) -> Result<f64> {
        let corners = corners(self.n, r);
        let mut best: f64 = 0.0;
        for theta in angles {
            for y in &corners {
                best = best.max(weighted_operator_norm(&self.eval_complex(theta, y), frame)?);
            }
        }
        Ok(best)
    }

    pub fn plus(&self, other: &QPOperator) -> QPOperator {
        let mut out = self.clone();
        for (k, m) in &other.modes {
            out.modes
                .entry(k.clone())
                .and_modify(|e| *e += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn minus(&self, other: &QPOperator) -> QPOperator {
        self.plus(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> QPOperator {
        QPOperator {
            n: self.n,
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|(k, m)| (k.clone(), m * c(factor)))
                .collect(),
        }
    }

    /// `[P]`: the diagonal of the stationary mode.
    pub fn stationary_diagonal(&self) -> Vec<f64> {
        match self.modes.get(&vec![0; self.n]) {
            Some(m) => (0..self.dim).map(|i| m[(i, i)].re).collect(),
            None => vec![0.0; self.dim],
        }
    }

    /// `P - [P]`.
    pub fn without_stationary_diagonal(&self) -> QPOperator {
        let mut out = self.clone();
        if let Some(m) = out.modes.get_mut(&vec![0; self.n]) {
            for i in 0..self.dim {
                m[(i, i)] = C64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `U P_k U^dagger` on every mode.
    pub fn conjugate(&self, u: &CMat) -> QPOperator {
        let ud = u.adjoint();
        QPOperator {
            n: self.n,
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|(k, m)| (k.clone(), crate::linalg::matmul(&crate::linalg::matmul(u, m), &ud)))
                .collect(),
        }
    }

    /// Modes with `|k|_1 <= kmax`.
    pub fn truncated(&self, kmax: i32) -> QPOperator {
        QPOperator {
            n: self.n,
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .filter(|(k, _)| l1(k) <= kmax)
                .map(|(k, m)| (k.clone(), m.clone()))
                .collect(),
        }
    }
}

pub(crate) fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn corners(n: usize, r: f64) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { r } else { -r }).collect())
        .collect()
}

/// Deterministic well-spread angles on `T^n`.
pub fn sample_angles(n: usize, count: usize) -> Vec<Vec<f64>> {
    let alphas: Vec<f64> = (0..n)
        .map(|i| {
            let p = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0][i % 6];
            f64::sqrt(p).fract()
        })
        .collect();
    (1..=count)
        .map(|m| alphas.iter().map(|a| 2.0 * PI * (m as f64 * a).fract()).collect())
        .collect()
}

/// Uniform tensor grid on `T^n` with `4 Kmax + 1` points per dimension.
#[derive(Clone, Debug)]
pub struct AngleGrid {
    pub n: usize,
    pub kmax: i32,
    pub per_dim: usize,
    pub points: Vec<Vec<f64>>,
    pub modes: Vec<Vec<i32>>,
}

impl AngleGrid {
    pub fn for_kmax(n: usize, kmax: i32) -> Self {
        AngleGrid::with_points(n, kmax, 4 * kmax.max(0) as usize + 1)
    }

    pub fn with_points(n: usize, kmax: i32, per_dim: usize) -> Self {
        let h = 2.0 * PI / per_dim as f64;
        let mut points = vec![Vec::new()];
        for _ in 0..n {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..per_dim).map(move |i| {
                        let mut q = p.clone();
                        q.push(i as f64 * h);
                        q
                    })
                })
                .collect();
        }
        AngleGrid {
            n,
            kmax,
            per_dim,
            points,
            modes: lattice_ball(n, kmax),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Discrete Fourier projection onto `|k|_1 <= Kmax`, symmetrized so the
    /// result is a selfadjoint family.
    pub fn project(&self, samples: &[CMat]) -> QPOperator {
        let dim = samples.first().map_or(0, |m| m.nrows());
        let weight = 1.0 / self.len() as f64;
        let mut modes = BTreeMap::new();
        for k in &self.modes {
            let mut acc = CMat::zeros(dim, dim);
            for (phi, s) in self.points.iter().zip(samples) {
                acc += s * C64::from_polar(weight, -dot(k, phi));
            }
            modes.insert(k.clone(), acc);
        }
        let mut sym = BTreeMap::new();
        for (k, m) in &modes {
            let neg: Vec<i32> = k.iter().map(|x| -x).collect();
            let partner = &modes[&neg];
            sym.insert(k.clone(), (m + partner.adjoint()) * c(0.5));
        }
        QPOperator {
            n: self.n,
            dim,
            modes: sym,
        }
    }

    pub fn eval_all(&self, op: &QPOperator) -> Vec<CMat> {
        self.points.iter().map(|p| op.eval(p)).collect()
    }

    /// `max_phi ||F(phi) - (Pi F)(phi)||_F` over the grid: the part of the
    /// samples not represented by the retained modes.
    pub fn projection_residual(&self, samples: &[CMat], projected: &QPOperator) -> f64 {
        self.points
            .iter()
            .zip(samples)
            .map(|(p, s)| frobenius(&(s - projected.eval(p))))
            .fold(0.0, f64::max)
    }
}

/// Diagonal operator `diag(lambda_j)` sampled on a finite set of frequencies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagonalHamiltonian {
    pub omegas: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// Gap exponent `d = 2l/(l+1)`.
    pub d: f64,
    /// Measured `min |lambda_i - lambda_j| / |i^d - j^d|`.
    pub k0: f64,
    /// Measured Lipschitz quotient of the gaps over the samples.
    pub k1: f64,
    pub params: DiophantineParams,
}

impl DiagonalHamiltonian {
    pub fn new(
        omegas: Vec<Vec<f64>>,
        lambda: Vec<Vec<f64>>,
        d: f64,
        params: DiophantineParams,
    ) -> Result<Self> {
        if omegas.is_empty() || omegas.len() != lambda.len() {
            return invalid("need one eigenvalue list per frequency sample");
        }
        let dim = lambda[0].len();
        if lambda.iter().any(|l| l.len() != dim) || !(d > 0.0) {
            return invalid("eigenvalue lists must share one size and d > 0");
        }
        let mut k0 = f64::INFINITY;
        for lam in &lambda {
            for i in 0..dim {
                for j in 0..i {
                    k0 = k0.min((lam[i] - lam[j]).abs() / gap_weight(i + 1, j + 1, d));
                }
            }
        }
        if dim < 2 {
            k0 = 1.0;
        }
        if !(k0 > 0.0) {
            return invalid("degenerate eigenvalues: gap constant K0 is zero");
        }
        let mut k1: f64 = 0.0;
        for a in 0..omegas.len() {
            for b in 0..a {
                let dw = distance(&omegas[a], &omegas[b]);
                if dw == 0.0 {
                    return invalid("identical frequency samples");
                }
                for i in 0..dim {
                    for j in 0..i {
                        let dg = (lambda[a][i] - lambda[a][j]) - (lambda[b][i] - lambda[b][j]);
                        k1 = k1.max(dg.abs() / dw / gap_weight(i + 1, j + 1, d));
                    }
                }
            }
        }
        Ok(DiagonalHamiltonian {
            omegas,
            lambda,
            d,
            k0,
            k1,
            params,
        })
    }

    /// A single-sample diagonal operator.
    pub fn single(omega: Vec<f64>, lambda: Vec<f64>, d: f64, params: DiophantineParams) -> Result<Self> {
        DiagonalHamiltonian::new(vec![omega], vec![lambda], d, params)
    }

    pub fn dim(&self) -> usize {
        self.lambda[0].len()
    }

    pub fn primary(&self) -> &[f64] {
        &self.lambda[0]
    }
}

/// `|i^d - j^d|` with 1-based indices.
pub fn gap_weight(i: usize, j: usize, d: f64) -> f64 {
    ((i as f64).powf(d) - (j as f64).powf(d)).abs()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Max over sample pairs of `||P(a) - P(b)||_r / |omega_a - omega_b|`.
pub fn lipschitz_norm(
    family: &[(Vec<f64>, QPOperator)],
    r: f64,
    frame: SobolevFrame,
) -> Result<f64> {
    if family.len() < 2 {
        return invalid("Lipschitz norm needs at least two frequency samples");
    }
    let mut best: f64 = 0.0;
    for a in 0..family.len() {
        for b in 0..a {
            let dw = distance(&family[a].0, &family[b].0);
            if dw == 0.0 {
                return invalid("identical frequency samples");
            }
            let diff = family[a].1.minus(&family[b].1);
            best = best.max(diff.analytic_norm(r, frame)? / dw);
        }
    }
    Ok(best)
}

/// The `2^n` corners of a box of half-width `h` around `omega` plus its center.
pub fn frequency_stencil(omega: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut out = vec![omega.to_vec()];
    for corner in corners(omega.len(), h) {
        out.push(omega.iter().zip(&corner).map(|(w, d)| w + d).collect());
    }
    out
}

/// Parameters of the iterative scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KamSchedule {
    /// Initial analyticity radius.
    pub r: f64,
    pub theta: f64,
    /// Exponent in `gamma_{l+1} = gamma_l - eps1_l^{d2}`.
    pub d2: f64,
    /// Exponent in the Lipschitz update; recorded only.
    pub d3: f64,
    pub frame: SobolevFrame,
    pub tol: f64,
    pub max_stages: usize,
}

impl Default for KamSchedule {
    fn default() -> Self {
        KamSchedule {
            r: 0.5,
            theta: 0.5,
            d2: 0.5,
            d3: 0.5,
            frame: SobolevFrame::L2,
            tol: 1e-10,
            max_stages: 12,
        }
    }
}

impl KamSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid("schedule needs r > 0 and 0 < theta < 1");
        }
        if !(self.d2 > 0.0 && self.d3 > 0.0) || !(self.tol > 0.0) || self.max_stages == 0 {
            return invalid("schedule needs d2, d3, tol > 0 and at least one stage");
        }
        Ok(())
    }

    /// `sigma_l = (1 - theta) r / 2^l`, `l >= 1`.
    pub fn sigma(&self, l: usize) -> f64 {
        (1.0 - self.theta) * self.r / 2f64.powi(l as i32)
    }

    /// `r_l = r - sum_{i <= l} sigma_i`.
    pub fn radius(&self, l: usize) -> f64 {
        self.r - (1..=l).map(|i| self.sigma(i)).sum::<f64>()
    }

    /// Loss exponent `b = 2n + 2 tau + 1`.
    pub fn loss_exponent(n: usize, tau: f64) -> f64 {
        2.0 * n as f64 + 2.0 * tau + 1.0
    }
}

/// Generators of the reducing transformation, innermost last.
#[derive(Clone, Debug)]
pub struct TransformChain {
    /// `U1` with `U1 (Lambda + eps Ra) U1^dagger` diagonal.
    pub u1: Option<CMat>,
    pub generators: Vec<QPOperator>,
}

impl TransformChain {
    pub fn identity() -> Self {
        TransformChain {
            u1: None,
            generators: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Maps reduced coordinates to original ones:
    /// `psi = U1^dagger e^{-i X1(phi)} ... e^{-i XL(phi)} v`.
    pub fn to_original(&self, phi: &[f64], v: &CVec) -> CVec {
        let mut out = v.clone();
        for x in self.generators.iter().rev() {
            out = expi_herm(&x.eval(phi), -1.0) * out;
        }
        match &self.u1 {
            Some(u) => u.adjoint() * out,
            None => out,
        }
    }

    /// Inverse of [`TransformChain::to_original`].
    pub fn to_reduced(&self, phi: &[f64], v: &CVec) -> CVec {
        let mut out = match &self.u1 {
            Some(u) => u * v,
            None => v.clone(),
        };
        for x in &self.generators {
            out = expi_herm(&x.eval(phi), 1.0) * out;
        }
        out
    }

    /// Keeps the first `count` generators.
    pub fn truncated(&self, count: usize) -> TransformChain {
        TransformChain {
            u1: self.u1.clone(),
            generators: self.generators.iter().take(count).cloned().collect(),
        }
    }

    /// Sizes of the generators, for manifests.
    pub fn manifest(&self) -> serde_json::Value {
        let norms: Vec<f64> = self
            .generators
            .iter()
            .map(|x| x.analytic_norm(0.0, SobolevFrame::L2).unwrap_or(f64::NAN))
            .collect();
        serde_json::json!({
            "prediagonalized": self.u1.is_some(),
            "generators": self.generators.len(),
            "generator_norms": norms,
            "kmax": self.generators.iter().map(|x| x.kmax()).max().unwrap_or(0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(dim: usize, seed: f64) -> CMat {
        let m = CMat::from_fn(dim, dim, |i, j| {
            C64::new((seed * (i + 2 * j + 1) as f64).sin(), (seed * (3 * i + j) as f64).cos())
        });
        (&m + m.adjoint()) * c(0.5)
    }

    fn pair(n: usize, k: Vec<i32>, m: CMat) -> QPOperator {
        let neg = k.iter().map(|x| -x).collect();
        QPOperator::from_modes(n, m.nrows(), [(neg, m.adjoint()), (k, m)]).unwrap()
    }

    #[test]
    fn single_stationary_mode_norm_is_the_matrix_norm() {
        let m = herm(6, 0.7);
        let op = QPOperator::stationary(2, m.clone());
        let frame = SobolevFrame::new(1.0, 0.5).unwrap();
        let expect = weighted_operator_norm(&m, frame).unwrap();
        assert!((op.analytic_norm(0.8, frame).unwrap() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn surrogate_dominates_grid_sup() {
        let b = CMat::from_fn(5, 5, |i, j| C64::new((i * j) as f64 * 0.1, i as f64 - j as f64));
        let op = pair(2, vec![1, -1], b).plus(&QPOperator::stationary(2, herm(5, 1.3)));
        let angles = sample_angles(2, 64);
        for r in [0.0, 0.3] {
            let bound = op.analytic_norm(r, SobolevFrame::L2).unwrap();
            let sup = op.grid_sup(r, SobolevFrame::L2, &angles).unwrap();
            assert!(sup <= bound * (1.0 + 1e-12));
            assert!(bound / sup <= op.modes.len() as f64);
        }
    }

    #[test]
    fn overflow_guard() {
        let op = pair(1, vec![10], herm(3, 0.2));
        assert!(op.analytic_norm(80.0, SobolevFrame::L2).is_err());
    }

    #[test]
    fn projection_recovers_retained_modes() {
        let op = pair(2, vec![2, 0], herm(4, 0.4)).plus(&pair(2, vec![1, -1], herm(4, 0.9)));
        let grid = AngleGrid::for_kmax(2, 2);
        let samples = grid.eval_all(&op);
        let back = grid.project(&samples);
        assert!(back.minus(&op).analytic_norm(0.0, SobolevFrame::L2).unwrap() < 1e-12);
        assert!(grid.projection_residual(&samples, &back) < 1e-12);
    }

    #[test]
    fn lipschitz_of_linear_family() {
        let b = herm(4, 0.5);
        let family: Vec<(Vec<f64>, QPOperator)> = frequency_stencil(&[1.4, 1.6], 1e-3)
            .into_iter()
            .map(|w| (w.clone(), QPOperator::stationary(2, &b * c(w[0]))))
            .collect();
        let lip = lipschitz_norm(&family, 0.2, SobolevFrame::L2).unwrap();
        let norm_b = crate::linalg::spectral_norm(&b);
        assert!(lip <= norm_b * (1.0 + 1e-9));
        assert!(lip >= norm_b / 2f64.sqrt() * (1.0 - 1e-9));
        let constant: Vec<(Vec<f64>, QPOperator)> = family
            .iter()
            .map(|(w, _)| (w.clone(), QPOperator::stationary(2, b.clone())))
            .collect();
        assert_eq!(lipschitz_norm(&constant, 0.2, SobolevFrame::L2).unwrap(), 0.0);
    }

    #[test]
    fn schedule_radii_stay_above_theta_r() {
        let s = KamSchedule::default();
        assert!((s.radius(60) - s.theta * s.r).abs() < 1e-12);
        assert!(s.radius(2) < s.radius(1));
    }
}
