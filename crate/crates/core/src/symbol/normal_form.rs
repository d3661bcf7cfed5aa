//! Smoothing normal form of `h0 + eps W`.
//!
//! For `V = x^2` the perturbation is polynomial and every step is exact:
//! the mixed homological equation removes all non-resonant terms and the
//! quantum Lie series is summed on polynomials. For `l > 1` the scheme
//! alternates the flow and torus equations on an orbit lattice, and symbol
//! classes are tracked through declared orders only.

use super::grid::{
    cutoff_split, solve_hom_flow, EnergyProfile, GridSymbol, Lattice, OrbitLattice, TorusProfile,
};
use super::homological::{solve_hom_mixed, solve_hom_torus};
use super::Symbol;
use crate::basis::PotentialSpec;
use crate::diophantine::DiophantineParams;
use crate::error::{invalid, KamError, Result};
use crate::linalg::C64;
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    /// Order of the generator; `-inf` for a vanishing generator.
    pub generator_order: f64,
    /// Order of the perturbation that is not yet in normal form.
    pub residual_order: f64,
    pub sup_coeff: f64,
}

#[derive(Clone, Debug)]
pub enum Generator {
    Polynomial(Symbol),
    Orbit(GridSymbol),
    Torus(TorusProfile),
}

#[derive(Clone, Debug)]
pub enum Remainder {
    Polynomial(Symbol),
    Grid(GridSymbol),
}

impl Remainder {
    pub fn sup(&self) -> f64 {
        match self {
            Remainder::Polynomial(s) => s.sup_coeff(),
            Remainder::Grid(g) => g.sup_norm(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormalForm {
    /// Leading invariant profile: the phase and torus average of `W`.
    pub z: EnergyProfile,
    /// Remaining invariant corrections, divided by `eps`.
    pub ztilde: EnergyProfile,
    pub residual: Remainder,
    pub chain: Vec<Generator>,
    pub ledger: Vec<LedgerRow>,
    /// Largest neglected Lie-series term over all steps.
    pub truncation_error: f64,
    pub achieved_order: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalFormConfig {
    pub omega: Vec<f64>,
    pub eps: f64,
    pub target_kappa: f64,
    pub params: DiophantineParams,
    pub max_steps: usize,
    /// Orbit energies for `l > 1`.
    pub energies: Vec<f64>,
    /// Samples per orbit for `l > 1`.
    pub samples: usize,
}

impl NormalFormConfig {
    pub fn new(omega: Vec<f64>, eps: f64, params: DiophantineParams) -> Self {
        let energies = (0..40).map(|i| 32f64.powf(i as f64 / 39.0)).collect();
        NormalFormConfig {
            omega,
            eps,
            target_kappa: 1.0,
            params,
            max_steps: 32,
            energies,
            samples: 256,
        }
    }
}

const GUARD: f64 = 0.1;

fn order_of(s: &Symbol, l: u32) -> f64 {
    s.order(l).map_or(f64::NEG_INFINITY, |o| o as f64)
}

pub fn smoothing_normal_form(
    potential: &PotentialSpec,
    w: &Symbol,
    config: &NormalFormConfig,
) -> Result<NormalForm> {
    potential.validate()?;
    if w.n != config.omega.len() {
        return invalid("perturbation and frequency dimensions differ");
    }
    if !w.is_real(1e-12) {
        return invalid("the perturbation must be a real symbol");
    }
    if potential.l == 1 {
        harmonic_normal_form(potential, w, config)
    } else {
        grid_normal_form(potential, w, config)
    }
}

/// `sum_k f_k / k!` with `f_k = {f_{k-1}; g}^q`, until terms drop below
/// `floor`. Returns the sum and the last neglected term size.
fn lie_series(f: &Symbol, g: &Symbol, floor: f64) -> (Symbol, f64) {
    let mut total = f.clone();
    let mut term = f.clone();
    for k in 1..64 {
        let (next, _) = term.moyal_bracket(g);
        term = next.scale(C64::new(1.0 / k as f64, 0.0)).pruned(1e-3 * floor);
        if term.sup_coeff() <= floor {
            return (total, term.sup_coeff());
        }
        total = total.plus(&term);
    }
    (total, term.sup_coeff())
}

/// `sum_k gdot_k / (k+1)!` with `gdot_0 = omega.d_phi g`.
fn y_series(g: &Symbol, omega: &[f64], floor: f64) -> (Symbol, f64) {
    let mut term = g.torus_derivative(omega);
    let mut total = term.clone();
    for k in 1..64 {
        let (next, _) = term.moyal_bracket(g);
        term = next.scale(C64::new(1.0 / (k + 1) as f64, 0.0)).pruned(1e-3 * floor);
        if term.sup_coeff() <= floor {
            return (total, term.sup_coeff());
        }
        total = total.plus(&term);
    }
    (total, term.sup_coeff())
}

fn harmonic_normal_form(
    potential: &PotentialSpec,
    w: &Symbol,
    config: &NormalFormConfig,
) -> Result<NormalForm> {
    if potential.coeffs != [0.0, 0.0, 1.0] {
        return invalid("the exact l = 1 scheme requires V = x^2");
    }
    let n = w.n;
    let h0 = Symbol::h0(n, potential);
    let eps = C64::new(config.eps, 0.0);
    // Rounding level of sums that contain h0.
    let floor = 64.0 * f64::EPSILON * h0.plus(&w.scale(eps)).sup_coeff();
    let mut pert = w.scale(eps);
    let mut chain = Vec::new();
    let mut ledger = Vec::new();
    let mut truncation: f64 = 0.0;
    let mut z = EnergyProfile::zero();
    let mut normal_total: Vec<f64> = Vec::new();
    let mut residual_order = f64::INFINITY;
    let mut residual = Symbol::zero(n);

    for step in 1..=config.max_steps {
        let sol = solve_hom_mixed(&pert, &config.omega, &config.params).map_err(|e| e.at_stage(step))?;
        if step == 1 && config.eps != 0.0 {
            z = EnergyProfile::Polynomial(sol.average.iter().map(|c| c / config.eps).collect());
        }
        let g = sol.chi;
        if g.sup_coeff() > GUARD {
            return Err(KamError::NonConvergent(format!(
                "step {step}: generator sup {:.3e} exceeds the contraction guard {GUARD}",
                g.sup_coeff()
            )));
        }
        if g.is_zero() {
            normal_total = sol.average;
            residual_order = f64::NEG_INFINITY;
            ledger.push(LedgerRow {
                step,
                generator_order: f64::NEG_INFINITY,
                residual_order,
                sup_coeff: 0.0,
            });
            break;
        }
        let (lie, t1) = lie_series(&h0.plus(&pert), &g, floor);
        let (y, t2) = y_series(&g, &config.omega, floor);
        truncation = truncation.max(t1).max(t2);
        pert = lie.minus(&y).minus(&h0).pruned(floor);
        let split = solve_hom_mixed(&pert, &config.omega, &config.params).map_err(|e| e.at_stage(step))?;
        residual = pert.minus(&split.average_symbol).pruned(floor);
        normal_total = split.average;
        residual_order = order_of(&residual, 1);
        ledger.push(LedgerRow {
            step,
            generator_order: order_of(&g, 1),
            residual_order,
            sup_coeff: residual.sup_coeff(),
        });
        chain.push(Generator::Polynomial(g));
        if residual_order <= -config.target_kappa {
            break;
        }
    }
    if residual_order > -config.target_kappa {
        return Err(KamError::NonConvergent(format!(
            "normal form reached order {residual_order} after {} steps, target {}",
            config.max_steps, -config.target_kappa
        )));
    }
    let ztilde = match (&z, config.eps) {
        (EnergyProfile::Polynomial(lead), e) if e != 0.0 => {
            let len = lead.len().max(normal_total.len());
            let rest = (0..len)
                .map(|i| {
                    normal_total.get(i).copied().unwrap_or(0.0) / e - lead.get(i).copied().unwrap_or(0.0)
                })
                .collect();
            EnergyProfile::Polynomial(rest)
        }
        _ => EnergyProfile::zero(),
    };
    Ok(NormalForm {
        z,
        ztilde,
        residual: Remainder::Polynomial(residual),
        chain,
        ledger,
        truncation_error: truncation,
        achieved_order: residual_order,
    })
}

/// Divide each orbit row by `rate(E)`.
fn per_orbit(g: &GridSymbol, samples: usize, rate: &[f64]) -> GridSymbol {
    let mut out = g.clone();
    for v in out.modes.values_mut() {
        for (i, z) in v.iter_mut().enumerate() {
            *z /= rate[i / samples];
        }
    }
    out
}

fn profile_slope(energies: &[f64], values: &[f64]) -> Vec<f64> {
    let n = energies.len();
    (0..n)
        .map(|e| {
            let (a, b) = if e == 0 {
                (0, 1.min(n - 1))
            } else if e == n - 1 {
                (n - 2, n - 1)
            } else {
                (e - 1, e + 1)
            };
            if a == b {
                0.0
            } else {
                (values[b] - values[a]) / (energies[b] - energies[a])
            }
        })
        .collect()
}

fn grid_normal_form(
    potential: &PotentialSpec,
    w: &Symbol,
    config: &NormalFormConfig,
) -> Result<NormalForm> {
    let l = potential.l;
    if config.energies.first().is_none_or(|e| *e < 1.0) {
        return invalid("orbit energies must start at or above the cutoff E = 1");
    }
    let orbits = Arc::new(OrbitLattice::new(potential, config.energies.clone(), config.samples)?);
    let lattice = Lattice::Orbits(orbits.clone());
    let s = orbits.samples;
    let ne = orbits.energies.len();
    let kmax = config.params.kmax;
    let eps = C64::new(config.eps, 0.0);
    let (w0, _) = cutoff_split(w, potential, &lattice);
    let mut pert = w0.scale(eps);
    let mut order = order_of(w, l);
    let mut normal = vec![0.0; ne];
    let mut z_values = vec![0.0; ne];
    let mut chain = Vec::new();
    let mut ledger = Vec::new();
    let mut truncation: f64 = 0.0;
    let lf = l as f64;

    for step in 1..=config.max_steps {
        let slope = profile_slope(&orbits.energies, &normal);
        let rate: Vec<f64> = slope.iter().map(|d| 1.0 + d).collect();

        // Flow step: {chi; h} = pert - <pert>.
        let flow = solve_hom_flow(&pert).map_err(|e| e.at_stage(step))?;
        let chi = per_orbit(&flow.chi, s, &rate);
        if chi.sup_norm() > GUARD {
            return Err(KamError::NonConvergent(format!(
                "step {step}: flow generator sup {:.3e} exceeds the contraction guard {GUARD}",
                chi.sup_norm()
            )));
        }
        let avg = GridSymbol::lift(&flow.average, &lattice)?;
        let (b1, l1) = pert.plus(&avg)?.bracket(&chi, kmax)?;
        let chi_dot = chi.torus_derivative(&config.omega);
        let (third, l3) = b1.bracket(&chi, kmax)?;
        truncation = truncation.max(third.sup_norm() / 6.0);

        // Torus step on the average: omega.d_phi chi1 = <pert> - mean.
        let torus = solve_hom_torus(&flow.average, &config.omega, &config.params)
            .map_err(|e| e.at_stage(step))?;
        let mean = torus.mean.mean();
        for (e, m) in mean.iter().enumerate() {
            normal[e] += m;
            if step == 1 && config.eps != 0.0 {
                z_values[e] = m / config.eps;
            }
        }
        let chi1 = GridSymbol::lift(&torus.chi, &lattice)?;
        let (b2, l2) = b1.scale(C64::new(0.5, 0.0)).minus(&chi_dot)?.bracket(&chi1, kmax)?;
        truncation = truncation.max(l1 + l2 + l3);

        let tail = {
            let mut t = TorusProfile::zero(flow.average.n, flow.average.energies.clone());
            for (k, v) in &flow.average.modes {
                if k.iter().map(|x| x.abs()).sum::<i32>() > kmax {
                    t.modes.insert(k.clone(), v.clone());
                }
            }
            GridSymbol::lift(&t, &lattice)?
        };
        pert = b1
            .scale(C64::new(0.5, 0.0))
            .minus(&chi_dot)?
            .plus(&b2)?
            .plus(&tail)?;

        let generator_order = order - lf + 1.0;
        order = (order - lf + 1.0).max(2.0 * order - 2.0 * lf);
        ledger.push(LedgerRow {
            step,
            generator_order,
            residual_order: order,
            sup_coeff: pert.sup_norm(),
        });
        chain.push(Generator::Orbit(chi));
        chain.push(Generator::Torus(torus.chi));
        if order <= -config.target_kappa {
            break;
        }
    }
    if order > -config.target_kappa {
        return Err(KamError::NonConvergent(format!(
            "declared order {order} after {} steps, target {}",
            config.max_steps, -config.target_kappa
        )));
    }
    let ztilde_values = normal
        .iter()
        .zip(&z_values)
        .map(|(t, lead)| if config.eps != 0.0 { t / config.eps - lead } else { 0.0 })
        .collect();
    Ok(NormalForm {
        z: EnergyProfile::Sampled {
            energies: orbits.energies.clone(),
            values: z_values,
        },
        ztilde: EnergyProfile::Sampled {
            energies: orbits.energies.clone(),
            values: ztilde_values,
        },
        residual: Remainder::Grid(pert),
        chain,
        ledger,
        truncation_error: truncation,
        achieved_order: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DiophantineParams {
        DiophantineParams::new(0.05, 1.2, 40)
    }

    #[test]
    fn zero_perturbation_gives_identity_chain() {
        let v = PotentialSpec::harmonic();
        let cfg = NormalFormConfig::new(vec![1.37], 1e-2, params());
        let nf = smoothing_normal_form(&v, &Symbol::zero(1), &cfg).unwrap();
        assert!(nf.chain.is_empty());
        assert_eq!(nf.z.sup_abs(), 0.0);
        assert_eq!(nf.ztilde.sup_abs(), 0.0);
        assert_eq!(nf.residual.sup(), 0.0);
    }

    #[test]
    fn forced_oscillator_term_removed_in_one_step() {
        let v = PotentialSpec::harmonic();
        let w = Symbol::monomial(1, 1, 0, vec![1], C64::new(0.5, 0.0))
            .plus(&Symbol::monomial(1, 1, 0, vec![-1], C64::new(0.5, 0.0)));
        let mut cfg = NormalFormConfig::new(vec![1.37], 1e-2, params());
        cfg.max_steps = 1;
        cfg.target_kappa = 0.0;
        let nf = smoothing_normal_form(&v, &w, &cfg);
        // Step one leaves order-eps^2 constants, so order 0 is reached.
        let nf = nf.unwrap();
        match &nf.residual {
            Remainder::Polynomial(r) => {
                let linear = r
                    .terms
                    .iter()
                    .filter(|(m, _)| m.a + m.b >= 1)
                    .map(|(_, c)| c.norm())
                    .fold(0.0, f64::max);
                assert!(linear <= 1e-10, "{linear}");
            }
            Remainder::Grid(_) => unreachable!(),
        }
    }
}
