//! Torus and mixed homological equations.

use super::grid::TorusProfile;
use super::{Monomial, Symbol};
use crate::basis::binomial;
use crate::diophantine::{is_diophantine_0, is_diophantine_1, DiophantineParams};
use crate::error::{invalid, KamError, Result};
use crate::linalg::C64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn k_norm(k: &[i32]) -> i32 {
    k.iter().map(|v| v.abs()).sum()
}

fn k_dot(k: &[i32], omega: &[f64]) -> f64 {
    k.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum()
}

#[derive(Clone, Debug)]
pub struct TorusSolution {
    pub chi: TorusProfile,
    /// Torus mean `p_0`.
    pub mean: TorusProfile,
    /// `sup |omega.d_phi chi - (p - pbar)|` on the check grid.
    pub residual: f64,
    /// `sum_{|k| > Kmax} sup_E |p_k|`, the modes left unsolved.
    pub tail_bound: f64,
    pub min_divisor_ratio: f64,
}

/// Points per torus dimension of the residual check grid.
fn check_points(n: usize) -> usize {
    match n {
        0 | 1 => 64,
        2 => 24,
        _ => 8,
    }
}

fn torus_grid(n: usize) -> Vec<Vec<f64>> {
    let m = check_points(n);
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let q = idx % m;
                    idx /= m;
                    2.0 * PI * q as f64 / m as f64
                })
                .collect()
        })
        .collect()
}

/// Solve `omega.d_phi chi = p - pbar` mode by mode, `chi_k = p_k / (i omega.k)`
/// for `0 < |k| <= Kmax`.
///
/// Accepted only if the residual, evaluated directly on a torus grid, is
/// within the tail of the dropped modes.
pub fn solve_hom_torus(
    p: &TorusProfile,
    omega: &[f64],
    params: &DiophantineParams,
) -> Result<TorusSolution> {
    if omega.len() != p.n {
        return invalid("frequency dimension does not match the profile");
    }
    if !is_diophantine_0(omega, params)? {
        return Err(KamError::NonDiophantine(format!(
            "omega = {omega:?} fails the homogeneous condition with gamma = {}, tau = {}, Kmax = {}",
            params.gamma, params.tau, params.kmax
        )));
    }
    let zero_k = vec![0; p.n];
    let mut chi = TorusProfile::zero(p.n, p.energies.clone());
    let mut mean = TorusProfile::zero(p.n, p.energies.clone());
    let mut tail = TorusProfile::zero(p.n, p.energies.clone());
    let mut tail_bound = 0.0;
    let mut min_ratio = f64::INFINITY;
    for (k, v) in &p.modes {
        let norm = k_norm(k);
        if *k == zero_k {
            mean.modes.insert(k.clone(), v.clone());
        } else if norm <= params.kmax {
            let divisor = k_dot(k, omega);
            let threshold = params.gamma * (norm as f64).powf(-params.tau);
            if divisor.abs() < threshold {
                return Err(KamError::Divisor {
                    i: 0,
                    j: 0,
                    k: k.clone(),
                    divisor,
                    bound: threshold,
                });
            }
            min_ratio = min_ratio.min(divisor.abs() / threshold);
            let factor = C64::new(0.0, divisor).inv();
            chi.modes.insert(k.clone(), v.iter().map(|z| z * factor).collect());
        } else {
            tail_bound += p.sup_mode(k);
            tail.modes.insert(k.clone(), v.clone());
        }
    }

    let mut residual: f64 = 0.0;
    for phi in torus_grid(p.n) {
        for e in 0..p.energies.len() {
            let lhs: C64 = chi
                .modes
                .iter()
                .map(|(k, v)| {
                    C64::new(0.0, k_dot(k, omega)) * v[e] * C64::from_polar(1.0, k_dot(k, &phi))
                })
                .sum();
            let rhs = p.eval(e, &phi) - mean.eval(e, &phi);
            residual = residual.max((lhs - rhs).norm());
        }
    }
    let scale = p.sup_norm().max(f64::MIN_POSITIVE);
    if residual > tail_bound + 1e-12 * scale {
        return Err(KamError::Residual(format!(
            "torus homological residual {residual:.3e} exceeds tail bound {tail_bound:.3e}"
        )));
    }
    Ok(TorusSolution {
        chi,
        mean,
        residual,
        tail_bound,
        min_divisor_ratio: min_ratio,
    })
}

/// Polynomial in `z = x + i xi`, `zbar` with torus modes.
type ZPoly = BTreeMap<(u32, u32, Vec<i32>), C64>;

fn zpoly_add(p: &mut ZPoly, key: (u32, u32, Vec<i32>), value: C64) {
    *p.entry(key).or_insert(C64::new(0.0, 0.0)) += value;
}

/// `x^a xi^b` with `x = (z + zbar)/2`, `xi = (z - zbar)/(2i)`.
fn to_z(p: &Symbol) -> ZPoly {
    let mut out = ZPoly::new();
    for (m, c) in &p.terms {
        let scale = *c / (C64::new(2.0, 0.0).powu(m.a) * C64::new(0.0, 2.0).powu(m.b));
        for r in 0..=m.a {
            for s in 0..=m.b {
                // (z + zbar)^a (z - zbar)^b
                let sign = if (m.b - s) % 2 == 0 { 1.0 } else { -1.0 };
                let w = binomial(m.a, r) * binomial(m.b, s) * sign;
                zpoly_add(&mut out, (r + s, m.a - r + m.b - s, m.k.clone()), scale * w);
            }
        }
    }
    out
}

/// `z^a zbar^b = (x + i xi)^a (x - i xi)^b`.
fn from_z(p: &ZPoly, n: usize) -> Symbol {
    let mut out = Symbol::zero(n);
    for ((a, b, k), c) in p {
        for r in 0..=*a {
            for s in 0..=*b {
                let w = binomial(*a, r)
                    * binomial(*b, s)
                    * C64::new(0.0, 1.0).powu(a - r)
                    * C64::new(0.0, -1.0).powu(b - s);
                out.add_term(Monomial::new(r + s, a - r + b - s, k.clone()), c * w);
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub chi: Symbol,
    /// Resonant part `sum c_a h0^a`, as polynomial coefficients in `h0`.
    pub average: Vec<f64>,
    pub average_symbol: Symbol,
    /// `sup_coeff({chi;h0} + omega.d_phi chi - (p - average)) / sup_coeff(p)`.
    pub residual: f64,
    pub min_divisor_ratio: f64,
}

/// Solve `{h0, chi} - omega.d_phi chi + p = <p>` for `h0 = xi^2 + x^2`.
///
/// In `z = x + i xi` the flow is `z(t) = e^{-2it} z`, so the monomial
/// `z^a zbar^b e^{ik.phi}` is an eigenvector of `{. ; h0} + omega.d_phi` with
/// eigenvalue `i (omega.k + 2(b - a))`. Terms with `a = b, k = 0` are
/// functions of `h0` and form the average.
pub fn solve_hom_mixed(
    p: &Symbol,
    omega: &[f64],
    params: &DiophantineParams,
) -> Result<MixedSolution> {
    if omega.len() != p.n {
        return invalid("frequency dimension does not match the symbol");
    }
    if !is_diophantine_1(omega, params)? {
        return Err(KamError::NonDiophantine(format!(
            "omega = {omega:?} fails the shifted condition with gamma = {}, tau = {}, Kmax = {}",
            params.gamma, params.tau, params.kmax
        )));
    }
    let zero_k = vec![0; p.n];
    let zp = to_z(p);
    let mut chi_z = ZPoly::new();
    let mut avg_z = ZPoly::new();
    let mut min_ratio = f64::INFINITY;
    for ((a, b, k), c) in &zp {
        if c.norm() == 0.0 {
            continue;
        }
        if a == b && *k == zero_k {
            zpoly_add(&mut avg_z, (*a, *b, k.clone()), *c);
            continue;
        }
        let norm = k_norm(k);
        if norm > params.kmax {
            return invalid(format!("mode {k:?} lies beyond Kmax = {}", params.kmax));
        }
        let delta = k_dot(k, omega) + 2.0 * (*b as f64 - *a as f64);
        let threshold = params.gamma / (1.0 + (norm as f64).powf(params.tau));
        if delta.abs() < threshold {
            return Err(KamError::Divisor {
                i: *a as usize,
                j: *b as usize,
                k: k.clone(),
                divisor: delta,
                bound: threshold,
            });
        }
        if threshold > 0.0 {
            min_ratio = min_ratio.min(delta.abs() / threshold);
        }
        zpoly_add(&mut chi_z, (*a, *b, k.clone()), c / C64::new(0.0, delta));
    }
    let chi = from_z(&chi_z, p.n).pruned(1e-15 * p.sup_coeff());
    let average_symbol = from_z(&avg_z, p.n).pruned(1e-15 * p.sup_coeff());
    let degree = avg_z.keys().map(|(a, _, _)| *a).max().map_or(0, |a| a as usize + 1);
    let mut average = vec![0.0; degree];
    for ((a, _, _), c) in &avg_z {
        average[*a as usize] += c.re;
    }

    let h0 = Symbol::h0(p.n, &crate::basis::PotentialSpec::harmonic());
    let lhs = chi.poisson(&h0).plus(&chi.torus_derivative(omega));
    let check = lhs.minus(&p.minus(&average_symbol));
    let scale = p.sup_coeff();
    let residual = if scale > 0.0 { check.sup_coeff() / scale } else { check.sup_coeff() };
    if residual > 1e-10 {
        return Err(KamError::Residual(format!(
            "mixed homological residual {residual:.3e} exceeds 1e-10"
        )));
    }
    Ok(MixedSolution {
        chi,
        average,
        average_symbol,
        residual,
        min_divisor_ratio: min_ratio,
    })
}
