//! Hamiltonian flow of `h0 = xi^2 + V(x)`.

use super::Symbol;
use crate::basis::PotentialSpec;
use crate::error::{invalid, KamError, Result};
use std::f64::consts::PI;

/// `(1 + xi^2 + x^{2l})^{1/(2l)}`.
pub fn weight_lambda(x: f64, xi: f64, l: u32) -> f64 {
    let two_l = 2 * l as i32;
    (1.0 + xi * xi + x.powi(two_l)).powf(1.0 / two_l as f64)
}

/// One period of the orbit through `(0, sqrt(E))`, sampled uniformly in time.
#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub energy: f64,
    pub period: f64,
    /// `(t, x, xi)`, `samples.len()` points covering `[0, T)`.
    pub samples: Vec<(f64, f64, f64)>,
    /// `|(x, xi)(T) - (x, xi)(0)|`.
    pub closure_gap: f64,
    /// `max |h0 - E| / E` along the trace.
    pub energy_drift: f64,
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_6;
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3;

fn verlet(potential: &PotentialSpec, state: (f64, f64), dt: f64) -> (f64, f64) {
    let (mut x, mut xi) = state;
    xi -= 0.5 * dt * potential.derivative(x);
    x += 2.0 * dt * xi;
    xi -= 0.5 * dt * potential.derivative(x);
    (x, xi)
}

/// Fourth-order symmetric composition of Stormer-Verlet steps.
fn step(potential: &PotentialSpec, state: (f64, f64), dt: f64) -> (f64, f64) {
    let s = verlet(potential, state, YOSHIDA_W1 * dt);
    let s = verlet(potential, s, YOSHIDA_W0 * dt);
    verlet(potential, s, YOSHIDA_W1 * dt)
}

/// Detect the period on the section `x = 0, xi > 0`, then resample the
/// orbit with `steps` uniform steps of size `T / steps`.
pub fn classical_flow(potential: &PotentialSpec, energy: f64, steps: usize) -> Result<FlowTrace> {
    if !(energy > 0.0) {
        return invalid("flow energy must be positive");
    }
    if steps < 16 {
        return invalid("at least 16 steps per period are required");
    }
    let start = (0.0, energy.sqrt());
    let estimate = potential.quadrature_period(energy);
    let dt = estimate / steps as f64;
    let mut state = start;
    let mut t = 0.0;
    let mut period = None;
    for _ in 0..(4 * steps) {
        let next = step(potential, state, dt);
        if t > 0.5 * estimate && state.0 < 0.0 && next.0 >= 0.0 {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if step(potential, state, mid).0 < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            period = Some(t + 0.5 * (lo + hi));
            break;
        }
        state = next;
        t += dt;
    }
    let period = period.ok_or_else(|| {
        KamError::NonConvergent(format!("no section crossing found at E = {energy}"))
    })?;

    let dt = period / steps as f64;
    let mut samples = Vec::with_capacity(steps);
    let mut state = start;
    let mut drift: f64 = 0.0;
    for m in 0..steps {
        samples.push((m as f64 * dt, state.0, state.1));
        let h = state.1 * state.1 + potential.value(state.0);
        drift = drift.max((h - energy).abs() / energy);
        state = step(potential, state, dt);
    }
    let closure_gap = (state.0 - start.0).hypot(state.1 - start.1);
    if closure_gap > 1e-6 * energy.sqrt() {
        return Err(KamError::NonConvergent(format!(
            "orbit at E = {energy} fails to close: gap {closure_gap:.3e}"
        )));
    }
    Ok(FlowTrace {
        energy,
        period,
        samples,
        closure_gap,
        energy_drift: drift,
    })
}

/// Period, enclosed area and action `I = A / 2 pi` at one energy.
#[derive(Clone, Copy, Debug)]
pub struct PeriodAction {
    /// From flow closure.
    pub period: f64,
    /// From quadrature of `int dx / sqrt(E - V)`.
    pub period_quadrature: f64,
    /// Area of `{h0 <= E}`.
    pub area: f64,
    pub action: f64,
    /// `|2 pi dI/dE - T| / T` with a central difference.
    pub consistency: f64,
}

pub fn period_action(potential: &PotentialSpec, energy: f64) -> Result<PeriodAction> {
    let trace = classical_flow(potential, energy, 4096)?;
    let area = potential.enclosed_area(energy);
    let delta = 1e-4 * energy;
    let slope =
        (potential.enclosed_area(energy + delta) - potential.enclosed_area(energy - delta)) / (2.0 * delta);
    let consistency = (slope - trace.period).abs() / trace.period;
    if consistency > 1e-4 {
        return Err(KamError::NonConvergent(format!(
            "area quadrature inconsistent with the period at E = {energy}: {consistency:.3e}"
        )));
    }
    Ok(PeriodAction {
        period: trace.period,
        period_quadrature: potential.quadrature_period(energy),
        area,
        action: area / (2.0 * PI),
        consistency,
    })
}

/// `(1/T) int_0^T p(flow_t(0, sqrt E), phi) dt`, real part.
pub fn average_along_flow(
    p: &Symbol,
    potential: &PotentialSpec,
    energy: f64,
    phi: &[f64],
) -> Result<f64> {
    let trace = classical_flow(potential, energy, 4096)?;
    Ok(trace_average(p, &trace, phi, 0))
}

/// Periodic trapezoid average over a trace, starting at sample `offset`.
pub fn trace_average(p: &Symbol, trace: &FlowTrace, phi: &[f64], offset: usize) -> f64 {
    let m = trace.samples.len();
    (0..m)
        .map(|q| {
            let (_, x, xi) = trace.samples[(q + offset) % m];
            p.eval(x, xi, phi).re
        })
        .sum::<f64>()
        / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn weight_values() {
        assert_eq!(weight_lambda(0.0, 0.0, 3), 1.0);
        assert!((weight_lambda(1.0, 0.0, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert!((weight_lambda(0.0, 3.0, 2) - 10f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn harmonic_orbit_has_period_pi() {
        let v = PotentialSpec::harmonic();
        for e in [0.3, 1.0, 17.0] {
            let tr = classical_flow(&v, e, 4096).unwrap();
            assert!((tr.period - PI).abs() < 1e-9, "{}", tr.period);
            assert!(tr.energy_drift < 1e-8);
        }
    }

    #[test]
    fn quartic_period_halves_between_energy_one_and_sixteen() {
        let v = PotentialSpec::monomial(2);
        let t1 = classical_flow(&v, 1.0, 4096).unwrap().period;
        let t16 = classical_flow(&v, 16.0, 4096).unwrap().period;
        assert!((t16 - 0.5 * t1).abs() < 1e-8 * t1);
    }

    #[test]
    fn flow_averages() {
        let v = PotentialSpec::harmonic();
        let x2 = Symbol::x(0).times(&Symbol::x(0));
        let x3 = x2.times(&Symbol::x(0));
        let h0 = Symbol::h0(0, &v);
        assert!((average_along_flow(&h0, &v, 2.5, &[]).unwrap() - 2.5).abs() < 1e-8);
        assert!((average_along_flow(&x2, &v, 2.5, &[]).unwrap() - 1.25).abs() < 1e-8);
        assert!(average_along_flow(&x3, &v, 2.5, &[]).unwrap().abs() < 1e-8);
        let p = x2.scale(C64::new(1.0, 0.0));
        let tr = classical_flow(&v, 2.5, 4096).unwrap();
        assert!((trace_average(&p, &tr, &[], 0) - trace_average(&p, &tr, &[], 1234)).abs() < 1e-12);
    }
}
