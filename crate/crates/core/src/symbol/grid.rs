//! Grid-sampled symbols.
//!
//! Two lattices are supported: a Cartesian `(x, xi)` product grid, and an
//! orbit lattice whose rows are periodic orbits of `h0` at prescribed
//! energies, sampled uniformly in time from the section `x = 0, xi > 0`.
//! On the orbit lattice `(t, E)` at fixed normalized angle are canonical,
//! so `{a;b} = d_t a d_E b - d_E a d_t b`.

use super::flow::{classical_flow, FlowTrace};
use super::Symbol;
use crate::basis::PotentialSpec;
use crate::error::{invalid, KamError, Result};
use crate::linalg::C64;
use rustfft::FftPlanner;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

const TRACE_STEPS: usize = 4096;

#[derive(Clone, Debug)]
pub struct OrbitLattice {
    pub energies: Vec<f64>,
    pub samples: usize,
    pub traces: Vec<FlowTrace>,
}

impl OrbitLattice {
    /// `samples` must divide 4096 (orbits are integrated at 4096 steps and
    /// subsampled).
    pub fn new(potential: &PotentialSpec, energies: Vec<f64>, samples: usize) -> Result<Self> {
        if energies.is_empty() || energies.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("orbit energies must be strictly increasing");
        }
        if energies[0] <= 0.0 {
            return invalid("orbit energies must be positive");
        }
        if samples < 8 || !TRACE_STEPS.is_multiple_of(samples) {
            return invalid("samples per orbit must be a power of two between 8 and 4096");
        }
        let traces = energies
            .iter()
            .map(|&e| classical_flow(potential, e, TRACE_STEPS))
            .collect::<Result<Vec<_>>>()?;
        Ok(OrbitLattice {
            energies,
            samples,
            traces,
        })
    }

    pub fn point(&self, e: usize, m: usize) -> (f64, f64) {
        let stride = TRACE_STEPS / self.samples;
        let (_, x, xi) = self.traces[e].samples[m * stride];
        (x, xi)
    }

    pub fn period(&self, e: usize) -> f64 {
        self.traces[e].period
    }
}

#[derive(Clone, Debug)]
pub enum Lattice {
    Cartesian { xs: Vec<f64>, xis: Vec<f64> },
    Orbits(Arc<OrbitLattice>),
}

impl Lattice {
    pub fn len(&self) -> usize {
        match self {
            Lattice::Cartesian { xs, xis } => xs.len() * xis.len(),
            Lattice::Orbits(o) => o.energies.len() * o.samples,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> (f64, f64) {
        match self {
            Lattice::Cartesian { xs, xis } => (xs[index / xis.len()], xis[index % xis.len()]),
            Lattice::Orbits(o) => o.point(index / o.samples, index % o.samples),
        }
    }

    fn orbits(&self) -> Result<&OrbitLattice> {
        match self {
            Lattice::Orbits(o) => Ok(o),
            Lattice::Cartesian { .. } => invalid("operation needs an orbit lattice"),
        }
    }

    fn same_as(&self, other: &Lattice) -> bool {
        match (self, other) {
            (Lattice::Orbits(a), Lattice::Orbits(b)) => Arc::ptr_eq(a, b),
            (Lattice::Cartesian { xs: a, xis: b }, Lattice::Cartesian { xs: c, xis: d }) => {
                a == c && b == d
            }
            _ => false,
        }
    }
}

/// Fourier modes in `phi` of a function sampled on a lattice.
#[derive(Clone, Debug)]
pub struct GridSymbol {
    pub n: usize,
    pub lattice: Lattice,
    pub modes: BTreeMap<Vec<i32>, Vec<C64>>,
}

impl GridSymbol {
    pub fn zero(n: usize, lattice: Lattice) -> Self {
        GridSymbol {
            n,
            lattice,
            modes: BTreeMap::new(),
        }
    }

    pub fn from_symbol(p: &Symbol, lattice: &Lattice) -> Self {
        let mut by_mode: BTreeMap<Vec<i32>, Symbol> = BTreeMap::new();
        for (m, c) in &p.terms {
            let mut stationary = m.clone();
            stationary.k = vec![0; p.n];
            by_mode
                .entry(m.k.clone())
                .or_insert_with(|| Symbol::zero(p.n))
                .add_term(stationary, *c);
        }
        let zero_phi = vec![0.0; p.n];
        let modes = by_mode
            .into_iter()
            .map(|(k, part)| {
                let values = (0..lattice.len())
                    .map(|i| {
                        let (x, xi) = lattice.point(i);
                        part.eval(x, xi, &zero_phi)
                    })
                    .collect();
                (k, values)
            })
            .collect();
        GridSymbol {
            n: p.n,
            lattice: lattice.clone(),
            modes,
        }
    }

    fn map_points(&self, f: impl Fn(usize, C64) -> C64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().enumerate().map(|(i, z)| f(i, *z)).collect()))
            .collect();
        GridSymbol {
            n: self.n,
            lattice: self.lattice.clone(),
            modes,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        self.map_points(|_, z| z * factor)
    }

    fn combine(&self, other: &GridSymbol, sign: f64) -> Result<Self> {
        if !self.lattice.same_as(&other.lattice) {
            return invalid("grid symbols live on different lattices");
        }
        let mut out = self.clone();
        for (k, v) in &other.modes {
            let slot = out
                .modes
                .entry(k.clone())
                .or_insert_with(|| vec![C64::new(0.0, 0.0); v.len()]);
            slot.iter_mut().zip(v).for_each(|(a, b)| *a += sign * b);
        }
        Ok(out)
    }

    pub fn plus(&self, other: &GridSymbol) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn minus(&self, other: &GridSymbol) -> Result<Self> {
        self.combine(other, -1.0)
    }

    pub fn eval(&self, index: usize, phi: &[f64]) -> C64 {
        self.modes
            .iter()
            .map(|(k, v)| {
                let angle: f64 = k.iter().zip(phi).map(|(k, p)| *k as f64 * p).sum();
                v[index] * C64::from_polar(1.0, angle)
            })
            .sum()
    }

    /// `sup_points sum_k |p_k|`, an upper bound for the sup over all phases.
    pub fn sup_norm(&self) -> f64 {
        (0..self.lattice.len())
            .map(|i| self.modes.values().map(|v| v[i].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `omega . d_phi`.
    pub fn torus_derivative(&self, omega: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, v) in out.modes.iter_mut() {
            let wk: f64 = k.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum();
            v.iter_mut().for_each(|z| *z *= C64::new(0.0, wk));
        }
        out
    }

    /// Mode-wise mean along each orbit.
    pub fn flow_average(&self) -> Result<TorusProfile> {
        let orbits = self.lattice.orbits()?;
        let s = orbits.samples;
        let modes = self
            .modes
            .iter()
            .map(|(k, v)| {
                let means = v.chunks(s).map(|row| row.iter().sum::<C64>() / s as f64).collect();
                (k.clone(), means)
            })
            .collect();
        Ok(TorusProfile {
            n: self.n,
            energies: orbits.energies.clone(),
            modes,
        })
    }

    /// Derivative along the flow, `{self; h0}`, by fourth-order periodic
    /// central differences.
    pub fn flow_derivative(&self) -> Result<Self> {
        let orbits = self.lattice.orbits()?;
        let s = orbits.samples;
        Ok(self.with_modes(|k| {
            let v = &self.modes[k];
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            for (e, row) in v.chunks(s).enumerate() {
                let dt = orbits.period(e) / s as f64;
                for m in 0..s {
                    let at = |o: isize| row[((m as isize + o).rem_euclid(s as isize)) as usize];
                    out[e * s + m] = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * dt);
                }
            }
            out
        }))
    }

    /// Derivative across energies at fixed angle (second order, one-sided
    /// at the ends).
    fn energy_derivative(&self) -> Result<Self> {
        let orbits = self.lattice.orbits()?;
        let s = orbits.samples;
        let es = &orbits.energies;
        let ne = es.len();
        if ne < 3 {
            return invalid("energy derivative needs at least three orbits");
        }
        Ok(self.with_modes(|k| {
            let v = &self.modes[k];
            let mut out = vec![C64::new(0.0, 0.0); v.len()];
            for m in 0..s {
                let f = |e: usize| v[e * s + m];
                for e in 0..ne {
                    let (a, b, c) = if e == 0 {
                        (0, 1, 2)
                    } else if e == ne - 1 {
                        (ne - 3, ne - 2, ne - 1)
                    } else {
                        (e - 1, e, e + 1)
                    };
                    let x = es[e];
                    let (xa, xb, xc) = (es[a], es[b], es[c]);
                    let wa = (2.0 * x - xb - xc) / ((xa - xb) * (xa - xc));
                    let wb = (2.0 * x - xa - xc) / ((xb - xa) * (xb - xc));
                    let wc = (2.0 * x - xa - xb) / ((xc - xa) * (xc - xb));
                    out[e * s + m] = f(a) * wa + f(b) * wb + f(c) * wc;
                }
            }
            out
        }))
    }

    fn with_modes(&self, f: impl Fn(&Vec<i32>) -> Vec<C64>) -> Self {
        let modes = self.modes.keys().map(|k| (k.clone(), f(k))).collect();
        GridSymbol {
            n: self.n,
            lattice: self.lattice.clone(),
            modes,
        }
    }

    /// Pointwise product with Fourier convolution, keeping `|k| <= kmax`.
    /// Returns the product and the sup of the dropped modes.
    pub fn times(&self, other: &GridSymbol, kmax: i32) -> Result<(Self, f64)> {
        if !self.lattice.same_as(&other.lattice) {
            return invalid("grid symbols live on different lattices");
        }
        let mut out = GridSymbol::zero(self.n, self.lattice.clone());
        let mut dropped = BTreeMap::new();
        for (k1, v1) in &self.modes {
            for (k2, v2) in &other.modes {
                let k: Vec<i32> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                let target = if k.iter().map(|x| x.abs()).sum::<i32>() <= kmax {
                    &mut out.modes
                } else {
                    &mut dropped
                };
                let slot = target
                    .entry(k)
                    .or_insert_with(|| vec![C64::new(0.0, 0.0); v1.len()]);
                slot.iter_mut()
                    .zip(v1.iter().zip(v2))
                    .for_each(|(s, (a, b))| *s += a * b);
            }
        }
        let lost = GridSymbol {
            n: self.n,
            lattice: self.lattice.clone(),
            modes: dropped,
        }
        .sup_norm();
        Ok((out, lost))
    }

    /// `{self; other} = d_t self d_E other - d_E self d_t other` on an orbit
    /// lattice; returns the bracket and the sup of dropped Fourier modes.
    pub fn bracket(&self, other: &GridSymbol, kmax: i32) -> Result<(Self, f64)> {
        let (a, la) = self.flow_derivative()?.times(&other.energy_derivative()?, kmax)?;
        let (b, lb) = self.energy_derivative()?.times(&other.flow_derivative()?, kmax)?;
        Ok((a.minus(&b)?, la + lb))
    }

    /// Function of `(E, phi)` spread over each orbit.
    pub fn lift(profile: &TorusProfile, lattice: &Lattice) -> Result<Self> {
        let orbits = lattice.orbits()?;
        if orbits.energies != profile.energies {
            return invalid("profile energies do not match the lattice");
        }
        let s = orbits.samples;
        let modes = profile
            .modes
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().flat_map(|z| std::iter::repeat_n(*z, s)).collect()))
            .collect();
        Ok(GridSymbol {
            n: profile.n,
            lattice: lattice.clone(),
            modes,
        })
    }
}

/// Function of the energy and the torus angle, stored mode-wise on an energy grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusProfile {
    pub n: usize,
    pub energies: Vec<f64>,
    pub modes: BTreeMap<Vec<i32>, Vec<C64>>,
}

impl TorusProfile {
    pub fn zero(n: usize, energies: Vec<f64>) -> Self {
        TorusProfile {
            n,
            energies,
            modes: BTreeMap::new(),
        }
    }

    pub fn eval(&self, e: usize, phi: &[f64]) -> C64 {
        self.modes
            .iter()
            .map(|(k, v)| {
                let angle: f64 = k.iter().zip(phi).map(|(k, p)| *k as f64 * p).sum();
                v[e] * C64::from_polar(1.0, angle)
            })
            .sum()
    }

    /// Real part of the `k = 0` mode.
    pub fn mean(&self) -> Vec<f64> {
        match self.modes.get(&vec![0; self.n]) {
            Some(v) => v.iter().map(|z| z.re).collect(),
            None => vec![0.0; self.energies.len()],
        }
    }

    pub fn sup_mode(&self, k: &[i32]) -> f64 {
        self.modes
            .get(k)
            .map(|v| v.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.energies.len())
            .map(|e| self.modes.values().map(|v| v[e].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Profile of a flow- and torus-invariant quantity, as a function of `h0`.
#[derive(Clone, Debug, PartialEq)]
pub enum EnergyProfile {
    /// `sum_a c_a E^a`.
    Polynomial(Vec<f64>),
    Sampled { energies: Vec<f64>, values: Vec<f64> },
}

impl EnergyProfile {
    pub fn zero() -> Self {
        EnergyProfile::Polynomial(Vec::new())
    }

    /// Linear interpolation for sampled profiles, clamped at the ends.
    pub fn eval(&self, energy: f64) -> f64 {
        match self {
            EnergyProfile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * energy + a),
            EnergyProfile::Sampled { energies, values } => {
                if energies.is_empty() {
                    return 0.0;
                }
                let pos = energies.partition_point(|e| *e < energy);
                if pos == 0 {
                    values[0]
                } else if pos == energies.len() {
                    values[pos - 1]
                } else {
                    let (e0, e1) = (energies[pos - 1], energies[pos]);
                    let w = (energy - e0) / (e1 - e0);
                    values[pos - 1] * (1.0 - w) + values[pos] * w
                }
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            EnergyProfile::Polynomial(c) => c.iter().map(|a| a.abs()).fold(0.0, f64::max),
            EnergyProfile::Sampled { values, .. } => values.iter().map(|a| a.abs()).fold(0.0, f64::max),
        }
    }
}

/// Quintic smoothstep bump: 0 below `E = 1`, 1 above `E = 2`.
pub fn cutoff_eta(energy: f64) -> f64 {
    let s = (energy - 1.0).clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// `W0 = W eta(h0)`, `Winf = W (1 - eta(h0))` on `lattice`.
pub fn cutoff_split(
    w: &Symbol,
    potential: &PotentialSpec,
    lattice: &Lattice,
) -> (GridSymbol, GridSymbol) {
    let full = GridSymbol::from_symbol(w, lattice);
    let eta: Vec<f64> = (0..lattice.len())
        .map(|i| {
            let (x, xi) = lattice.point(i);
            cutoff_eta(xi * xi + potential.value(x))
        })
        .collect();
    let inner = full.map_points(|i, z| z * eta[i]);
    let outer = full.map_points(|i, z| z * (1.0 - eta[i]));
    (inner, outer)
}

/// Result of the flow homological equation `{chi; h0} = p - <p>`.
#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub chi: GridSymbol,
    pub average: TorusProfile,
    /// `sup |{chi;h0} - (p - <p>)| / sup |p|`.
    pub residual: f64,
    /// `(energy, sample, mode)` of the worst residual.
    pub worst: (f64, usize, Vec<i32>),
}

/// Solve `{chi; h0} = p - <p>` orbit by orbit with
/// `chi = (1/T) int_0^T t (p - <p>)(flow_t) dt`.
///
/// The integral is evaluated exactly on the trigonometric interpolant of the
/// orbit samples, where it reduces to the zero-mean antiderivative
/// `chi_q = p_q T / (2 pi i q)`.
pub fn solve_hom_flow(p: &GridSymbol) -> Result<FlowSolution> {
    let orbits = p.lattice.orbits()?;
    let s = orbits.samples;
    let scale = p.sup_norm();
    for (e, energy) in orbits.energies.iter().enumerate() {
        if *energy < 1.0 {
            let local = p
                .modes
                .values()
                .flat_map(|v| v[e * s..(e + 1) * s].iter())
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if local > 1e-14 * scale.max(1e-300) {
                return invalid(format!(
                    "input does not vanish below the cutoff (E = {energy}); apply cutoff_split first"
                ));
            }
        }
    }
    let average = p.flow_average()?;
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(s);
    let inverse = planner.plan_fft_inverse(s);
    let mut chi = GridSymbol::zero(p.n, p.lattice.clone());
    let mut oscillating = GridSymbol::zero(p.n, p.lattice.clone());
    for (k, v) in &p.modes {
        let mut chi_vals = vec![C64::new(0.0, 0.0); v.len()];
        let mut osc_vals = vec![C64::new(0.0, 0.0); v.len()];
        for (e, row) in v.chunks(s).enumerate() {
            let mean = average.modes[k][e];
            let mut buf: Vec<C64> = row.iter().map(|z| z - mean).collect();
            osc_vals[e * s..(e + 1) * s].copy_from_slice(&buf);
            forward.process(&mut buf);
            let period = orbits.period(e);
            for (q, z) in buf.iter_mut().enumerate() {
                let freq = if q <= s / 2 { q as i64 } else { q as i64 - s as i64 };
                if freq == 0 || 2 * q == s {
                    *z = C64::new(0.0, 0.0);
                } else {
                    *z *= period / (C64::new(0.0, 2.0 * PI * freq as f64) * s as f64);
                }
            }
            inverse.process(&mut buf);
            chi_vals[e * s..(e + 1) * s].copy_from_slice(&buf);
        }
        chi.modes.insert(k.clone(), chi_vals);
        oscillating.modes.insert(k.clone(), osc_vals);
    }

    let check = chi.flow_derivative()?.minus(&oscillating)?;
    let mut residual = 0.0;
    let mut worst = (orbits.energies[0], 0, vec![0; p.n]);
    for (k, v) in &check.modes {
        for (i, z) in v.iter().enumerate() {
            if z.norm() > residual {
                residual = z.norm();
                worst = (orbits.energies[i / s], i % s, k.clone());
            }
        }
    }
    let residual = if scale > 0.0 { residual / scale } else { residual };
    if residual > 1e-4 {
        return Err(KamError::Residual(format!(
            "flow homological residual {residual:.3e} at E = {}, sample {}, mode {:?}",
            worst.0, worst.1, worst.2
        )));
    }
    Ok(FlowSolution {
        chi,
        average,
        residual,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x2() -> Symbol {
        Symbol::x(0).times(&Symbol::x(0))
    }

    #[test]
    fn cutoff_regions_and_partition() {
        let v = PotentialSpec::harmonic();
        let lattice = Lattice::Cartesian {
            xs: (0..41).map(|i| -2.0 + 0.1 * i as f64).collect(),
            xis: (0..41).map(|i| -2.0 + 0.1 * i as f64).collect(),
        };
        let w = x2().plus(&Symbol::xi(0));
        let (w0, winf) = cutoff_split(&w, &v, &lattice);
        let full = GridSymbol::from_symbol(&w, &lattice);
        let sum = w0.plus(&winf).unwrap().minus(&full).unwrap();
        assert!(sum.sup_norm() <= 1e-12);
        for i in 0..lattice.len() {
            let (x, xi) = lattice.point(i);
            let h = x * x + xi * xi;
            if h < 1.0 {
                assert_eq!(w0.eval(i, &[]).norm(), 0.0);
            }
            if h > 2.0 {
                assert_eq!(winf.eval(i, &[]).norm(), 0.0);
            }
        }
    }

    #[test]
    fn invariant_input_gives_zero_generator() {
        let v = PotentialSpec::harmonic();
        let lattice = Lattice::Orbits(Arc::new(
            OrbitLattice::new(&v, vec![1.0, 2.0, 4.0], 256).unwrap(),
        ));
        let h0 = GridSymbol::from_symbol(&Symbol::h0(0, &v), &lattice);
        let sol = solve_hom_flow(&h0).unwrap();
        assert!(sol.chi.sup_norm() < 1e-10);
    }

    #[test]
    fn input_below_cutoff_is_rejected() {
        let v = PotentialSpec::harmonic();
        let lattice = Lattice::Orbits(Arc::new(OrbitLattice::new(&v, vec![0.5, 2.0], 64).unwrap()));
        let p = GridSymbol::from_symbol(&x2(), &lattice);
        assert!(solve_hom_flow(&p).is_err());
    }
}
