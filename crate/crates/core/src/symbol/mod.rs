//! Phase-space symbols `sum c_{a,b,k} x^a xi^b e^{i k.phi}`.
//!
//! [`Symbol`] is generic over its coefficient ring so that bracket identities
//! can be checked in exact rational arithmetic ([`ExactCoeff`]) as well as in
//! floating point.

pub mod flow;
pub mod grid;
pub mod homological;
pub mod normal_form;

use crate::error::{invalid, Result};
use crate::linalg::C64;
use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

pub use flow::{average_along_flow, classical_flow, period_action, weight_lambda, FlowTrace};

/// Coefficient ring of a polynomial symbol.
pub trait Coeff:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn ratio(num: i64, den: i64) -> Self;
    fn imag() -> Self;
    fn conj(&self) -> Self;
    fn magnitude(&self) -> f64;
}

impl Coeff for C64 {
    fn ratio(num: i64, den: i64) -> Self {
        C64::new(num as f64 / den as f64, 0.0)
    }
    fn imag() -> Self {
        C64::new(0.0, 1.0)
    }
    fn conj(&self) -> Self {
        C64::conj(self)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Gaussian rationals, for exact identities.
pub type ExactCoeff = num_complex::Complex<Rational64>;

impl Coeff for ExactCoeff {
    fn ratio(num: i64, den: i64) -> Self {
        ExactCoeff::new(Rational64::new(num, den), Rational64::zero())
    }
    fn imag() -> Self {
        ExactCoeff::new(Rational64::zero(), Rational64::one())
    }
    fn conj(&self) -> Self {
        ExactCoeff::new(self.re, -self.im)
    }
    fn magnitude(&self) -> f64 {
        let re = *self.re.numer() as f64 / *self.re.denom() as f64;
        let im = *self.im.numer() as f64 / *self.im.denom() as f64;
        re.hypot(im)
    }
}

/// `x^a xi^b e^{i k.phi}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub a: u32,
    pub b: u32,
    pub k: Vec<i32>,
}

impl Monomial {
    pub fn new(a: u32, b: u32, k: Vec<i32>) -> Self {
        Monomial { a, b, k }
    }

    pub fn k_norm(&self) -> i32 {
        self.k.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Symbol<T: Coeff = C64> {
    pub n: usize,
    pub terms: BTreeMap<Monomial, T>,
}

impl<T: Coeff> Symbol<T> {
    pub fn zero(n: usize) -> Self {
        Symbol {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, value: T) -> Self {
        Self::monomial(n, 0, 0, vec![0; n], value)
    }

    pub fn x(n: usize) -> Self {
        Self::monomial(n, 1, 0, vec![0; n], T::one())
    }

    pub fn xi(n: usize) -> Self {
        Self::monomial(n, 0, 1, vec![0; n], T::one())
    }

    pub fn monomial(n: usize, a: u32, b: u32, k: Vec<i32>, value: T) -> Self {
        assert_eq!(k.len(), n, "Fourier index has wrong dimension");
        let mut s = Self::zero(n);
        s.add_term(Monomial::new(a, b, k), value);
        s
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Monomial, T)>) -> Self {
        let mut s = Self::zero(n);
        for (m, c) in terms {
            s.add_term(m, c);
        }
        s
    }

    pub fn add_term(&mut self, m: Monomial, value: T) {
        if value.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(slot) => {
                slot.insert(value);
            }
            Entry::Occupied(mut slot) => {
                let sum = slot.get().clone() + value;
                if sum.is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, a: u32, b: u32, k: &[i32]) -> T {
        self.terms
            .get(&Monomial::new(a, b, k.to_vec()))
            .cloned()
            .unwrap_or_else(T::zero)
    }

    pub fn scale(&self, factor: T) -> Self {
        let mut out = Self::zero(self.n);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.clone() * factor.clone());
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn times(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let k = m1.k.iter().zip(&m2.k).map(|(p, q)| p + q).collect();
                out.add_term(Monomial::new(m1.a + m2.a, m1.b + m2.b, k), c1.clone() * c2.clone());
            }
        }
        out
    }

    pub fn d_x(&self) -> Self {
        self.derivative(true)
    }

    pub fn d_xi(&self) -> Self {
        self.derivative(false)
    }

    fn derivative(&self, in_x: bool) -> Self {
        let mut out = Self::zero(self.n);
        for (m, c) in &self.terms {
            let power = if in_x { m.a } else { m.b };
            if power == 0 {
                continue;
            }
            let mut lowered = m.clone();
            if in_x {
                lowered.a -= 1;
            } else {
                lowered.b -= 1;
            }
            out.add_term(lowered, c.clone() * T::ratio(power as i64, 1));
        }
        out
    }

    fn nth_derivative(&self, in_x: bool, order: u32) -> Self {
        (0..order).fold(self.clone(), |acc, _| acc.derivative(in_x))
    }

    /// `{f;g} = -d_xi f d_x g + d_xi g d_x f`.
    pub fn poisson(&self, other: &Self) -> Self {
        let first = self.d_xi().times(&other.d_x());
        let second = other.d_xi().times(&self.d_x());
        second.minus(&first)
    }

    /// Weyl composition terms `c_0..c_{j_max}` of `self # other`.
    pub fn moyal_terms(&self, other: &Self, j_max: u32) -> Result<Vec<Self>> {
        if j_max > 3 {
            return invalid("Moyal expansion is limited to j <= 3");
        }
        let mut out = Vec::with_capacity(j_max as usize + 1);
        let minus_i = -T::imag();
        for j in 0..=j_max {
            let mut cj = Self::zero(self.n);
            for k1 in 0..=j {
                let k2 = j - k1;
                let left = self.nth_derivative(false, k1).nth_derivative(true, k2);
                let right = other.nth_derivative(false, k2).nth_derivative(true, k1);
                let mut factor = T::ratio(1, factorial(k1) * factorial(k2))
                    * T::ratio(1, 1 << k1)
                    * T::ratio(if k2 % 2 == 0 { 1 } else { -1 }, 1 << k2);
                for _ in 0..j {
                    factor = factor * minus_i.clone();
                }
                cj = cj.plus(&left.times(&right).scale(factor));
            }
            out.push(cj);
        }
        Ok(out)
    }

    /// `-i (f # g - g # f)` expanded through `j = 3`, with a flag telling
    /// whether the expansion is exact (no derivative of order 5 survives).
    pub fn moyal_bracket(&self, other: &Self) -> (Self, bool) {
        let fg = self.moyal_terms(other, 3).expect("j_max within limit");
        let gf = other.moyal_terms(self, 3).expect("j_max within limit");
        let mut sum = Self::zero(self.n);
        for (a, b) in fg.iter().zip(&gf) {
            sum = sum.plus(&a.minus(b));
        }
        let exact = self.max_total_degree().min(other.max_total_degree()) < 5;
        (sum.scale(-T::imag()), exact)
    }

    pub fn max_total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.a + m.b).max().unwrap_or(0)
    }

    /// Quasi-homogeneous order: `x` weighs 1 and `xi` weighs `l`.
    pub fn order(&self, l: u32) -> Option<u32> {
        self.terms.keys().map(|m| m.a + l * m.b).max()
    }

    pub fn sup_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    /// `c(a, b, -k) = conj c(a, b, k)`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.terms.iter().all(|(m, c)| {
            let mirror = Monomial::new(m.a, m.b, m.k.iter().map(|v| -v).collect());
            let other = self.terms.get(&mirror).cloned().unwrap_or_else(T::zero);
            (c.clone() - other.conj()).magnitude() <= tol * (1.0 + c.magnitude())
        })
    }

    /// Part with `k = 0`.
    pub fn stationary(&self) -> Self {
        Self::from_terms(
            self.n,
            self.terms
                .iter()
                .filter(|(m, _)| m.k.iter().all(|v| *v == 0))
                .map(|(m, c)| (m.clone(), c.clone())),
        )
    }
}

fn factorial(k: u32) -> i64 {
    (1..=k as i64).product()
}

impl Symbol<C64> {
    /// `h0 = xi^2 + V(x)`.
    pub fn h0(n: usize, potential: &crate::basis::PotentialSpec) -> Self {
        let mut s = Self::monomial(n, 0, 2, vec![0; n], C64::new(1.0, 0.0));
        for (a, v) in potential.coeffs.iter().enumerate() {
            s.add_term(Monomial::new(a as u32, 0, vec![0; n]), C64::new(*v, 0.0));
        }
        s
    }

    pub fn eval(&self, x: f64, xi: f64, phi: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let angle: f64 = m.k.iter().zip(phi).map(|(k, p)| *k as f64 * p).sum();
                c * x.powi(m.a as i32) * xi.powi(m.b as i32) * C64::from_polar(1.0, angle)
            })
            .sum()
    }

    /// `omega . d_phi`, acting as `i omega.k` on each mode.
    pub fn torus_derivative(&self, omega: &[f64]) -> Self {
        let mut out = Self::zero(self.n);
        for (m, c) in &self.terms {
            let wk: f64 = m.k.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum();
            out.add_term(m.clone(), c * C64::new(0.0, wk));
        }
        out
    }

    /// Drop coefficients below `tol` in modulus.
    pub fn pruned(&self, tol: f64) -> Self {
        Self::from_terms(
            self.n,
            self.terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(m, c)| (m.clone(), *c)),
        )
    }

    pub fn from_exact(exact: &Symbol<ExactCoeff>) -> Self {
        let to_f = |r: &Rational64| *r.numer() as f64 / *r.denom() as f64;
        Self::from_terms(
            exact.n,
            exact
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), C64::new(to_f(&c.re), to_f(&c.im)))),
        )
    }

    pub fn to_json(&self) -> SymbolRecord {
        SymbolRecord {
            n: self.n,
            rep: "polynomial".into(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| TermRecord {
                    a: m.a,
                    b: m.b,
                    k: m.k.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }

    pub fn from_json(record: &SymbolRecord) -> Result<Self> {
        if record.rep != "polynomial" {
            return invalid(format!("unsupported symbol representation '{}'", record.rep));
        }
        let mut s = Self::zero(record.n);
        for t in &record.terms {
            if t.k.len() != record.n {
                return invalid("term Fourier index has wrong dimension");
            }
            s.add_term(Monomial::new(t.a, t.b, t.k.clone()), C64::new(t.re, t.im));
        }
        Ok(s)
    }
}

/// Serialized polynomial symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub n: usize,
    pub rep: String,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub a: u32,
    pub b: u32,
    pub k: Vec<i32>,
    pub re: f64,
    pub im: f64,
}
