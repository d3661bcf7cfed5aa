//! Diophantine frequency sets, resonance widths and Monte Carlo measure
//! estimates on the frequency box `[1, 2]^n`.

use crate::error::{invalid, KamError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `max(1, |m|)`.
pub fn ceil_m(m: f64) -> f64 {
    m.abs().max(1.0)
}

/// The box `[1, 2]^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyBox {
    pub n: usize,
}

impl FrequencyBox {
    pub const LOWER: f64 = 1.0;
    pub const UPPER: f64 = 2.0;

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("the frequency box needs n >= 1");
        }
        Ok(FrequencyBox { n })
    }

    pub fn contains(&self, omega: &[f64]) -> bool {
        omega.len() == self.n && omega.iter().all(|w| (Self::LOWER..=Self::UPPER).contains(w))
    }

    /// Uniform point drawn from the stream `(seed, index)`.
    pub fn sample(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        (0..self.n)
            .map(|_| rng.random_range(Self::LOWER..Self::UPPER))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        (self.n as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophantineParams {
    pub gamma: f64,
    pub tau: f64,
    #[serde(rename = "Kmax")]
    pub kmax: i32,
}

impl DiophantineParams {
    pub fn new(gamma: f64, tau: f64, kmax: i32) -> Self {
        DiophantineParams { gamma, tau, kmax }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return invalid(format!("gamma must be a finite nonnegative number, got {}", self.gamma));
        }
        if !(self.tau > n as f64 - 1.0) {
            return invalid(format!("tau must exceed n - 1 = {}, got {}", n - 1, self.tau));
        }
        if self.kmax < 1 {
            return invalid("Kmax must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiophantineSet {
    /// `|k . omega| >= gamma |k|^-tau`.
    Omega0,
    /// `|k . omega + k0| >= gamma / (1 + |k|^tau)`.
    Omega1,
}

/// Smallest divisor found by a scan, relative to its threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstDivisor {
    /// `(k0, k)`; `k0 = 0` for the homogeneous set.
    pub k0: i64,
    pub k: Vec<i32>,
    pub divisor: f64,
    pub threshold: f64,
}

impl WorstDivisor {
    pub fn ratio(&self) -> f64 {
        if self.threshold == 0.0 {
            f64::INFINITY
        } else {
            self.divisor / self.threshold
        }
    }
}

/// All `k in Z^m` with `|k|_1 <= budget`.
pub(crate) fn lattice_ball(m: usize, budget: i32) -> Vec<Vec<i32>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in -budget..=budget {
        for mut rest in lattice_ball(m - 1, budget - first.abs()) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub(crate) fn l1(k: &[i32]) -> i32 {
    k.iter().map(|x| x.abs()).sum()
}

pub(crate) fn dot(k: &[i32], omega: &[f64]) -> f64 {
    k.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum()
}

/// Precomputed enumeration for repeated scans at one `(n, Kmax)`.
#[derive(Clone, Debug)]
pub struct DiophantineScanner {
    pub n: usize,
    pub params: DiophantineParams,
    heads: Vec<Vec<i32>>,
}

impl DiophantineScanner {
    pub fn new(n: usize, params: DiophantineParams) -> Result<Self> {
        FrequencyBox::new(n)?;
        params.validate(n)?;
        Ok(DiophantineScanner {
            n,
            params,
            heads: lattice_ball(n - 1, params.kmax),
        })
    }

    /// Bound on `|k0|` for the inhomogeneous set.
    pub fn k0_bound(&self) -> i64 {
        (2.0 * self.n as f64 * self.params.kmax as f64 * 2.0).ceil() as i64 + 1
    }

    /// Worst `|k . omega| / (gamma |k|^-tau)` over `0 < |k| <= Kmax`.
    ///
    /// When `gamma <= |omega_n|` only the two integers nearest to the
    /// minimizer in the last component can violate the bound; otherwise
    /// the whole range is scanned.
    pub fn worst_0(&self, omega: &[f64]) -> Option<WorstDivisor> {
        let (gamma, tau, kmax) = (self.params.gamma, self.params.tau, self.params.kmax);
        let wn = omega[self.n - 1];
        let fast = gamma <= wn.abs() && wn != 0.0;
        let mut worst: Option<WorstDivisor> = None;
        for head in &self.heads {
            let budget = kmax - l1(head);
            let partial = dot(head, omega);
            let candidates: Vec<i32> = if fast {
                let x = (-partial / wn).floor() as i32;
                vec![x, x + 1]
            } else {
                (-budget..=budget).collect()
            };
            for kn in candidates {
                if kn.abs() > budget {
                    continue;
                }
                let norm = l1(head) + kn.abs();
                if norm == 0 {
                    continue;
                }
                let divisor = (partial + kn as f64 * wn).abs();
                let threshold = gamma * (norm as f64).powf(-tau);
                let better = match &worst {
                    None => true,
                    Some(w) => {
                        let (lhs, rhs) = (divisor * w.threshold, w.divisor * threshold);
                        lhs < rhs || (lhs == rhs && norm < l1(&w.k))
                    }
                };
                if better {
                    let mut k = head.clone();
                    k.push(kn);
                    worst = Some(WorstDivisor {
                        k0: 0,
                        k,
                        divisor,
                        threshold,
                    });
                }
            }
        }
        worst
    }

    /// Worst `|k . omega + k0| (1 + |k|^tau) / gamma` over `(k0, k) != 0`.
    pub fn worst_1(&self, omega: &[f64]) -> Option<WorstDivisor> {
        let (gamma, tau, kmax) = (self.params.gamma, self.params.tau, self.params.kmax);
        let k0_max = self.k0_bound();
        let fast = gamma <= 1.0;
        let mut worst: Option<WorstDivisor> = None;
        let mut consider = |k: &[i32], k0: i64, value: f64| {
            if k0.abs() > k0_max || (k0 == 0 && l1(k) == 0) {
                return;
            }
            let divisor = (value + k0 as f64).abs();
            let threshold = gamma / (1.0 + (l1(k) as f64).powf(tau));
            let better = match &worst {
                None => true,
                Some(w) => divisor * w.threshold < w.divisor * threshold,
            };
            if better {
                worst = Some(WorstDivisor {
                    k0,
                    k: k.to_vec(),
                    divisor,
                    threshold,
                });
            }
        };
        let wn = omega[self.n - 1];
        for head in &self.heads {
            let budget = kmax - l1(head);
            let partial = dot(head, omega);
            for kn in -budget..=budget {
                let mut k = head.clone();
                k.push(kn);
                let value = partial + kn as f64 * wn;
                if fast {
                    let x = (-value).floor() as i64;
                    consider(&k, x, value);
                    consider(&k, x + 1, value);
                } else {
                    for k0 in -k0_max..=k0_max {
                        consider(&k, k0, value);
                    }
                }
            }
        }
        worst
    }

    pub fn worst(&self, set: DiophantineSet, omega: &[f64]) -> Option<WorstDivisor> {
        match set {
            DiophantineSet::Omega0 => self.worst_0(omega),
            DiophantineSet::Omega1 => self.worst_1(omega),
        }
    }

    pub fn accepts(&self, set: DiophantineSet, omega: &[f64]) -> bool {
        self.worst(set, omega).is_none_or(|w| w.divisor >= w.threshold)
    }
}

fn check_omega(omega: &[f64]) -> Result<()> {
    if !FrequencyBox::new(omega.len())?.contains(omega) {
        return invalid(format!("frequency {omega:?} lies outside [1, 2]^n"));
    }
    Ok(())
}

/// `|k . omega| >= gamma |k|^-tau` for all `0 < |k| <= Kmax` (`|k|` is the
/// l1 norm).
pub fn is_diophantine_0(omega: &[f64], params: &DiophantineParams) -> Result<bool> {
    check_omega(omega)?;
    Ok(DiophantineScanner::new(omega.len(), *params)?.accepts(DiophantineSet::Omega0, omega))
}

/// `|k . omega + k0| >= gamma / (1 + |k|^tau)` for all `(k0, k) != 0`,
/// `|k| <= Kmax`, `|k0| <= ceil(4 n Kmax) + 1`.
pub fn is_diophantine_1(omega: &[f64], params: &DiophantineParams) -> Result<bool> {
    check_omega(omega)?;
    Ok(DiophantineScanner::new(omega.len(), *params)?.accepts(DiophantineSet::Omega1, omega))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub fraction: f64,
    /// Binomial 95% half-width.
    pub ci95: f64,
    pub samples: usize,
    pub excluded: usize,
}

/// Monte Carlo fraction of `[1, 2]^n` failing `set`. Sample `i` is drawn
/// from the stream `(seed, i)`, so the estimate is independent of thread
/// count and scheduling.
pub fn excluded_measure(
    n: usize,
    params: &DiophantineParams,
    set: DiophantineSet,
    samples: usize,
    seed: u64,
) -> Result<MeasureEstimate> {
    if samples < 10_000 {
        return invalid(format!("at least 10^4 samples are required, got {samples}"));
    }
    let scanner = DiophantineScanner::new(n, *params)?;
    let space = FrequencyBox::new(n)?;
    let excluded = if params.gamma == 0.0 {
        0
    } else {
        (0..samples as u64)
            .into_par_iter()
            .filter(|&i| !scanner.accepts(set, &space.sample(seed, i)))
            .count()
    };
    let p = excluded as f64 / samples as f64;
    Ok(MeasureEstimate {
        fraction: p,
        ci95: 1.96 * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceQuery {
    pub i: usize,
    pub j: usize,
    pub k: Vec<i32>,
    /// Exponent `2l / (l + 1)` of the spectral gaps.
    pub d: f64,
    pub alpha: f64,
}

impl ResonanceQuery {
    pub fn validate(&self) -> Result<()> {
        if self.i == 0 || self.j == 0 {
            return invalid("mode indices start at 1");
        }
        if self.i == self.j && l1(&self.k) == 0 {
            return invalid("a resonance query needs i != j or k != 0");
        }
        if !(self.alpha > 0.0) || !(self.d > 0.0) {
            return invalid("alpha and d must be positive");
        }
        Ok(())
    }

    /// `ceil_m(i^d - j^d)`.
    pub fn gap_scale(&self) -> f64 {
        ceil_m((self.i as f64).powf(self.d) - (self.j as f64).powf(self.d))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceWidth {
    /// Width in `r` of the resonant set along the sweep, times `n^((n-1)/2)`.
    pub measured: f64,
    /// `(4 alpha / K0) n^((n-1)/2)`.
    pub bound: f64,
    /// Lipschitz quotient of `lambda_i - lambda_j` along the sweep, divided
    /// by `ceil_m(i^d - j^d)`.
    pub k1_measured: f64,
    /// `K1 <= K0 / 8` and `alpha <= K0 / 2`.
    pub hypotheses_hold: bool,
    /// The necessary condition `|k| >= (K0 / 4) |i^d - j^d|` for a
    /// nonempty set.
    pub may_be_nonempty: bool,
}

/// Sweep `omega(r) = base + r v` with `v in {-1, 1}^n`, `k . v = |k|`, across
/// the box, and measure `{r : |lambda_i - lambda_j + omega . k| < alpha ceil_m(i^d - j^d)}`.
///
/// `k0_lambda` is the global gap constant of the family. With the
/// hypotheses satisfied a measured width above the bound is an error.
pub fn resonance_width(
    lambda: impl Fn(usize, &[f64]) -> f64,
    query: &ResonanceQuery,
    k0_lambda: f64,
    base: &[f64],
    samples: usize,
) -> Result<ResonanceWidth> {
    query.validate()?;
    check_omega(base)?;
    if base.len() != query.k.len() {
        return invalid("query and base frequency dimensions differ");
    }
    if samples < 100 {
        return invalid("a sweep needs at least 100 samples");
    }
    let n = base.len();
    let v: Vec<f64> = query.k.iter().map(|k| if *k >= 0 { 1.0 } else { -1.0 }).collect();
    let (mut r_lo, mut r_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (b, s) in base.iter().zip(&v) {
        let (a, c) = ((FrequencyBox::LOWER - b) * s, (FrequencyBox::UPPER - b) * s);
        r_lo = r_lo.max(a.min(c));
        r_hi = r_hi.min(a.max(c));
    }
    let scale = query.gap_scale();
    let threshold = query.alpha * scale;
    let dr = (r_hi - r_lo) / (samples - 1) as f64;
    let point = |r: f64| -> Vec<f64> {
        base.iter()
            .zip(&v)
            .map(|(b, s)| (b + r * s).clamp(FrequencyBox::LOWER, FrequencyBox::UPPER))
            .collect()
    };
    let mut values = Vec::with_capacity(samples);
    let mut diffs = Vec::with_capacity(samples);
    for m in 0..samples {
        let w = point(r_lo + m as f64 * dr);
        let gap = lambda(query.i, &w) - lambda(query.j, &w);
        diffs.push(gap);
        values.push(gap + dot(&query.k, &w));
    }
    // Length of {|s| < threshold} by linear interpolation between samples.
    let inside = |s: f64| threshold - s.abs();
    let mut width = 0.0;
    for m in 0..samples - 1 {
        let (a, b) = (inside(values[m]), inside(values[m + 1]));
        width += match (a > 0.0, b > 0.0) {
            (true, true) => dr,
            (false, false) => {
                // A thin set between two samples on opposite sides.
                if values[m].signum() != values[m + 1].signum() {
                    let slope = ((values[m + 1] - values[m]) / dr).abs();
                    (2.0 * threshold / slope).min(dr)
                } else {
                    0.0
                }
            }
            (true, false) => dr * a / (a - b),
            (false, true) => dr * b / (b - a),
        };
    }
    let k1 = diffs
        .windows(2)
        .map(|p| (p[1] - p[0]).abs() / dr)
        .fold(0.0, f64::max)
        / scale;
    let cross = (n as f64).powf((n as f64 - 1.0) / 2.0);
    let measured = width * cross;
    let bound = 4.0 * query.alpha / k0_lambda * cross;
    let hypotheses_hold = k1 <= k0_lambda / 8.0 && query.alpha <= k0_lambda / 2.0;
    let gap_abs = ((query.i as f64).powf(query.d) - (query.j as f64).powf(query.d)).abs();
    let may_be_nonempty = l1(&query.k) as f64 >= k0_lambda / 4.0 * gap_abs;
    if hypotheses_hold && measured > bound {
        return Err(KamError::BoundViolation(format!(
            "resonance width {measured:.6e} exceeds {bound:.6e} for (i, j, k) = ({}, {}, {:?})",
            query.i, query.j, query.k
        )));
    }
    Ok(ResonanceWidth {
        measured,
        bound,
        k1_measured: k1,
        hypotheses_hold,
        may_be_nonempty,
    })
}
