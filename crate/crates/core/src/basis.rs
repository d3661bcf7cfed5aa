//! Spectral frame of `H0 = -d^2/dx^2 + V(x)`.
//!
//! Eigenpairs come from second-order central differences on a uniform
//! Dirichlet grid. Eigenvalues are bisected with Sturm counts on three
//! nested grids and Romberg-extrapolated in `h^2`; eigenvectors are taken
//! from the finest grid by inverse iteration.

use crate::error::{invalid, KamError, Result};
use crate::linalg::{c, spectral_norm, CMat, C64};
use serde::{Deserialize, Serialize};

/// Polynomial potential `V(x) = sum_i coeffs[i] x^i` of degree `2l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub l: u32,
    pub coeffs: Vec<f64>,
}

impl PotentialSpec {
    pub fn new(l: u32, coeffs: Vec<f64>) -> Result<Self> {
        let spec = PotentialSpec { l, coeffs };
        spec.validate()?;
        Ok(spec)
    }

    /// `V(x) = x^{2l}`.
    pub fn monomial(l: u32) -> Self {
        let mut coeffs = vec![0.0; 2 * l as usize + 1];
        coeffs[2 * l as usize] = 1.0;
        PotentialSpec { l, coeffs }
    }

    pub fn harmonic() -> Self {
        Self::monomial(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return invalid("l must be a positive integer");
        }
        let deg = 2 * self.l as usize;
        if self.coeffs.len() != deg + 1 {
            return invalid(format!(
                "expected {} coefficients for l = {}, got {}",
                deg + 1,
                self.l,
                self.coeffs.len()
            ));
        }
        if !(self.coeffs[deg] > 0.0) {
            return invalid("leading coefficient of V must be positive");
        }
        if self.coeffs[0] != 0.0 {
            return invalid("V(0) must vanish");
        }
        let reach = self.root_bound();
        let samples = 4000;
        for s in 0..=samples {
            let x = -reach + 2.0 * reach * s as f64 / samples as f64;
            if x.abs() < 1e-12 * reach {
                continue;
            }
            if self.derivative(x) * x <= 0.0 {
                return invalid(format!("V' vanishes or changes sign near x = {x:.6}"));
            }
        }
        Ok(())
    }

    fn root_bound(&self) -> f64 {
        let lead = *self.coeffs.last().unwrap();
        1.0 + self.coeffs.iter().map(|a| a.abs()).sum::<f64>() / lead
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &a)| acc * x + i as f64 * a)
    }

    /// Left and right solutions of `V(x) = E`, `E > 0`.
    pub fn turning_points(&self, energy: f64) -> (f64, f64) {
        let side = |sign: f64| {
            let mut hi = 1.0;
            while self.value(sign * hi) < energy {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.value(sign * mid) < energy {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            sign * 0.5 * (lo + hi)
        };
        (side(-1.0), side(1.0))
    }

    /// `int_{x-}^{x+} f(x, E - V(x)) dx` with the square-root endpoint
    /// behaviour removed by `x = x_pm (1 - u^2)` on each half.
    fn turning_quadrature(&self, energy: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (xm, xp) = self.turning_points(energy);
        let (nodes, weights) = crate::linalg::gauss_legendre(96, 0.0, 1.0);
        let mut total = 0.0;
        for end in [xm, xp] {
            for (u, w) in nodes.iter().zip(&weights) {
                let x = end * (1.0 - u * u);
                let gap = (energy - self.value(x)).max(0.0);
                total += w * 2.0 * end.abs() * u * f(gap);
            }
        }
        total
    }

    /// Area of `{xi^2 + V(x) <= E}`.
    pub fn enclosed_area(&self, energy: f64) -> f64 {
        self.turning_quadrature(energy, |gap| 2.0 * gap.sqrt())
    }

    /// Period of the flow of `xi^2 + V` at energy `E`, by quadrature.
    pub fn quadrature_period(&self, energy: f64) -> f64 {
        self.turning_quadrature(energy, |gap| 1.0 / gap.sqrt())
    }

    /// Bohr-Sommerfeld estimate of the `j`-th eigenvalue (from 1).
    pub fn semiclassical_level(&self, j: usize) -> f64 {
        let target = 2.0 * std::f64::consts::PI * (j as f64 - 0.5);
        let mut hi = 1.0;
        while self.enclosed_area(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.enclosed_area(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Uniform Dirichlet grid on `[-L, L]` with `points` interior nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    /// Half-width where `V` reaches three times the estimated `lambda_N`.
    pub fn for_basis(potential: &PotentialSpec, n: usize) -> GridSpec {
        let top = potential.semiclassical_level(n).max(1.0);
        let (xm, xp) = potential.turning_points(3.0 * top);
        GridSpec {
            half_width: xm.abs().max(xp),
            points: (8 * n).max(1024),
        }
    }

    fn refined(&self, level: u32) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            points: (self.points + 1) * (1 << level) - 1,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points + 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.spacing()
    }
}

/// Sobolev weights `j^s` and smoothing offset `kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevFrame {
    pub s: f64,
    pub kappa: f64,
}

impl SobolevFrame {
    pub const L2: SobolevFrame = SobolevFrame { s: 0.0, kappa: 0.0 };

    pub fn new(s: f64, kappa: f64) -> Result<Self> {
        if !(s >= 0.0 && kappa >= 0.0) {
            return invalid("Sobolev frame needs s >= 0 and kappa >= 0");
        }
        Ok(SobolevFrame { s, kappa })
    }

    pub fn weight(&self, j: usize) -> f64 {
        (j as f64).powf(self.s)
    }
}

/// Norm of `diag(j^s) F diag(j^{-(s-kappa)})` on `l^2`.
pub fn weighted_operator_norm(f: &CMat, frame: SobolevFrame) -> Result<f64> {
    if f.nrows() != f.ncols() {
        return invalid("weighted norm needs a square matrix");
    }
    if frame.s == 0.0 && frame.kappa == 0.0 {
        return Ok(spectral_norm(f));
    }
    let shift = frame.s - frame.kappa;
    let g = CMat::from_fn(f.nrows(), f.ncols(), |i, j| {
        f[(i, j)] * ((i + 1) as f64).powf(frame.s) * ((j + 1) as f64).powf(-shift)
    });
    Ok(spectral_norm(&g))
}

/// Truncated eigenbasis of `H0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenBasis {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Interior points of the coarsest grid.
    #[serde(rename = "M")]
    pub points: usize,
    /// Extrapolated eigenvalues.
    pub lambda_v: Vec<f64>,
    /// Eigenvalues of the finest discrete operator (the residual reference).
    pub lambda_grid: Vec<f64>,
    /// Number of leading eigenpairs certified (the rest are untrusted).
    pub certified: usize,
    /// Eigenvectors sampled on the finest grid, normalized in `h * sum`.
    pub vectors: Vec<Vec<f64>>,
    pub potential: PotentialSpec,
}

const LEVELS: u32 = 3;

impl EigenBasis {
    pub fn fine_grid(&self) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            points: self.points,
        }
        .refined(LEVELS - 1)
    }

    pub fn is_certified(&self, j: usize) -> bool {
        j >= 1 && j <= self.certified
    }

    /// Grid inner product `h sum u v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.fine_grid().spacing() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Matrix of the Weyl quantization of `x^a xi^b` in this basis,
    /// `2^{-a} sum_r C(a,r) x^r D^b x^{a-r}` with `D = -i d/dx`.
    pub fn weyl_monomial(&self, a: u32, b: u32) -> CMat {
        let grid = self.fine_grid();
        let h = grid.spacing();
        let xs: Vec<f64> = (0..grid.points).map(|i| grid.node(i)).collect();
        let mut applied = vec![vec![0.0; grid.points]; self.n];
        for (col, v) in self.vectors.iter().enumerate() {
            let out = &mut applied[col];
            for r in 0..=a {
                let weight = binomial(a, r) / 2f64.powi(a as i32);
                let mut f: Vec<f64> = v
                    .iter()
                    .zip(&xs)
                    .map(|(vi, x)| vi * x.powi((a - r) as i32))
                    .collect();
                for _ in 0..b {
                    f = central_difference(&f, h);
                }
                for ((o, fi), x) in out.iter_mut().zip(&f).zip(&xs) {
                    *o += weight * x.powi(r as i32) * fi;
                }
            }
        }
        let phase = C64::new(0.0, -1.0).powu(b);
        let raw = CMat::from_fn(self.n, self.n, |i, j| {
            phase * c(self.inner(&self.vectors[i], &applied[j]))
        });
        (&raw + raw.adjoint()) * c(0.5)
    }
}

fn central_difference(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    (0..m)
        .map(|i| {
            let right = if i + 1 < m { f[i + 1] } else { 0.0 };
            let left = if i > 0 { f[i - 1] } else { 0.0 };
            (right - left) / (2.0 * h)
        })
        .collect()
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    fn new(potential: &PotentialSpec, grid: GridSpec) -> Self {
        let h = grid.spacing();
        let diag = (0..grid.points)
            .map(|i| 2.0 / (h * h) + potential.value(grid.node(i)))
            .collect();
        Tridiagonal {
            diag,
            off: -1.0 / (h * h),
        }
    }

    /// Number of eigenvalues strictly below `mu`.
    fn count_below(&self, mu: f64) -> usize {
        let e2 = self.off * self.off;
        let mut count = 0;
        let mut q = 1.0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - mu } else { d - mu - e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + mu.abs()).max(1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn lowest(&self, n: usize) -> Vec<f64> {
        let mut upper = 1.0;
        while self.count_below(upper) < n {
            upper *= 2.0;
        }
        let mut values = Vec::with_capacity(n);
        let mut floor = self.diag.iter().fold(f64::INFINITY, |m, d| m.min(*d)) + 2.0 * self.off;
        for j in 0..n {
            let (mut lo, mut hi) = (floor, upper);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.count_below(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                    break;
                }
            }
            let value = 0.5 * (lo + hi);
            values.push(value);
            floor = lo;
        }
        values
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = v.len();
        (0..m)
            .map(|i| {
                let mut out = self.diag[i] * v[i];
                if i > 0 {
                    out += self.off * v[i - 1];
                }
                if i + 1 < m {
                    out += self.off * v[i + 1];
                }
                out
            })
            .collect()
    }

    /// Solve `(T - mu) y = rhs` by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, mu: f64, rhs: &[f64]) -> Vec<f64> {
        let m = rhs.len();
        let tiny = f64::EPSILON * (self.off.abs() * 4.0).max(1.0);
        // Row i holds (a0, a1, a2) on columns i, i+1, i+2 after elimination.
        let mut u0 = vec![0.0; m];
        let mut u1 = vec![0.0; m];
        let mut u2 = vec![0.0; m];
        let mut b = rhs.to_vec();
        let mut cur = [self.diag[0] - mu, if m > 1 { self.off } else { 0.0 }, 0.0];
        for i in 0..m {
            if i + 1 < m {
                let below = [
                    self.off,
                    self.diag[i + 1] - mu,
                    if i + 2 < m { self.off } else { 0.0 },
                ];
                let (mut top, mut bot, mut bt, mut bb) = (cur, below, b[i], b[i + 1]);
                if below[0].abs() > cur[0].abs() {
                    std::mem::swap(&mut top, &mut bot);
                    std::mem::swap(&mut bt, &mut bb);
                }
                if top[0].abs() < tiny {
                    top[0] = tiny;
                }
                let factor = bot[0] / top[0];
                u0[i] = top[0];
                u1[i] = top[1];
                u2[i] = top[2];
                b[i] = bt;
                cur = [bot[1] - factor * top[1], bot[2] - factor * top[2], 0.0];
                b[i + 1] = bb - factor * bt;
            } else {
                u0[i] = if cur[0].abs() < tiny { tiny } else { cur[0] };
            }
        }
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = b[i];
            if i + 1 < m {
                acc -= u1[i] * y[i + 1];
            }
            if i + 2 < m {
                acc -= u2[i] * y[i + 2];
            }
            y[i] = acc / u0[i];
        }
        y
    }
}

/// Eigenpairs of `H0` on the truncated grid.
pub fn solve_h0(potential: &PotentialSpec, n: usize, grid: GridSpec) -> Result<EigenBasis> {
    potential.validate()?;
    if n == 0 {
        return invalid("N must be positive");
    }
    if grid.points < 8 * n {
        return invalid(format!("M = {} is below 8 N = {}", grid.points, 8 * n));
    }
    if !(grid.half_width > 0.0) {
        return invalid("grid half-width must be positive");
    }

    let levels: Vec<Vec<f64>> = (0..LEVELS)
        .map(|q| Tridiagonal::new(potential, grid.refined(q)).lowest(n))
        .collect();
    let top = levels[0][n - 1];
    let edge = potential
        .value(-grid.half_width)
        .min(potential.value(grid.half_width));
    if edge < 2.0 * top {
        return Err(KamError::GridTooSmall(format!(
            "V(+-L) = {edge:.4} is below 2 lambda_N = {:.4}; turning region not contained",
            2.0 * top
        )));
    }
    let lambda_v: Vec<f64> = (0..n)
        .map(|j| (64.0 * levels[2][j] - 20.0 * levels[1][j] + levels[0][j]) / 45.0)
        .collect();
    if lambda_v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KamError::NonConvergent("spectrum is not strictly increasing".into()));
    }

    let fine = grid.refined(LEVELS - 1);
    let op = Tridiagonal::new(potential, fine);
    let h = fine.spacing();
    let lambda_grid = levels[LEVELS as usize - 1].clone();
    let certified = ((0.6 * n as f64).floor() as usize).max(1);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (j, &mu) in lambda_grid.iter().enumerate() {
        let shift = mu + 1e-13 * mu.abs().max(1.0);
        let mut v: Vec<f64> = (0..fine.points)
            .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7 + j as f64).sin())
            .collect();
        for _ in 0..3 {
            v = op.shifted_solve(shift, &v);
            normalize(&mut v, h);
        }
        for _ in 0..2 {
            for prev in &vectors {
                let overlap = h * prev.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= overlap * p);
            }
            normalize(&mut v, h);
        }
        fix_sign(&mut v);
        if j < certified {
            let tv = op.apply(&v);
            let residual =
                (h * tv.iter().zip(&v).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>()).sqrt();
            if residual > 1e-8 * mu.abs().max(1.0) {
                return Err(KamError::NonConvergent(format!(
                    "eigenpair {} residual {residual:.3e}",
                    j + 1
                )));
            }
        }
        vectors.push(v);
    }

    Ok(EigenBasis {
        n,
        half_width: grid.half_width,
        points: grid.points,
        lambda_v,
        lambda_grid,
        certified,
        vectors,
        potential: potential.clone(),
    })
}

fn normalize(v: &mut [f64], h: f64) {
    let norm = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn fix_sign(v: &mut [f64]) {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-6 * peak) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Fit `lambda_j ~ j^d / c` with `d = 2l/(l+1)` on `j in [lo, hi]`;
/// returns `(c, max relative deviation)`.
pub fn check_asymptotics(basis: &EigenBasis, l: u32, lo: usize, hi: usize) -> Result<(f64, f64)> {
    let (js, logs) = fit_window(basis, lo, hi)?;
    let d = 2.0 * l as f64 / (l as f64 + 1.0);
    let offset = js
        .iter()
        .zip(&logs)
        .map(|(j, y)| y - d * j.ln())
        .sum::<f64>()
        / js.len() as f64;
    let c_fit = (-offset).exp();
    let dev = js
        .iter()
        .zip(&logs)
        .map(|(j, y)| {
            let lam = y.exp();
            (lam - j.powf(d) / c_fit).abs() / lam
        })
        .fold(0.0, f64::max);
    Ok((c_fit, dev))
}

/// Free log-log regression `lambda_j ~ j^d / c`; returns `(d, c)`.
pub fn fit_exponent(basis: &EigenBasis, lo: usize, hi: usize) -> Result<(f64, f64)> {
    let (js, logs) = fit_window(basis, lo, hi)?;
    let xs: Vec<f64> = js.iter().map(|j| j.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = logs.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let d = sxy / sxx;
    Ok((d, (-(my - d * mx)).exp()))
}

fn fit_window(basis: &EigenBasis, lo: usize, hi: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if lo < 1 || hi < lo {
        return invalid("asymptotic fit range is empty");
    }
    if hi > basis.certified {
        return invalid(format!(
            "fit range reaches j = {hi}, beyond the certified {} eigenpairs",
            basis.certified
        ));
    }
    if hi - lo + 1 < 5 {
        return invalid("asymptotic fit needs at least 5 points");
    }
    let js: Vec<f64> = (lo..=hi).map(|j| j as f64).collect();
    let logs: Vec<f64> = (lo..=hi).map(|j| basis.lambda_v[j - 1].ln()).collect();
    Ok((js, logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_levels_are_odd_integers() {
        let v = PotentialSpec::harmonic();
        let basis = solve_h0(&v, 10, GridSpec::for_basis(&v, 10)).unwrap();
        for (j, lam) in basis.lambda_v.iter().enumerate() {
            let exact = 2.0 * (j + 1) as f64 - 1.0;
            assert!((lam - exact).abs() < 1e-8, "j={} {lam}", j + 1);
        }
    }

    #[test]
    fn harmonic_ground_state_is_even_and_positive() {
        let v = PotentialSpec::harmonic();
        let basis = solve_h0(&v, 8, GridSpec::for_basis(&v, 8)).unwrap();
        let g = &basis.vectors[0];
        let m = g.len();
        assert!(g.iter().all(|x| *x > -1e-12));
        for i in 0..m / 2 {
            assert!((g[i] - g[m - 1 - i]).abs() < 1e-8);
        }
    }

    #[test]
    fn potential_validation() {
        assert!(PotentialSpec::new(1, vec![1.0, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::new(1, vec![0.0, 0.0, -1.0]).is_err());
        assert!(PotentialSpec::new(2, vec![0.0, 0.0, -1.0, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::new(2, vec![0.0, 0.0, 1.0, 0.0, 1.0]).is_ok());
        assert!(PotentialSpec::new(2, vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn small_grids_are_rejected() {
        let v = PotentialSpec::harmonic();
        let err = solve_h0(&v, 10, GridSpec { half_width: 3.0, points: 400 }).unwrap_err();
        assert!(matches!(err, KamError::GridTooSmall(_)));
        assert!(solve_h0(&v, 10, GridSpec { half_width: 8.0, points: 40 }).is_err());
    }

    #[test]
    fn weighted_norm_of_diagonal_and_identity() {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.5),
            c(-3.0),
            c(2.0),
        ]));
        let frame = SobolevFrame::new(1.0, 0.0).unwrap();
        assert!((weighted_operator_norm(&d, frame).unwrap() - 3.0).abs() < 1e-12);
        let id = CMat::identity(6, 6);
        let frame = SobolevFrame::new(2.5, 0.0).unwrap();
        assert!((weighted_operator_norm(&id, frame).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_position_matrix_is_a_ladder() {
        let v = PotentialSpec::harmonic();
        let basis = solve_h0(&v, 12, GridSpec::for_basis(&v, 12)).unwrap();
        let x = basis.weyl_monomial(1, 0);
        for k in 0..6 {
            let exact = ((k + 1) as f64 / 2.0).sqrt();
            assert!((x[(k, k + 1)].norm() - exact).abs() < 1e-4 * exact, "{k}");
            assert!(x[(k, k)].norm() < 1e-8);
            assert!(x[(k, k + 2)].norm() < 1e-8);
        }
    }
}
