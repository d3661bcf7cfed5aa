//! Dense complex linear algebra shared by every stage.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let herm = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(herm);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `exp(i t X)` for Hermitian `X`.
pub fn expi_herm(x: &CMat, t: f64) -> CMat {
    let (mu, v) = eigh(x);
    let mut scaled = v.clone();
    for (j, m) in mu.iter().enumerate() {
        let phase = C64::from_polar(1.0, t * m);
        for row in 0..scaled.nrows() {
            scaled[(row, j)] *= phase;
        }
    }
    matmul(&scaled, &v.adjoint())
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Product `ab` through a blocked complex GEMM.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    gemm(c(1.0), a, b, c(0.0), CMat::zeros(a.nrows(), b.ncols()))
}

/// `alpha ab + beta out`, written into `out`.
pub fn gemm(alpha: C64, a: &CMat, b: &CMat, beta: C64, mut out: CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!((out.nrows(), out.ncols()), (a.nrows(), b.ncols()));
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if m == 0 || n == 0 {
        return out;
    }
    if k == 0 {
        out *= beta;
        return out;
    }
    // column-major storage: row stride 1, column stride nrows
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    let ab = matmul(a, b);
    gemm(c(-1.0), b, a, c(1.0), ab)
}

/// `||U^dagger U - 1||_2`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    spectral_norm(&(matmul(&u.adjoint(), u) - CMat::identity(n, n)))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol * scale)
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7, 0.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(13)).sum();
        assert!((integral - 2f64.powi(14) / 14.0).abs() < 1e-9);
        let (x, w) = gauss_legendre(1, -1.0, 1.0);
        assert!(x[0].abs() < 1e-15 && (w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gemm_matches_naive_product() {
        let a = CMat::from_fn(7, 5, |i, j| C64::new(i as f64 - 0.3 * j as f64, (i * j) as f64 * 0.1));
        let b = CMat::from_fn(5, 3, |i, j| C64::new(0.2 * j as f64, i as f64 + 1.0));
        let diff = matmul(&a, &b) - &a * &b;
        assert!(diff.iter().all(|z| z.norm() < 1e-12));
        let sq = a.rows(0, 5).into_owned();
        let other = CMat::from_fn(5, 5, |i, j| C64::new((i + 2 * j) as f64, -(i as f64)));
        let diff = commutator(&sq, &other) - (&sq * &other - &other * &sq);
        assert!(diff.iter().all(|z| z.norm() < 1e-11));
    }

    #[test]
    fn exponential_of_hermitian_is_unitary() {
        let m = CMat::from_fn(5, 5, |i, j| C64::new((i + j) as f64, i as f64 - j as f64));
        let u = expi_herm(&m, 0.7);
        assert!(unitarity_defect(&u) < 1e-12);
    }
}
