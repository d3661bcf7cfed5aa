//! Eigenvalues of the anharmonic oscillator and their growth exponent.
//!
//! Run with `cargo run --example spectrum -- 2 128`.

use kamred::basis::{check_asymptotics, fit_exponent, solve_h0, GridSpec, PotentialSpec};

fn main() -> kamred::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let l: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);

    let v = PotentialSpec::monomial(l);
    let basis = solve_h0(&v, n, GridSpec::for_basis(&v, n))?;
    println!("V = x^{}, N = {n}, certified levels: {}", 2 * l, basis.certified);
    for j in [1, 2, 3, 10, 20] {
        println!("  lambda_{j:<3} = {:.10}", basis.lambda_v[j - 1]);
    }

    let hi = (basis.certified).min(60);
    let (d, _) = fit_exponent(&basis, 20, hi)?;
    let (c, dev) = check_asymptotics(&basis, l, 20, hi)?;
    let expected = 2.0 * l as f64 / (l as f64 + 1.0);
    println!("fitted exponent on j in [20, {hi}]: {d:.5} (2l/(l+1) = {expected:.5})");
    println!("lambda_j ~ j^d / c with c = {c:.5}, max relative deviation {dev:.2e}");
    Ok(())
}
