//! Symbol calculus: brackets, the mixed homological equation and the
//! smoothing normal form of a forced harmonic oscillator.

use kamred::basis::PotentialSpec;
use kamred::diophantine::DiophantineParams;
use kamred::linalg::c;
use kamred::report::{emit_report, Format, Table};
use kamred::symbol::homological::solve_hom_mixed;
use kamred::symbol::normal_form::{smoothing_normal_form, NormalFormConfig};
use kamred::symbol::Symbol;

fn main() -> kamred::error::Result<()> {
    let x: Symbol = Symbol::x(1);
    let xi: Symbol = Symbol::xi(1);
    println!("{{x; xi}} = {}", x.poisson(&xi).coeff(0, 0, &[0]).re);

    let (bracket, exact) = x.times(&x).moyal_bracket(&xi.times(&xi));
    println!("Moyal bracket of x^2 and xi^2: {} x xi (exact: {exact})", bracket.coeff(1, 1, &[0]).re);

    let params = DiophantineParams::new(0.1, 1.5, 4);
    let omega = vec![1.37];
    let cos = Symbol::monomial(1, 0, 0, vec![1], c(0.5)).plus(&Symbol::monomial(1, 0, 0, vec![-1], c(0.5)));
    let forcing = x.times(&cos);
    let mixed = solve_hom_mixed(&forcing, &omega, &params)?;
    println!("generator for x cos(phi): {} terms, residual {:.2e}", mixed.chi.terms.len(), mixed.residual);

    // W = x^2 (1 + cos phi) + x cos phi
    let w = x.times(&x).times(&Symbol::constant(1, c(1.0)).plus(&cos)).plus(&forcing);
    let config = NormalFormConfig::new(omega, 1e-2, DiophantineParams::new(0.1, 1.5, 16));
    let nf = smoothing_normal_form(&PotentialSpec::harmonic(), &w, &config)?;
    println!("invariant profile z(E) at E = 1, 10: {:.6}, {:.6}", nf.z.eval(1.0), nf.z.eval(10.0));
    println!("correction ztilde(10) = {:.6e}", nf.ztilde.eval(10.0));
    println!("residual sup {:.2e} after {} steps", nf.residual.sup(), nf.ledger.len());
    emit_report(&Table::normal_form(&nf.ledger), Format::Csv, std::io::stdout().lock())
}
