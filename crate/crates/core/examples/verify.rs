//! Randomized checks of the operator estimates behind the squaring step.

use kamred::kam::{lemma_suite, rico_closed_form, rico_iterate};

fn main() -> kamred::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let report = lemma_suite(seed, 100)?;
    for check in &report.checks {
        println!(
            "{:<18} {:>4} trials, worst lhs/rhs {:.3}",
            check.name, check.trials, check.worst_ratio
        );
    }

    let s = rico_iterate(1.0, 0, 0.125, 4);
    println!("s_nu for c1 = 1, a = 0, s0 = 1/8: {s:?}");
    println!("closed form at nu = 3: {:e}", rico_closed_form(1.0, 0, 0.125, 3));
    Ok(())
}
