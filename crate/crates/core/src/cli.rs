//! Command-line front end: `kamred spectrum | reduce | measure | evolve | verify`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::basis::{solve_h0, GridSpec, PotentialSpec};
use crate::config::RunConfig;
use crate::diophantine::{excluded_measure, DiophantineParams, DiophantineSet};
use crate::error::{invalid, Result};
use crate::kam::lemma_suite;
use crate::propagator::{evolve, EvolutionRun, ForcedHamiltonian};
use crate::report::{manifest_path, write_json, write_table, Format, Manifest, Table};

#[derive(Debug, Parser)]
#[command(name = "kamred", version, about = "Reducibility of forced anharmonic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenpairs of H0 = -d^2/dx^2 + V on a truncated basis.
    Spectrum {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        n: usize,
        /// Potential coefficients, `coeffs[i]` multiplying `x^i`; `x^{2l}` when absent.
        #[arg(long, value_delimiter = ',')]
        coeffs: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iterative reduction of the configured forced problem.
    Reduce {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` of the configuration.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Monte Carlo measure of resonant frequencies in [1, 2]^n.
    Measure {
        #[arg(long, value_parser = parse_set)]
        set: DiophantineSet,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 40)]
        kmax: i32,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Integrates the configured Schrodinger equation and records norms.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Randomized checks of the operator estimates.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_set(s: &str) -> std::result::Result<DiophantineSet, String> {
    match s {
        "omega0" => Ok(DiophantineSet::Omega0),
        "omega1" => Ok(DiophantineSet::Omega1),
        other => Err(format!("unknown set '{other}' (expected omega0 or omega1)")),
    }
}

/// Runs one command line and returns the process exit code: 0 success,
/// 2 validation, 3 numerical failure, 4 i/o.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = configure_threads().and_then(|_| run(cli.command));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kamred: {e}");
            if let Some((i, j, k)) = e.certificate() {
                eprintln!("certificate: i={i} j={j} k={k:?}");
            }
            e.exit_code()
        }
    }
}

/// Caps the worker pool at `KAMRED_THREADS`.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("KAMRED_THREADS") else {
        return Ok(());
    };
    let threads: usize = match value.trim().parse() {
        Ok(t) if t > 0 => t,
        _ => return invalid(format!("KAMRED_THREADS must be a positive integer, got '{value}'")),
    };
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Spectrum { l, n, coeffs, out } => spectrum(l, n, coeffs, &out),
        Command::Reduce {
            config,
            out_dir,
            format,
        } => reduce(&config, out_dir, format),
        Command::Measure {
            set,
            gamma,
            tau,
            n,
            kmax,
            samples,
            seed,
            out,
            format,
        } => {
            let params = DiophantineParams::new(gamma, tau, kmax);
            let estimate = excluded_measure(n, &params, set, samples, seed)?;
            write_table(&out, &Table::measure(gamma, tau, n, &estimate), format)?;
            let config = serde_json::json!({
                "set": set, "gamma": gamma, "tau": tau, "n": n, "Kmax": kmax, "samples": samples,
            });
            finish(Manifest::new("measure", Some(seed), config), &out, vec![out.clone()])
        }
        Command::Evolve { config, out, format } => evolve_command(&config, &out, format),
        Command::Verify { seed, trials, out } => {
            let report = lemma_suite(seed, trials)?;
            for c in &report.checks {
                println!(
                    "{:<16} trials {:>5}  violations {}  worst ratio {:.3e}",
                    c.name, c.trials, c.violations, c.worst_ratio
                );
            }
            println!("violations: {}", report.violations());
            if let Some(path) = out {
                write_json(&path, &report)?;
                let config = serde_json::json!({ "trials": trials });
                finish(Manifest::new("verify", Some(seed), config), &path, vec![path.clone()])?;
            }
            Ok(())
        }
    }
}

fn finish(mut manifest: Manifest, anchor: &Path, outputs: Vec<PathBuf>) -> Result<()> {
    manifest.outputs = outputs;
    write_json(&manifest_path(anchor), &manifest)
}

fn spectrum(l: u32, n: usize, coeffs: Option<Vec<f64>>, out: &Path) -> Result<()> {
    let potential = match &coeffs {
        Some(c) => PotentialSpec::new(l, c.clone())?,
        None => PotentialSpec::monomial(l),
    };
    let basis = solve_h0(&potential, n, GridSpec::for_basis(&potential, n))?;
    write_json(out, &basis)?;
    println!("certified levels: {} of {}", basis.certified, basis.n);
    let config = serde_json::json!({ "l": l, "N": n, "coeffs": potential.coeffs });
    finish(Manifest::new("spectrum", None, config), out, vec![out.to_path_buf()])
}

fn reduce(path: &Path, out_dir: Option<PathBuf>, format: Format) -> Result<()> {
    let config = RunConfig::load(path)?;
    let dir = out_dir.unwrap_or_else(|| config.output.dir.clone());
    let problem = config.problem()?;
    let run = problem.reduce(&config.schedule)?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let ledger = dir.join(format!("ledger.{ext}"));
    write_table(&ledger, &Table::ledger(&run.ledger), format)?;
    let summary = dir.join("reduction.json");
    let chain = run.chain.manifest();
    write_json(
        &summary,
        &serde_json::json!({
            "lambda_inf": run.lambda_inf,
            "deviations": run.deviations,
            "converged": run.converged,
            "floor": run.floor,
            "floor_reached": run.floor_reached,
            "remainder": run.remainder_norm(),
            "chain": chain,
        }),
    )?;
    for e in &run.ledger {
        println!("stage {:>2}  eps1 {:.3e}", e.stage, e.eps1_measured);
    }
    let mut manifest = Manifest::new("reduce", Some(config.seed), config.resolved());
    manifest.details = serde_json::json!({ "chain": chain, "stages": run.ledger.len() });
    finish(manifest, &summary, vec![ledger, summary.clone()])
}

fn evolve_command(path: &Path, out: &Path, format: Format) -> Result<()> {
    let config = RunConfig::load(path)?;
    let Some(spec) = config.evolve.clone() else {
        return invalid("the configuration has no [evolve] table");
    };
    let problem = config.problem()?;
    let h = ForcedHamiltonian::from_problem(&problem);
    let mut run = EvolutionRun::new(config.omega(), config.eps, spec.t_final, spec.dt, config.initial_state());
    run.s_values = spec.s_values;
    run.samples = spec.samples;
    let trace = evolve(&run, &h)?;
    write_table(out, &Table::trace(&trace), format)?;
    if trace.leakage_flagged {
        eprintln!("kamred: mass reached the top tenth of the basis; norm growth is truncation-limited");
    }
    let mut manifest = Manifest::new("evolve", Some(config.seed), config.resolved());
    manifest.details = serde_json::json!({
        "step_error": trace.step_error,
        "leakage_flagged": trace.leakage_flagged,
    });
    finish(manifest, out, vec![out.to_path_buf()])
}
