//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{solve_h0, GridSpec, PotentialSpec};
use crate::diophantine::{DiophantineParams, FrequencyBox};
use crate::error::{invalid, KamError, Result};
use crate::kam::{banded_perturbation, forced_problem, ForcedProblem, KamSchedule};
use crate::linalg::{c, C64};
use crate::symbol::{Symbol, SymbolRecord, TermRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// Bounded perturbation built from random banded modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandedSpec {
    /// One entry per mode pair `(k, -k)`.
    pub modes: Vec<Vec<i32>>,
    pub rho: f64,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub t_final: f64,
    pub dt: f64,
    /// Basis index of the initial state, from 1.
    #[serde(default = "one")]
    pub initial: usize,
    #[serde(default = "default_s")]
    pub s_values: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one() -> usize {
    1
}

fn default_s() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_samples() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "dot")]
    pub dir: PathBuf,
}

fn dot() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: dot() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub l: u32,
    /// Potential coefficients; `V = x^{2l}` when absent.
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
    #[serde(rename = "N")]
    pub n_basis: usize,
    pub n: usize,
    pub eps: f64,
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    /// Index into the seeded frequency stream, used when `omega` is absent.
    #[serde(default)]
    pub omega_sample: Option<u64>,
    pub gamma: f64,
    pub tau: f64,
    #[serde(rename = "Kmax")]
    pub kmax: i32,
    #[serde(default, rename = "W")]
    pub w: Vec<TermRecord>,
    #[serde(default)]
    pub banded: Option<BandedSpec>,
    #[serde(default)]
    pub schedule: KamSchedule,
    #[serde(default)]
    pub evolve: Option<EvolveSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| KamError::Validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.l == 0 {
            return invalid("l must be a positive integer");
        }
        if self.n_basis < 2 {
            return invalid("N must be at least 2");
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return invalid("eps must be finite and non-negative");
        }
        self.potential()?;
        self.params().validate(self.n)?;
        self.schedule.validate()?;
        match (&self.omega, self.omega_sample) {
            (Some(_), Some(_)) => return invalid("give omega or omega_sample, not both"),
            (None, None) => return invalid("one of omega or omega_sample is required"),
            _ => {}
        }
        let omega = self.omega();
        if omega.len() != self.n || !FrequencyBox::new(self.n)?.contains(&omega) {
            return invalid(format!("omega {omega:?} must lie in [1, 2]^{}", self.n));
        }
        match (self.w.is_empty(), &self.banded) {
            (false, Some(_)) => return invalid("give W terms or a banded perturbation, not both"),
            (true, None) => return invalid("a perturbation (W terms or banded) is required"),
            (true, Some(b)) if b.modes.iter().any(|k| k.len() != self.n) => {
                return invalid("banded modes must have n entries")
            }
            _ => {}
        }
        if !self.w.is_empty() {
            self.symbol()?;
        }
        if let Some(e) = &self.evolve {
            if e.initial == 0 || e.initial > self.n_basis {
                return invalid("evolve.initial must lie in 1..=N");
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        match &self.coeffs {
            Some(c) => PotentialSpec::new(self.l, c.clone()),
            None => Ok(PotentialSpec::monomial(self.l)),
        }
    }

    pub fn params(&self) -> DiophantineParams {
        DiophantineParams::new(self.gamma, self.tau, self.kmax)
    }

    pub fn omega(&self) -> Vec<f64> {
        match (&self.omega, self.omega_sample) {
            (Some(w), _) => w.clone(),
            (None, Some(index)) => FrequencyBox { n: self.n }.sample(self.seed, index),
            (None, None) => Vec::new(),
        }
    }

    pub fn symbol(&self) -> Result<Symbol> {
        Symbol::from_json(&SymbolRecord {
            n: self.n,
            rep: "polynomial".to_string(),
            terms: self.w.clone(),
        })
    }

    /// The forced problem in the eigenbasis, with its stationary part
    /// prediagonalized.
    pub fn problem(&self) -> Result<ForcedProblem> {
        let potential = self.potential()?;
        let omega = self.omega();
        match &self.banded {
            Some(b) => {
                let basis = solve_h0(&potential, self.n_basis, GridSpec::for_basis(&potential, self.n_basis))?;
                let w = banded_perturbation(self.n, self.n_basis, &b.modes, b.rho, b.seed)?.scale(b.amplitude);
                ForcedProblem::new(basis, w, self.eps, &omega, &self.params())
            }
            None => forced_problem(&potential, self.n_basis, &self.symbol()?, self.eps, &omega, &self.params()),
        }
    }

    /// Unit vector on the configured initial basis state.
    pub fn initial_state(&self) -> Vec<C64> {
        let index = self.evolve.as_ref().map_or(1, |e| e.initial);
        (1..=self.n_basis)
            .map(|j| if j == index { c(1.0) } else { c(0.0) })
            .collect()
    }

    /// Resolved configuration, with a sampled `omega` written out.
    pub fn resolved(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or(serde_json::Value::Null);
        if let Some(map) = v.as_object_mut() {
            map.insert("omega_resolved".to_string(), serde_json::json!(self.omega()));
        }
        v
    }
}
