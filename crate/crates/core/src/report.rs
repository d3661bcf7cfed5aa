//! Tabular reports and run manifests.
//!
//! Floats in CSV are printed with 17 significant digits so that every value
//! round-trips; nothing time- or host-dependent is written, so identical
//! inputs give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diophantine::MeasureEstimate;
use crate::error::{KamError, Result};
use crate::kam::LedgerEntry;
use crate::propagator::NormTrace;
use crate::symbol::normal_form::LedgerRow;

/// `{:.16e}`: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt17(*v),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn ledger(rows: &[LedgerEntry]) -> Self {
        let mut t = Table::new(&[
            "stage",
            "r_l",
            "sigma_l",
            "eps1_measured",
            "eps1_scheduled",
            "gamma_l",
            "K_l",
            "min_divisor",
            "offdiag_norm",
        ]);
        for e in rows {
            t.push(vec![
                Cell::Int(e.stage as i64),
                Cell::Float(e.r_l),
                Cell::Float(e.sigma_l),
                Cell::Float(e.eps1_measured),
                Cell::Float(e.eps1_scheduled),
                Cell::Float(e.gamma_l),
                Cell::Float(e.k_l),
                Cell::Float(e.min_divisor),
                Cell::Float(e.offdiag_norm),
            ]);
        }
        t
    }

    /// Columns `t, l2, h<s>..., leakage, unitarity_defect`.
    pub fn trace(trace: &NormTrace) -> Self {
        let mut columns = vec!["t".to_string(), "l2".to_string()];
        columns.extend(trace.s_values.iter().map(|s| format!("h{s}")));
        columns.extend(["leakage".to_string(), "unitarity_defect".to_string()]);
        let mut t = Table {
            columns,
            rows: Vec::new(),
        };
        for i in 0..trace.times.len() {
            let mut row = vec![Cell::Float(trace.times[i]), Cell::Float(trace.l2[i])];
            row.extend(trace.h.iter().map(|h| Cell::Float(h[i])));
            row.push(Cell::Float(trace.leakage[i]));
            row.push(Cell::Float(trace.unitarity_defect[i]));
            t.push(row);
        }
        t
    }

    pub fn measure(gamma: f64, tau: f64, n: usize, estimate: &MeasureEstimate) -> Self {
        let mut t = Table::new(&["gamma", "tau", "n", "samples", "excluded_fraction", "ci95"]);
        t.push(vec![
            Cell::Float(gamma),
            Cell::Float(tau),
            Cell::Int(n as i64),
            Cell::Int(estimate.samples as i64),
            Cell::Float(estimate.fraction),
            Cell::Float(estimate.ci95),
        ]);
        t
    }

    pub fn normal_form(rows: &[LedgerRow]) -> Self {
        let mut t = Table::new(&["step", "generator_order", "residual_order", "sup_coeff"]);
        for r in rows {
            t.push(vec![
                Cell::Int(r.step as i64),
                Cell::Float(r.generator_order),
                Cell::Float(r.residual_order),
                Cell::Float(r.sup_coeff),
            ]);
        }
        t
    }
}

/// Writes `table` as CSV (header always present) or as a JSON array of
/// objects.
pub fn emit_report<W: Write>(table: &Table, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let ser = |e: csv::Error| KamError::Serde(e.to_string());
            w.write_record(&table.columns).map_err(ser)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv)).map_err(ser)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = table
                .rows
                .iter()
                .map(|row| {
                    let map = table
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json))
                        .collect::<serde_json::Map<_, _>>();
                    serde_json::Value::Object(map)
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| KamError::Serde(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_table(path: &Path, table: &Table, format: Format) -> Result<()> {
    let file = create(path)?;
    emit_report(table, format, BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| KamError::Serde(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

/// Everything needed to rerun a command.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub kamred_version: String,
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    /// Extra run facts such as the transform chain summary.
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            kamred_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: crate::config::SCHEMA_VERSION,
            seed,
            config,
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }
}

/// `dir/stem.manifest.json` next to `path`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    path.with_file_name(format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(table: &Table, format: Format) -> String {
        let mut buf = Vec::new();
        emit_report(table, format, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_ledger_is_header_only() {
        let text = render(&Table::ledger(&[]), Format::Csv);
        assert_eq!(
            text,
            "stage,r_l,sigma_l,eps1_measured,eps1_scheduled,gamma_l,K_l,min_divisor,offdiag_norm\n"
        );
        assert_eq!(render(&Table::ledger(&[]), Format::Json).trim(), "[]");
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn json_rows_are_objects() {
        let mut t = Table::new(&["step", "x"]);
        t.push(vec![Cell::Int(3), Cell::Float(f64::NAN)]);
        let v: serde_json::Value = serde_json::from_str(&render(&t, Format::Json)).unwrap();
        assert_eq!(v[0]["step"], 3);
        assert!(v[0]["x"].is_null());
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("out/trace.csv")),
            PathBuf::from("out/trace.manifest.json")
        );
    }
}
