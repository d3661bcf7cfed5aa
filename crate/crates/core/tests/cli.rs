use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kamred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kamred"))
        .args(args)
        .env_remove("KAMRED_THREADS")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lemmas.json");
    let run = kamred(&["verify", "--seed", "1", "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stdout).contains("violations: 0"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["seed"], 1);
    assert!(dir.path().join("lemmas.manifest.json").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let run = kamred(&["reduce", "--bogus"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("Usage"));
}

#[test]
fn planted_resonance_exits_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let run = kamred(&["reduce", "--config", &config("resonant.toml"), "--out-dir", path_str(dir.path())]);
    assert_eq!(run.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("certificate: i="), "{stderr}");
}

#[test]
fn misspelled_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("periodic.toml")).unwrap().replace("gamma =", "gama =");
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, text).unwrap();
    let run = kamred(&["reduce", "--config", path_str(&path)]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn missing_config_is_an_io_error() {
    let run = kamred(&["reduce", "--config", "/nonexistent/run.toml"]);
    assert_eq!(run.status.code(), Some(4));
}

#[test]
fn invalid_thread_cap_is_rejected() {
    let run = Command::new(env!("CARGO_BIN_EXE_kamred"))
        .args(["verify", "--trials", "1"])
        .env("KAMRED_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}

fn reduce_into(dir: &Path, format: &str) -> (Vec<u8>, Vec<u8>) {
    let run = kamred(&[
        "reduce",
        "--config",
        &config("periodic.toml"),
        "--out-dir",
        path_str(dir),
        "--format",
        format,
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let ledger = std::fs::read(dir.join(format!("ledger.{format}"))).unwrap();
    let manifest = std::fs::read(dir.join("reduction.manifest.json")).unwrap();
    (ledger, manifest)
}

#[test]
fn reduce_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let first = reduce_into(dir.path(), "csv");
    let second = reduce_into(dir.path(), "csv");
    assert_eq!(first, second);

    let text = String::from_utf8(first.0).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("stage,r_l,sigma_l,eps1_measured"));
    let eps1: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(eps1.len() >= 2);
    assert!(eps1.windows(2).all(|w| w[1] < w[0]));

    let manifest: serde_json::Value = serde_json::from_slice(&first.1).unwrap();
    assert_eq!(manifest["command"], "reduce");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["eps"], 0.01);
    assert_eq!(manifest["config"]["omega_resolved"][0], 1.2360679774997896);
    assert_eq!(manifest["details"]["stages"], eps1.len());
}

#[test]
fn json_ledger_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = reduce_into(dir.path(), "csv");
    let (json, _) = reduce_into(dir.path(), "json");
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&json).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(rows.len(), text.lines().count() - 1);
    for (row, line) in rows.iter().zip(text.lines().skip(1)) {
        let csv_eps1: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(row["eps1_measured"].as_f64().unwrap(), csv_eps1);
    }
}

#[test]
fn spectrum_and_measure_write_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let spectrum: PathBuf = dir.path().join("spectrum.json");
    let run = kamred(&["spectrum", "--l", "1", "--n", "16", "--out", path_str(&spectrum)]);
    assert_eq!(run.status.code(), Some(0));
    let basis: serde_json::Value = serde_json::from_slice(&std::fs::read(&spectrum).unwrap()).unwrap();
    let first = basis["lambda_v"][0].as_f64().unwrap();
    assert!((first - 1.0).abs() < 1e-8);
    assert!(dir.path().join("spectrum.manifest.json").exists());

    let measure = dir.path().join("measure.csv");
    let args = [
        "measure", "--set", "omega0", "--gamma", "0.02", "--tau", "2.5", "--n", "2", "--samples", "20000",
        "--seed", "4", "--out", path_str(&measure),
    ];
    assert_eq!(kamred(&args).status.code(), Some(0));
    let first_run = std::fs::read(&measure).unwrap();
    assert_eq!(kamred(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&measure).unwrap(), first_run);
    let text = String::from_utf8(first_run).unwrap();
    assert!(text.starts_with("gamma,tau,n,samples,excluded_fraction,ci95\n"));
}

#[test]
fn evolve_writes_a_norm_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let run = kamred(&["evolve", "--config", &config("periodic.toml"), "--out", path_str(&trace)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,l2,h1,h2,leakage,unitarity_defect");
    for line in lines {
        let l2: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((l2 - 1.0).abs() < 1e-10);
    }
    assert!(dir.path().join("trace.manifest.json").exists());
}
