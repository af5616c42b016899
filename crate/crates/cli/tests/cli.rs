use std::path::Path;
use std::process::{Command, Output};

const NOMINAL: &str =
    "Lr = 1.6e-4\nCr = 1.6e-8\nCo = 1.0e-7\nRo = 10000\nN = 16\nVin = 700\nfs = 101000\n";

fn srcas(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcas"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SRCAS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("nominal.toml"), NOMINAL).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn derive_prints_key_values() {
    let dir = setup();
    let o = srcas(&["--config", "nominal.toml", "derive"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let zc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("Zc="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((zc - 100.0).abs() < 1e-9);
}

#[test]
fn empty_config_fails_with_failure_list() {
    let dir = setup();
    let o = srcas(&["derive"], dir.path());
    assert!(!o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    let err = report["failures"][0]["error"].as_str().unwrap();
    assert!(err.contains("Lr") && err.contains("fs"), "{err}");
}

#[test]
fn unknown_key_named() {
    let dir = setup();
    let o = srcas(
        &["--config", "nominal.toml", "--set", "Rload=3", "derive"],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Rload"));
}

#[test]
fn override_beats_file() {
    let dir = setup();
    let o = srcas(
        &["--config", "nominal.toml", "--set", "fs=120000", "derive"],
        dir.path(),
    );
    let text = stdout(&o);
    let ts: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("Ts="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((ts - 1.0 / 120e3).abs() < 1e-18);
}

#[test]
fn steady_state_waveform_file_and_determinism() {
    let dir = setup();
    let args = [
        "--config",
        "nominal.toml",
        "--output",
        "out/op.csv",
        "steady-state",
        "--waveform-points",
        "16",
    ];
    assert!(srcas(&args, dir.path()).status.success());
    let first = std::fs::read(dir.path().join("out/op_waveform.csv")).unwrap();
    assert!(srcas(&args, dir.path()).status.success());
    let second = std::fs::read(dir.path().join("out/op_waveform.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next(), Some("t,iL,vc,vo"));
    assert_eq!(text.lines().count(), 17);
    let op = std::fs::read_to_string(dir.path().join("out/op.csv")).unwrap();
    assert!(op.contains("T1="));
}

#[test]
fn bode_json_parses() {
    let dir = setup();
    let o = srcas(
        &[
            "--config",
            "nominal.toml",
            "--format",
            "json",
            "bode",
            "--points",
            "5",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0]["method"], "model");
    assert_eq!(rows[0]["f_in_hz"].as_f64(), Some(100.0));
}

#[test]
fn sweep_row_count() {
    let dir = setup();
    std::fs::write(
        dir.path().join("grid.toml"),
        "F = [1.05, 1.1, 1.2]\nQe = [2.0]\nf_in = [200.0, 800.0, 2000.0, 5000.0]\n",
    )
    .unwrap();
    let o = srcas(&["sweep", "--grid-file", "grid.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("F,Qe,f_in,gain_db,normalized_gain,method")
    );
    assert_eq!(lines.count(), 3 * 4);
}

#[test]
fn region_out_dir_from_env() {
    let dir = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_srcas"))
        .args(["region", "--qe-grid", "2,10", "--f-bounds", "1.01,1.3"])
        .current_dir(dir.path())
        .env("SRCAS_OUT_DIR", "results")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("results/region.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "Qe,F_boundary,method");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(",model-full"));
}

#[test]
fn region_failure_exits_nonzero_with_partial_output() {
    let dir = setup();
    let o = srcas(
        &["region", "--qe-grid", "2,10", "--f-bounds", "1.05,1.5"],
        dir.path(),
    );
    assert!(!o.status.success());
    // Qe = 2 has its boundary inside the bounds, Qe = 10 does not
    assert_eq!(stdout(&o).lines().count(), 2);
    let report: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(report["failures"][0]["item"], "Qe=10");
}

#[test]
fn sim_writes_trace_and_summary() {
    let dir = setup();
    let o = srcas(
        &[
            "--config",
            "nominal.toml",
            "--output",
            "sim.csv",
            "sim",
            "--fin",
            "1000",
            "--settle",
            "10",
            "--measure",
            "300",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("k,t,vin,iL,vc,vo,T1,T3"));
    let summary = std::fs::read_to_string(dir.path().join("sim_summary.csv")).unwrap();
    assert!(summary.contains("normalized_gain="));
}

#[test]
fn unwritable_output_names_path() {
    let dir = setup();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let o = srcas(
        &[
            "--config",
            "nominal.toml",
            "--output",
            "blocker/x.csv",
            "derive",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocker"));
}
