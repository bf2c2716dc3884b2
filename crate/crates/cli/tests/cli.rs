//! End-to-end checks of the command-line surface: artifact shapes, the
//! exit-code contract, and byte-level determinism of the data files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn dataset_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../datasets/manhattan12")
}

/// Runs `gridsim <sub> --case … --fleet … --out-dir <out_dir> <extra…>`.
fn gridsim(sub: &str, out_dir: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsim"))
        .arg(sub)
        .arg("--case")
        .arg(dataset_dir().join("grid.dat"))
        .arg("--fleet")
        .arg(dataset_dir().join("fleet.dat"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(extra)
        .output()
        .expect("gridsim spawns")
}

fn scenario_path(name: &str) -> String {
    dataset_dir()
        .join("scenarios")
        .join(format!("{name}.scn"))
        .display()
        .to_string()
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file))
        .unwrap_or_else(|e| panic!("reading {}/{file}: {e}", dir.display()))
}

fn read_json(dir: &Path, file: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, file)).expect("valid JSON")
}

fn first_line(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap().lines().next().unwrap()
}

#[test]
fn transient_artifacts_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scn = scenario_path("tesla_2030");
    for dir in [a.path(), b.path()] {
        let out = gridsim("transient", dir, &["--scenario", &scn, "--quiet"]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["frequency.csv", "voltage.csv", "loading.csv", "summary.json"] {
        assert_eq!(
            read(a.path(), file),
            read(b.path(), file),
            "{file} differs between identical runs"
        );
    }
    // The manifest is the one artifact allowed to differ (wall clock).
    assert!(a.path().join("manifest.json").exists());
    assert!(b.path().join("manifest.json").exists());
}

#[test]
fn transient_writes_all_traces_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario_path("all_2022");
    let out = gridsim("transient", dir.path(), &["--scenario", &scn, "--quiet", "--gnuplot"]);
    assert!(out.status.success());

    assert_eq!(first_line(&read(dir.path(), "frequency.csv")), "time_s,bus_id,freq_hz");
    assert_eq!(first_line(&read(dir.path(), "voltage.csv")), "time_s,bus_id,v_pu");
    assert_eq!(
        first_line(&read(dir.path(), "loading.csv")),
        "time_s,branch_from,branch_to,loading_pct"
    );
    assert!(dir.path().join("plot.gp").exists());

    let summary = read_json(dir.path(), "summary.json");
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["verdict"], "none");
}

#[test]
fn powerflow_is_deterministic_and_manifest_hashes_match() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = gridsim("powerflow", dir, &["--year", "2030", "--quiet"]);
        assert!(out.status.success());
    }
    let csv = read(a.path(), "loading.csv");
    assert_eq!(csv, read(b.path(), "loading.csv"));
    assert_eq!(
        first_line(&csv),
        "branch_from,branch_to,loading_pct,p_mw_from,q_mvar_from"
    );

    let manifest = read_json(a.path(), "manifest.json");
    let case_bytes = std::fs::read(dataset_dir().join("grid.dat")).unwrap();
    let expect = format!("{:x}", Sha256::digest(&case_bytes));
    let inputs = manifest["inputs"].as_array().unwrap();
    let case_entry = inputs.iter().find(|e| e["role"] == "case").unwrap();
    assert_eq!(case_entry["sha256"].as_str().unwrap(), expect);
}

#[test]
fn missing_case_file_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gridsim"))
        .arg("powerflow")
        .arg("--case")
        .arg("/no/such/case.dat")
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/case.dat"), "stderr: {stderr}");
}

#[test]
fn unknown_operator_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridsim(
        "powerflow",
        dir.path(),
        &["--year", "2030", "--operators", "Nobody", "--quiet"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Nobody"));
}

#[test]
fn diverging_scenario_exits_1_with_aborted_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("extreme.scn");
    std::fs::write(
        &scn,
        "name = extreme\nyear = 2050\noperators = all\nbuses = all\nfraction = 1.0\n\
         t_attack_s = 5.0\ndirection = shutdown\npower_factor = 0.98\n",
    )
    .unwrap();
    let out = gridsim("transient", dir.path(), &["--scenario", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let summary = read_json(dir.path(), "summary.json");
    assert_eq!(summary["status"], "aborted");
    assert!(!summary["reason"].as_str().unwrap().is_empty());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn zero_fraction_scenario_is_quiescent() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("idle.scn");
    std::fs::write(
        &scn,
        "name = idle\nyear = 2030\noperators = all\nbuses = all\nfraction = 0.0\n\
         t_attack_s = 5.0\ndirection = shutdown\npower_factor = 0.98\n",
    )
    .unwrap();
    let out = gridsim("transient", dir.path(), &["--scenario", scn.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success());

    let summary = read_json(dir.path(), "summary.json");
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["verdict"], "none");
    assert_eq!(summary["relay_events"].as_array().unwrap().len(), 0);
    let peak = summary["peak_freq_hz"].as_f64().unwrap();
    assert!((peak - 60.0).abs() < 1e-3, "peak {peak} Hz without an attack");
}

#[test]
fn infeasible_sweep_target_is_a_finding_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario_path("tesla_2030");
    let out = gridsim(
        "sweep",
        dir.path(),
        &["--mode", "min-power", "--target-hz", "63", "--scenario", &scn, "--quiet"],
    );
    assert!(out.status.success(), "infeasible target must exit 0");
    let csv = String::from_utf8(read(dir.path(), "sweep_min_power.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "target_hz,reachable,power_mw,fraction");
    assert_eq!(lines.next().unwrap(), "63,false,,");
}

#[test]
fn year_sweep_covers_both_scopes_per_year() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridsim("sweep", dir.path(), &["--mode", "year", "--quiet"]);
    assert!(out.status.success());
    let csv = String::from_utf8(read(dir.path(), "sweep_year.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "year,scope,peak_hz,steady_hz");
    // 2022..=2030, two scopes each.
    assert_eq!(lines.len(), 1 + 9 * 2);
    assert!(lines[1].starts_with("2022,all,"));
    assert!(lines[2].starts_with("2022,tesla,"));
}

#[test]
fn quiet_flag_silences_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridsim("powerflow", dir.path(), &["--year", "none", "--quiet"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "stdout: {}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn report_renders_all_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridsim("report", dir.path(), &["--quiet"]);
    assert!(out.status.success());
    let md = String::from_utf8(read(dir.path(), "report.md")).unwrap();
    assert!(md.contains("## Branch loading by fleet year"));
    assert!(md.contains("## Attacks per charging operator"));
    assert!(md.contains("## Peak and steady frequency by fleet year"));
    // The 2050 overloads stand out in bold.
    assert!(md.contains("**"));
}

#[test]
fn calibrate_check_accepts_the_bundled_dataset() {
    let out = Command::new(env!("CARGO_BIN_EXE_gridsim-calibrate"))
        .arg("--check")
        .arg("--out")
        .arg(dataset_dir())
        .output()
        .expect("calibrate spawns");
    assert!(
        out.status.success(),
        "bundled dataset is stale: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
