//! End-to-end tests of the `expreg` binary: exit codes, output formats,
//! determinism, and the shipped configuration files.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_BIN_EXE_expreg"));
    assert!(p.exists(), "binary not built at {}", p.display());
    p.pop();
    p.push("expreg");
    p
}

fn config_path(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("EXPREG_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn fast_ternary(dir: &std::path::Path) -> String {
    // Shipped instance with a lighter optimizer for test speed.
    let text = std::fs::read_to_string(config_path("ternary_example.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["optimizer"] = serde_json::json!({
        "restarts": 6, "max_iters": 800,
        "convergence_tol": 1e-12, "value_tolerance": 5e-5,
        "u0_cap": null, "ui_cap": null
    });
    v["grids"] = serde_json::json!({
        "lambda": [0.0, 0.5, 1.0], "share_points": 5,
        "sigma_step": 0.05, "splits": [1.0], "frontier_gap": 0.002
    });
    v["log_base"] = serde_json::json!("bits");
    let p = dir.join("fast_ternary.json");
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p.display().to_string()
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = run(&["eta", "--receiver", "1", "--rate", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn malformed_pmf_reports_diagnostic_and_exit_2() {
    let dir = tempdir();
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{
            "alphabet_sizes": [2, 2, 2],
            "pmf": [[[0.5, -0.1], [0.05, 0.05]], [[0.1, 0.1], [0.1, 0.2]]],
            "rates": {"r0": 0.1}
        }"#,
    )
    .unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "eta", "--receiver", "1", "--rate", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("negative entry"), "stderr: {err}");
    assert!(err.contains("bad.json"), "diagnostic carries the path: {err}");
}

#[test]
fn unparseable_json_reports_location() {
    let dir = tempdir();
    let bad = dir.join("broken.json");
    std::fs::write(&bad, "{ \"alphabet_sizes\": [2, 2, 2,,, }").unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "validate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "json error carries position: {err}");
}

#[test]
fn incompatible_mode_exits_3() {
    let dir = tempdir();
    let text = std::fs::read_to_string(config_path("ternary_example.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["rates"]["r1"] = serde_json::json!(0.1);
    let p = dir.join("with_r1.json");
    std::fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    let out = run(&["--config", p.to_str().unwrap(), "region", "--which", "expected-common"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible mode"));
}

#[test]
fn eta_zero_rate_gives_zero_row() {
    let dir = tempdir();
    let cfg = fast_ternary(&dir);
    let out = run(&["--config", &cfg, "eta", "--receiver", "1", "--rate", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let data_line = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = data_line.split(',').collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0);
    assert!(text.contains("# log_base=bits"));
}

#[test]
fn region_csv_round_trips_and_is_deterministic() {
    let dir = tempdir();
    let cfg = fast_ternary(&dir);
    let out_path = dir.join("fix.csv");
    let args = [
        "--config",
        &cfg,
        "--out",
        out_path.to_str().unwrap(),
        "region",
        "--which",
        "maxrate",
    ];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(&out_path).unwrap();
    // header, at least one data row, metadata footer
    assert!(first.starts_with("theta1,theta2,"));
    assert!(first.contains("# which=maxrate"));
    assert!(first.contains("# seed="));
    // every numeric field re-parses; rows stay sorted by theta1
    let mut last_t1 = f64::NEG_INFINITY;
    for line in first.lines().skip(1).filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let t1: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert!(t1 >= last_t1);
        last_t1 = t1;
    }
    // rerun reproduces byte-identically
    let out2 = run(&args);
    assert_eq!(out2.status.code(), Some(0));
    let second = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(first, second);
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempdir();
    let text = std::fs::read_to_string(config_path("ternary_example.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["log_base"] = serde_json::json!("bits");
    v["sim"]["trials_h0"] = serde_json::json!(500);
    v["sim"]["trials_h1"] = serde_json::json!(500);
    let p = dir.join("sim.json");
    std::fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    let out_path = dir.join("sim.csv");
    let out = run(&[
        "--config",
        p.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("n,receiver,alpha,"));
    let summary_path = dir.join("sim.summary.json");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary_path).unwrap()).unwrap();
    assert_eq!(summary["length_accounting_ok"], serde_json::json!(true));
    assert!(summary["outcomes"].as_array().unwrap().len() == 1);

    // determinism: byte-identical reruns
    let rerun = run(&[
        "--config",
        p.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(rerun.status.code(), Some(0));
    assert_eq!(csv, std::fs::read_to_string(&out_path).unwrap());
}

#[test]
fn validate_reports_pass_lines() {
    let dir = tempdir();
    let cfg = fast_ternary(&dir);
    let out = run(&["--config", &cfg, "validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("PASS optimizer >= grid oracle"), "{report}");
    assert!(report.contains("PASS emitted CSV re-parses"), "{report}");
    assert!(report.contains("PASS maxrate region within no-rate-sharing region"), "{report}");
    assert!(report.contains("PASS no-rate-sharing region within expected-common region"), "{report}");
    assert!(!report.contains("FAIL"), "{report}");
}

#[test]
fn shipped_configs_load_and_match_builtin_instances() {
    // ternary demo
    let out = run(&[
        "--config",
        &config_path("ternary_example.json"),
        "--log-base",
        "bits",
        "eta",
        "--receiver",
        "1",
        "--rate",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // binary validation family parses (runs nothing heavy here)
    let text = std::fs::read_to_string(config_path("binary_validation.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["sim_family"].as_array().unwrap().len(), 3);
    let pmf = &v["pmf"];
    // crossover 0.1 doubly-symmetric source
    assert_eq!(pmf[0][0][0], serde_json::json!(0.405));
    assert_eq!(pmf[1][0][0], serde_json::json!(0.005));
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "expreg-test-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
