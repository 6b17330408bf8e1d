use std::path::Path;
use std::process::{Command, Output};

use quickdrift::pipeline::SyntheticTable;

fn quickdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quickdrift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn threshold_defaults_to_mortality_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = quickdrift(&["threshold", "--output", dir.path().to_str().unwrap()]);
    let v = json(&out);
    let a = v["A_star"].as_f64().unwrap();
    assert!((a - 0.85).abs() < 0.01);
    assert_eq!(v["z"].as_array().unwrap().len(), 2);
    let y = std::fs::read_to_string(dir.path().join("y_curve.csv")).unwrap();
    assert_eq!(y.lines().count(), 513);
    let value = std::fs::read_to_string(dir.path().join("value.csv")).unwrap();
    assert!(value.starts_with("x,V\n"));
}

#[test]
fn calibrate_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("table.csv");
    SyntheticTable::default().generate(5).unwrap().write_csv(&input).unwrap();
    let v = json(&quickdrift(&["calibrate", "--input", input.to_str().unwrap(), "--window", "1990:2000"]));
    assert!(v["sigma1"].as_f64().unwrap() > 0.0);
    assert_eq!(v["window"], serde_json::json!([1990, 2000]));
}

#[test]
fn detect_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("table.csv");
    let table = SyntheticTable {
        change_year: Some(2003),
        r: [0.09, 0.06],
        ..SyntheticTable::default()
    };
    table.generate(2).unwrap().write_csv(&input).unwrap();
    let out_dir = dir.path().join("out");
    let v = json(&quickdrift(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--calib-window",
        "1990:2000",
        "--monitor-window",
        "1990:2017",
        "--output",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(v["recursion_start"], 1990);
    for f in ["mortality.csv", "residuals.csv", "posterior.csv", "report.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let posterior = std::fs::read_to_string(out_dir.join("posterior.csv")).unwrap();
    assert_eq!(posterior.lines().count(), 29);
}

#[test]
fn simulate_and_risk_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    let run = || {
        json(&quickdrift(&[
            "simulate", "--seed", "4", "--horizon", "20", "--dt", "0.1", "--output", path.to_str().unwrap(),
        ]))
    };
    let first = run();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(run(), first);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    assert!(text.starts_with("t,x1,x2,pi\n"));
    assert_eq!(text.lines().count(), 202);

    let risk = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_quickdrift"))
            .args(["risk", "--A", "0.8,0.9", "--paths", "500", "--seed", "1"])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let csv = risk("1");
    assert_eq!(csv, risk("4"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let conflict = write_config(dir.path(), r#"{"dim": 2, "sigma": [0.03, 0, 0.01, 0.02], "r": [0.1, 0.1], "r_auto": true}"#);
    assert_eq!(quickdrift(&["threshold", "--config", &conflict]).status.code(), Some(2));
    assert_eq!(quickdrift(&["threshold", "--config", "/no/such/config.json"]).status.code(), Some(2));
    assert_eq!(quickdrift(&["risk"]).status.code(), Some(2));

    let bad_data = dir.path().join("bad.csv");
    std::fs::write(&bad_data, "year,mu_male,mu_female\n2000,0.1,0.1\n").unwrap();
    assert_eq!(
        quickdrift(&["calibrate", "--input", bad_data.to_str().unwrap(), "--window", "2000:2001"]).status.code(),
        Some(3)
    );

    let infeasible = write_config(
        dir.path(),
        r#"{"dim": 1, "sigma": [0.1], "r": [-50.0], "jumps": {"mu_inf": 0.01, "w": [1.0]}}"#,
    );
    assert_eq!(quickdrift(&["threshold", "--config", &infeasible]).status.code(), Some(2));
    assert_eq!(quickdrift(&["simulate", "--config", &infeasible]).status.code(), Some(4));
}
