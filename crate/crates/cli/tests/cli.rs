use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn flightlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flightlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("FLIGHTLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

const KOCH_CONFIG: &str = r#"{
    "boundary": {"generator": {"kind": "koch", "iterations": 4}},
    "engine": {"engine": "wos", "n_max": 100000, "n_flights": 3000},
    "start": {"mode": "whitney-uniform", "eps": 0.01},
    "seed": 5
}"#;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = flightlab(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 2);
    let o = flightlab(dir.path(), &["verify", "--preset", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generate_dimension_whitney_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = flightlab(out, &["generate", "koch", "--iterations", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let boundary = out.join("boundary.json");
    assert!(boundary.is_file());

    let o = flightlab(out, &["dimension", "--boundary", boundary.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&out.join("dimension.json"))["estimate"]["d"].as_f64().unwrap();
    assert!((d - 4f64.ln() / 3f64.ln()).abs() < 0.05, "d = {d}");
    assert!(fs::read_to_string(out.join("dimension.csv")).unwrap().starts_with("eps,count"));

    let o = flightlab(out, &["whitney", "--boundary", boundary.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("whitney_levels.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    for line in csv.lines().skip(1) {
        let ratio: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio > 1.0 / 16.0 && ratio < 16.0, "{line}");
    }
    assert_eq!(
        files_in(out),
        ["boundary.json", "dimension.csv", "dimension.json", "whitney.json", "whitney_levels.csv"]
    );
}

#[test]
fn flights_are_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, KOCH_CONFIG).unwrap();
    let mut csvs = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(run);
        let o = flightlab(&out, &["--workers", workers, "flights", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(out.join("flights.csv")).unwrap());
        let meta = read_json(&out.join("flights.json"));
        assert_eq!(meta["flights"], 3000);
        assert_eq!(meta["config"]["seed"], 5);
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert_eq!(text.lines().next(), Some("flight_id,worker,n,r,start_side,end_side,censored"));
    assert_eq!(text.lines().count(), 3001);

    let out = dir.path().join("d");
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap(), "--seed", "6"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(out.join("flights.csv")).unwrap(), csvs[0]);
}

#[test]
fn fit_and_report_read_a_flights_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{
        "boundary": {"generator": {"kind": "line", "dim": 2, "extent": 16}},
        "engine": {"engine": "wos", "delta": 0.01, "n_max": 1000000, "r_esc": 100000, "n_flights": 50000},
        "start": {"mode": "whitney-uniform", "eps": 1.0},
        "seed": 9
    }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = out.join("flights.csv");
    let csv = csv.to_str().unwrap();

    let o = flightlab(
        &out,
        &["fit", "--flights", csv, "--kind", "survival", "--window", "10", "1000", "--bootstrap", "20", "--svg"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&out.join("fit_survival.json"));
    let slope = fit["fit"]["ccdf_slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    let exponent = fit["fit"]["exponent"].as_f64().unwrap();
    assert!((exponent - (slope - 1.0)).abs() < 1e-12);
    assert!(fit["bootstrap"]["sd"].as_f64().unwrap() > 0.0);
    assert!(out.join("hist_survival.csv").is_file());
    assert!(out.join("survival.svg").is_file());

    let o = flightlab(&out, &["report", "--flights", csv, "--d", "1", "--r-window", "10", "1000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read_json(&out.join("verdicts.json"))["pass"], true);

    // a wrong dimension must fail the comparison
    let o = flightlab(&out, &["report", "--flights", csv, "--d", "1.5", "--r-window", "10", "1000"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn empty_window_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, KOCH_CONFIG).unwrap();
    let out = dir.path().join("out");
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap(), "--flights", "200"]);
    assert_eq!(code(&o), 0);
    let csv = out.join("flights.csv");
    let o = flightlab(
        &out,
        &["fit", "--flights", csv.to_str().unwrap(), "--kind", "theta", "--window", "1e6", "1e7"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, KOCH_CONFIG.replace("\"seed\": 5", "\"seed\": 5, \"output_dir\": \"../escape\"")).unwrap();
    let out = dir.path().join("out");
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("escape").exists());

    fs::write(&cfg, KOCH_CONFIG.replace("\"seed\": 5", "\"seed\": 5, \"colour\": 1")).unwrap();
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn relative_boundary_file_and_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let o = flightlab(&gen, &["generate", "koch", "--iterations", "3"]);
    assert_eq!(code(&o), 0);
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{
        "boundary": {"file": "gen/boundary.json"},
        "engine": {"engine": "wos", "n_max": 100000, "n_flights": 100},
        "start": {"mode": "whitney-uniform", "eps": 0.02},
        "output_dir": "runs/r1",
        "seed": 2
    }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = flightlab(&out, &["flights", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("runs/r1/flights.csv").is_file());
    assert_eq!(files_in(&out), ["runs"]);
}

#[test]
fn verify_line2d_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = flightlab(&out, &["verify", "--preset", "line2d", "--flights", "1e5", "--seed", "7", "--svg"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    print!("{stdout}");
    assert_eq!(code(&o), 0, "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("verify.json"));
    assert_eq!(report["pass"], true);
    for f in ["boundary.json", "dimension.csv", "hist_survival.csv", "verify.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}
