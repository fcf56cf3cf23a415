use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn heavywalk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heavywalk"))
        .args(args)
        .env("HEAVYWALK_OUT", out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn deterministic_green_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &["green", "--law", "deterministic:1,1", "--targets", "7,7"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("green.json"));
    let v = &doc["result"]["values"][0];
    assert_eq!(v["value"].as_f64(), Some(1.0));
    assert_eq!(v["remainder"].as_f64(), Some(0.0));
    assert!(doc["timestamp"].is_u64());
}

#[test]
fn off_diagonal_deterministic_green_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &["green", "--law", "deterministic:1,1", "--targets", "7,6"],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&dir.path().join("green.json"));
    assert_eq!(doc["result"]["values"][0]["value"].as_f64(), Some(0.0));
}

#[test]
fn short_grid_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    fs::write(
        &cfg,
        "[law]\nspec = product:pareto(0.5)*2\n[grid]\ntargets = 16,64; 16,128\n[check]\ntheorem = away-transversal\n",
    )
    .unwrap();
    let out = heavywalk(dir.path(), &["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("INCONCLUSIVE"));
    let doc = read_json(&dir.path().join("check.json"));
    assert!(doc["result"]["pass"].is_null());
}

#[test]
fn centered_renewal_check_passes_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("levy.cfg");
    fs::write(
        &cfg,
        "[law]\nspec = product:pareto(0.5)*2\n[grid]\ntargets = 25,25; 50,50; 100,100\nt = 1,1\n[check]\ntheorem = srt-centered\n",
    )
    .unwrap();
    let out = heavywalk(dir.path(), &["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = dir.path().join("check.json");
    let verify = heavywalk(
        dir.path(),
        &["check", "--verify-report", report.to_str().unwrap()],
    );
    assert_eq!(verify.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("consistent"));

    // a tampered verdict no longer matches its grid
    let mut doc = read_json(&report);
    doc["result"]["pass"] = Value::Bool(false);
    fs::write(&report, doc.to_string()).unwrap();
    let verify = heavywalk(
        dir.path(),
        &["check", "--verify-report", report.to_str().unwrap()],
    );
    assert_eq!(verify.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("INCONSISTENT"));
}

#[test]
fn unknown_config_key_is_an_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[law]\nspec = product:pareto(0.5)\n[grid]\nsteps = 4\n").unwrap();
    let out = heavywalk(dir.path(), &["scaling", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("grid.steps"), "{err}");
}

#[test]
fn monte_carlo_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &["green-mc", "--law", "product:pareto(0.5)*2", "--targets", "3,3", "--walks", "1000"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn monte_carlo_output_is_reproducible() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = heavywalk(
            dir.path(),
            &[
                "green-mc", "--law", "product:pareto(0.5)*2", "--targets", "3,3;5,2",
                "--walks", "20000", "--n-cap", "1000", "--seed", "11", "--threads", threads,
            ],
        );
        assert_eq!(out.status.code(), Some(0));
        strip_timestamp(read_json(&dir.path().join("green-mc.json")))
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
    assert_eq!(a["result"]["stats"]["seed"].as_u64(), Some(11));
}

#[test]
fn scaling_csv_has_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &["scaling", "--law", "product:pareto(0.5)*2", "--n-grid", "4,16"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,a1,a2,b1,b2"));
    // the exact tail (k + 1)^{-1/2} reaches 1/n at a_n = n^2 - 1
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 4.0);
    assert!((row[1] - 15.0).abs() < 1e-6, "{row:?}");
}

#[test]
fn nstep_binary_dump_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &[
            "nstep", "--law", "product:uniform(-1,1)*2", "--n", "3",
            "--lower", "-3,-3", "--upper", "3,3",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::File::open(dir.path().join("nstep.bin")).unwrap();
    let field = heavywalk::exact_engine::LatticeField::read_binary(file).unwrap();
    assert!((field.total() - 1.0).abs() < 1e-12);
    assert!((field.get(&[3, 3]) - 1.0 / 729.0).abs() < 1e-15);
}

#[test]
fn srt_constant_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = heavywalk(
        dir.path(),
        &[
            "srt-constant", "--law", "product:pareto(0.5)*2", "--t", "1,1",
            "--set", "check.regime=centered",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("srt-constant.json"));
    let c = doc["result"]["constant"].as_f64().unwrap();
    assert!((c - 2f64.sqrt() / (8.0 * std::f64::consts::PI)).abs() < 1e-6, "{c}");
}
