//! Command-line behaviour: exit codes, artifacts and report handling.

use std::fs;
use std::path::Path;

use sublin_gbm::cli::{main_with_args, EXIT_FAIL, EXIT_OK, EXIT_USAGE};
use sublin_gbm::verify::CheckReport;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("sublin-gbm").chain(args.iter().copied()))
}

fn out(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

#[test]
fn cfl_violation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[pde]\ndx = 0.01\ndt = 0.001\n").unwrap();
    assert_eq!(
        run(&["--config", cfg.to_str().unwrap(), "--out", &out(dir.path()), "pde"]),
        EXIT_USAGE
    );
    let err = sublin_gbm::config::RunConfig::load(&cfg).unwrap_err().to_string();
    assert!(err.contains("dt <= dx^2/sigma_upper^2"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--out", &out(dir.path()), "verify", "no_such_check"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(
        run(&["--out", &out(dir.path()), "simulate", "--policy", "const:3"]),
        EXIT_USAGE
    );
    assert_eq!(
        run(&[
            "--out",
            &out(dir.path()),
            "expect",
            "--engine",
            "pde",
            "--functional",
            "max"
        ]),
        EXIT_USAGE
    );
    let cfg = dir.path().join("unknown.toml");
    fs::write(&cfg, "[pde]\ndx = 0.01\nfoo = 1\n").unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "pde"]), EXIT_USAGE);
}

#[test]
fn pde_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["--out", &out(dir.path()), "pde", "--phi", "clamped_abs", "--T", "1"]),
        EXIT_OK
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pde_clamped_abs_10.json")).unwrap()).unwrap();
    let v = json["value_at_0"].as_f64().unwrap();
    assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-3);
    assert!(json["cfl"].as_f64().unwrap() <= 1.0);
    assert_eq!(json["config"]["band"]["sigma_upper_sq"].as_f64(), Some(1.0));
    let csv = fs::read_to_string(dir.path().join("pde_clamped_abs_10.csv")).unwrap();
    assert!(csv.starts_with("x,u\n"));
    assert_eq!(csv.lines().count(), 1 + 1601);
}

#[test]
fn lattice_simulate_and_envelope_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(dir.path());
    assert_eq!(run(&["--out", &o, "lattice", "--steps", "32", "--full"]), EXIT_OK);
    assert!(dir.path().join("lattice_clamped_abs_10.csv").exists());
    assert_eq!(
        run(&[
            "--out",
            &o,
            "simulate",
            "--policy",
            "bangbang:0.3",
            "--paths",
            "7",
            "--steps",
            "10"
        ]),
        EXIT_OK
    );
    let paths = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert!(paths.lines().count() > 7);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("paths.json")).unwrap()).unwrap();
    assert_eq!(meta["rng"], sublin_gbm::pathspace::RNG_ALGORITHM);
    assert_eq!(
        run(&[
            "--out",
            &o,
            "envelope",
            "--functional",
            "max",
            "--steps",
            "32",
            "--paths",
            "4000"
        ]),
        EXIT_OK
    );
    let env: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("envelope.json")).unwrap()).unwrap();
    assert_eq!(env["sandwich_holds"], true);
    assert_eq!(env["per_policy"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_report_and_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(dir.path());
    assert_eq!(run(&["--out", &o, "verify", "structure"]), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("structure.json")).unwrap();
    let report: CheckReport = serde_json::from_str(&text).unwrap();
    assert!(report.pass && report.config.is_some());
    // JSON round trip is lossless
    let again: CheckReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);

    assert_eq!(run(&["report", &o, "--strict"]), EXIT_OK);

    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(run(&["report", &o]), EXIT_OK);
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    assert_eq!(index["reports"].as_array().unwrap().len(), 1);
    assert_eq!(index["skipped"][0]["file"], "broken.json");

    let mut failed = report.clone();
    failed.check = "structure_copy".into();
    failed.pass = false;
    fs::write(dir.path().join("failed.json"), serde_json::to_string(&failed).unwrap()).unwrap();
    assert_eq!(run(&["report", &o]), EXIT_OK);
    assert_eq!(run(&["report", &o, "--strict"]), EXIT_FAIL);
    let md = fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.contains("| structure_copy | FAIL"));
}

#[test]
fn report_on_empty_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", &out(dir.path())]), EXIT_USAGE);
    assert_eq!(run(&["report", &out(&dir.path().join("missing"))]), EXIT_USAGE);
}

#[test]
fn verify_params_override_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[verify.params.structure]\ntree_steps = 3\nsamples = 2\n").unwrap();
    assert_eq!(
        run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &out(dir.path()),
            "verify",
            "structure"
        ]),
        EXIT_OK
    );
    let report: CheckReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("structure.json")).unwrap()).unwrap();
    assert_eq!(report.params["tree_steps"], 3);
    fs::write(&cfg, "[verify.params.structure]\nbogus = 1\n").unwrap();
    assert_eq!(
        run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &out(dir.path()),
            "verify",
            "structure"
        ]),
        EXIT_USAGE
    );
}
