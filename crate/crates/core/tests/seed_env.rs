//! `SUBLIN_SEED` overrides the configured seed. Kept in its own test binary
//! because it mutates the process environment.

use std::fs;

use sublin_gbm::cli::{main_with_args, EXIT_OK, EXIT_USAGE};
use sublin_gbm::config::{RunConfig, SEED_ENV};

#[test]
fn env_seed_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_string_lossy().into_owned();
    let args = [
        "sublin-gbm",
        "--out",
        o.as_str(),
        "simulate",
        "--policy",
        "const:1",
        "--paths",
        "3",
        "--steps",
        "5",
    ];

    std::env::set_var(SEED_ENV, "12345");
    assert_eq!(RunConfig::default().with_env_seed().unwrap().mc.seed, 12345);
    assert_eq!(main_with_args(args), EXIT_OK);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("paths.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 12345);
    let first = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(main_with_args(args), EXIT_OK);
    assert_eq!(fs::read_to_string(dir.path().join("paths.csv")).unwrap(), first);

    std::env::set_var(SEED_ENV, "12346");
    assert_eq!(main_with_args(args), EXIT_OK);
    assert_ne!(fs::read_to_string(dir.path().join("paths.csv")).unwrap(), first);

    std::env::set_var(SEED_ENV, "not-a-number");
    assert_eq!(main_with_args(args), EXIT_USAGE);
    std::env::remove_var(SEED_ENV);
    assert_eq!(
        RunConfig::default().with_env_seed().unwrap().mc.seed,
        RunConfig::default().mc.seed
    );
}
