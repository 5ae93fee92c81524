//! Run one theorem check with default parameters and print its report.
//!
//! `cargo run --release --example verify_check -- krylov`

use sublin_gbm::cli::{run_check, CHECK_NAMES};
use sublin_gbm::config::RunConfig;

fn main() -> sublin_gbm::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "pde_moments".into());
    if !CHECK_NAMES.contains(&name.as_str()) {
        eprintln!("known checks: {}", CHECK_NAMES.join(", "));
        std::process::exit(2);
    }
    let mut report = run_check(&RunConfig::default(), &name)?;
    report.config = None;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("{}", report.summary_line());
    Ok(())
}
