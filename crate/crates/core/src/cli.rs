//! `sublin-gbm` command line. Exit codes: 0 success (all checks pass),
//! 1 a check failed, 2 configuration or usage error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::envelope::{extract_policy, sup_over_policies, ControlPolicy};
use crate::generator::{DominatedGenerator, SublinearGenerator};
use crate::gheat::{solve_with, GridFunction, PdeConfig, SpatialGrid, TestFunction};
use crate::lattice::{Coordinate, DpModel, Retention, TildeModel, TimePartition};
use crate::pathspace::{discrete_local_time, simulate, write_bundle_csv, SamplePath, RNG_ALGORITHM};
use crate::verify::{self, CheckReport};
use crate::{Error, Nonlinearity, Result};

/// Every check `verify` knows, in the order `verify all` runs them.
pub const CHECK_NAMES: [&str; 11] = [
    "pde_moments",
    "lattice_pde",
    "product_space",
    "structure",
    "perturbation",
    "reflection",
    "reflection_tilde",
    "levy",
    "krylov",
    "density",
    "sgn",
];

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sublin-gbm",
    version,
    about = "G-expectations of G-Brownian motion: solvers and theorem checks"
)]
pub struct Cli {
    /// TOML run configuration; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the G-heat equation for a test function.
    Pde(PdeArgs),
    /// Ê[φ(X)] for a terminal or path functional X.
    Expect(ExpectArgs),
    /// Grid DP for φ(B_T), exported as a value (and policy) table.
    Lattice(LatticeArgs),
    /// Simulate paths under a volatility policy.
    Simulate(SimulateArgs),
    /// Monte Carlo over a policy family against the DP value.
    Envelope(EnvelopeArgs),
    /// Run a theorem check (or `all`).
    Verify(VerifyArgs),
    /// Summarize the reports in an artifact directory.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct PdeArgs {
    /// Test function `kind[:params]`, e.g. `clamped_abs`, `cosine:2`.
    #[arg(long, default_value = "clamped_abs")]
    pub phi: String,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Solve with G_ε(a) = G(a) + ½ε²a.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Solve with the configured dominated generator.
    #[arg(long, conflicts_with = "eps")]
    pub tilde: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Functional {
    /// φ(B_T)
    Terminal,
    /// φ(S_T)
    Max,
    /// φ(S_T − B_T)
    Drawdown,
    /// φ(|B_T|)
    Abs,
    /// φ(L_T(0))
    LocalTime,
    /// φ(Σ sgn(B_i)ΔB_i)
    SgnIntegral,
}

impl Functional {
    /// Coordinates of the DP state and the slot φ reads.
    fn coords(self) -> (Vec<Coordinate>, usize) {
        match self {
            Functional::Terminal => (vec![Coordinate::Base], 0),
            Functional::Max => (vec![Coordinate::Base, Coordinate::RunningMax], 1),
            Functional::Drawdown => (vec![Coordinate::Drawdown], 0),
            Functional::Abs => (vec![Coordinate::Reflected], 0),
            Functional::LocalTime => (vec![Coordinate::Base, Coordinate::Tanaka { level: 0.0 }], 1),
            Functional::SgnIntegral => (vec![Coordinate::Base, Coordinate::SgnIntegral], 1),
        }
    }

    fn on_path(self, p: &SamplePath) -> f64 {
        match self {
            Functional::Terminal => p.terminal(),
            Functional::Max => p.running_max().max(0.0),
            Functional::Drawdown => p.running_max().max(0.0) - p.terminal(),
            Functional::Abs => p.terminal().abs(),
            Functional::LocalTime => discrete_local_time(p, 0.0, None).terminal(),
            Functional::SgnIntegral => p.values.windows(2).map(|w| crate::sgn(w[0]) * (w[1] - w[0])).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Pde,
    Lattice,
}

#[derive(Debug, clap::Args)]
pub struct ExpectArgs {
    #[arg(long, default_value = "clamped_abs")]
    pub phi: String,
    #[arg(long, value_enum, default_value_t = Functional::Terminal)]
    pub functional: Functional,
    #[arg(long, value_enum, default_value_t = Engine::Lattice)]
    pub engine: Engine,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Lattice steps (overrides `lattice.steps`).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Use the configured dominated generator (three-segment default).
    #[arg(long)]
    pub tilde: bool,
}

#[derive(Debug, clap::Args)]
pub struct LatticeArgs {
    #[arg(long, default_value = "clamped_abs")]
    pub phi: String,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub sigma_levels: Option<usize>,
    /// `rademacher` or `gauss:Q`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Time index of the exported value grid.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    /// Keep every layer and the argmax policy (large for many steps).
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// `const:σ`, `bangbang:θ[:in:out]` or `table:<csv>`.
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EnvelopeArgs {
    #[arg(long, value_enum, default_value_t = Functional::Drawdown)]
    pub functional: Functional,
    /// Payoff applied to the functional.
    #[arg(long, default_value = "clamped_abs")]
    pub phi: String,
    /// Comma-separated policies; `extracted` is the DP argmax policy.
    #[arg(long, default_value = "const:lower,const:upper,extracted")]
    pub family: String,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    /// One of the check names, or `all`.
    pub check: String,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Directory holding JSON reports (defaults to the output directory).
    pub dir: Option<PathBuf>,
    /// Exit with 1 when any report failed.
    #[arg(long)]
    pub strict: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_env_seed()?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Pde(a) => cmd_pde(&cfg, a),
        Command::Expect(a) => cmd_expect(&cfg, a),
        Command::Lattice(a) => cmd_lattice(&cfg, a),
        Command::Simulate(a) => cmd_simulate(&cfg, a),
        Command::Envelope(a) => cmd_envelope(&cfg, a),
        Command::Verify(a) => cmd_verify(&cfg, &a.check),
        Command::Report(a) => cmd_report(a.dir.as_deref().unwrap_or(&cfg.output.dir), a.strict),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(&cfg.output.dir)
}

/// Writes `value` as pretty JSON, stamping objects with `schema_version`.
fn write_json(cfg: &RunConfig, name: &str, value: &impl Serialize) -> Result<()> {
    if cfg.wants(Format::Json) {
        let mut value = serde_json::to_value(value)?;
        if let Value::Object(map) = &mut value {
            map.entry("schema_version").or_insert(json!(verify::SCHEMA_VERSION));
        }
        fs::write(out_dir(cfg)?.join(name), serde_json::to_string_pretty(&value)?)?;
    }
    Ok(())
}

fn csv_file(cfg: &RunConfig, name: &str) -> Result<Option<fs::File>> {
    if cfg.wants(Format::Csv) {
        Ok(Some(fs::File::create(out_dir(cfg)?.join(name))?))
    } else {
        Ok(None)
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Parses a test function, applying `pde.clamp` to clamped kinds given
/// without an explicit clamp.
fn parse_phi(cfg: &RunConfig, spec: &str) -> Result<TestFunction> {
    let clamped = [
        "clamped_abs",
        "abs",
        "clamped_square",
        "square",
        "neg_clamped_square",
        "neg_square",
        "clamped_linear",
        "linear",
    ];
    match cfg.pde.clamp {
        Some(c) if clamped.contains(&spec) => format!("{spec}:{c}").parse(),
        _ => spec.parse(),
    }
}

fn echo(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn tilde_or_default(cfg: &RunConfig) -> Result<DominatedGenerator> {
    match cfg.tilde_generator()? {
        Some(g) => Ok(g),
        None => DominatedGenerator::default_three_segment(cfg.band),
    }
}

fn cmd_pde(cfg: &RunConfig, a: &PdeArgs) -> Result<i32> {
    let phi = parse_phi(cfg, &a.phi)?;
    let grid = SpatialGrid::symmetric(cfg.pde.domain, cfg.pde.dx)?;
    let base = SublinearGenerator::new(cfg.band);
    let (h, label): (Box<dyn Nonlinearity>, String) = match (a.eps, a.tilde) {
        (Some(e), _) => (Box::new(base.perturbed(e)?), format!("G_eps(eps={e})")),
        (None, true) => (Box::new(tilde_or_default(cfg)?), "G_tilde".into()),
        (None, false) => (Box::new(base), "G".into()),
    };
    let pde_cfg = PdeConfig {
        horizon: a.horizon,
        dt: cfg.pde.dt,
        ..PdeConfig::new(a.horizon)
    };
    let (steps, dt) = pde_cfg.schedule(h.effective_upper_variance(), grid.dx)?;
    let u: GridFunction = solve_with(h.as_ref(), |x| phi.eval(x), &pde_cfg, &grid)?;
    let value = u.interpolate(0.0);
    let name = format!("pde_{}", slug(&phi.to_string()));
    if let Some(f) = csv_file(cfg, &format!("{name}.csv"))? {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["x", "u"])?;
        for (j, v) in u.values.iter().enumerate() {
            w.write_record([grid.x(j).to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    let clamp = match phi {
        TestFunction::ClampedAbs { clamp }
        | TestFunction::ClampedSquare { clamp }
        | TestFunction::NegClampedSquare { clamp }
        | TestFunction::ClampedLinear { clamp }
        | TestFunction::ClampedCall { clamp, .. } => Some(clamp),
        _ => None,
    };
    let summary = json!({
        "value_at_0": value,
        "dx": grid.dx,
        "dt": dt,
        "steps": steps,
        "cfl": dt * h.effective_upper_variance() / (grid.dx * grid.dx),
        "clamp": clamp,
        "phi": phi.to_string(),
        "horizon": a.horizon,
        "generator": label,
        "config": echo(cfg),
    });
    write_json(cfg, &format!("{name}.json"), &summary)?;
    println!("E[{phi}] under {label} at T={}: {value:.10}", a.horizon);
    Ok(EXIT_OK)
}

fn cmd_expect(cfg: &RunConfig, a: &ExpectArgs) -> Result<i32> {
    let phi = parse_phi(cfg, &a.phi)?;
    let steps = a.steps.unwrap_or(cfg.lattice.steps);
    let (value, engine) = match a.engine {
        Engine::Pde => {
            if a.functional != Functional::Terminal {
                return Err(Error::argument("the pde engine only handles the terminal functional"));
            }
            let grid = SpatialGrid::symmetric(cfg.pde.domain, cfg.pde.dx)?;
            let pde_cfg = PdeConfig {
                dt: cfg.pde.dt,
                ..PdeConfig::new(a.horizon)
            };
            let u = if a.tilde {
                solve_with(&tilde_or_default(cfg)?, |x| phi.eval(x), &pde_cfg, &grid)?
            } else {
                solve_with(&SublinearGenerator::new(cfg.band), |x| phi.eval(x), &pde_cfg, &grid)?
            };
            (u.interpolate(0.0), "pde")
        }
        Engine::Lattice => {
            let (coords, slot) = a.functional.coords();
            let partition = TimePartition::uniform(a.horizon, steps)?;
            let payoff = move |x: &[f64]| phi.eval(x[slot]);
            let v = if a.tilde {
                TildeModel::new(partition, tilde_or_default(cfg)?, coords)?
                    .solve(&payoff, Retention::Final)?
                    .value
            } else {
                DpModel::new(partition, cfg.sigma_set(), cfg.scheme()?.materialize()?, coords)?
                    .solve(&payoff, Retention::Final)?
                    .value
            };
            (v, if a.tilde { "nested_tilde" } else { "lattice" })
        }
    };
    let functional = format!("{:?}", a.functional).to_lowercase();
    let summary = json!({
        "value": value,
        "phi": phi.to_string(),
        "functional": functional,
        "engine": engine,
        "horizon": a.horizon,
        "steps": steps,
        "config": echo(cfg),
    });
    write_json(
        cfg,
        &format!("expect_{functional}_{}.json", slug(&phi.to_string())),
        &summary,
    )?;
    println!("E[{phi}({functional})] = {value:.10} ({engine})");
    Ok(EXIT_OK)
}

fn cmd_lattice(cfg: &RunConfig, a: &LatticeArgs) -> Result<i32> {
    let phi = parse_phi(cfg, &a.phi)?;
    let mut cfg = cfg.clone();
    if let Some(n) = a.steps {
        cfg.lattice.steps = n;
    }
    if let Some(k) = a.sigma_levels {
        cfg.lattice.sigma_levels = k;
    }
    if let Some(s) = &a.scheme {
        cfg.lattice.scheme = s.clone();
    }
    cfg.validate()?;
    let model = DpModel::new(
        TimePartition::uniform(a.horizon, cfg.lattice.steps)?,
        cfg.sigma_set(),
        cfg.scheme()?.materialize()?,
        vec![Coordinate::Base],
    )?;
    let retention = if a.full {
        Retention::Full
    } else {
        Retention::Layer(a.layer)
    };
    let dp = model.solve(&|x: &[f64]| phi.eval(x[0]), retention)?;
    let name = format!("lattice_{}", slug(&phi.to_string()));
    if let Some(f) = csv_file(&cfg, &format!("{name}.csv"))? {
        dp.write_csv(f)?;
    }
    write_json(
        &cfg,
        &format!("{name}.json"),
        &json!({ "summary": dp.summary(), "phi": phi.to_string(), "config": echo(&cfg) }),
    )?;
    println!(
        "lattice E[{phi}(B_T)] = {:.10} (n={}, |Sigma|={})",
        dp.value,
        cfg.lattice.steps,
        dp.sigma_levels.len()
    );
    Ok(EXIT_OK)
}

/// `ControlPolicy::parse`, plus `const:lower` and `const:upper` for the band edges.
fn parse_policy(cfg: &RunConfig, spec: &str) -> Result<ControlPolicy> {
    match spec {
        "const:lower" => Ok(ControlPolicy::Constant {
            sigma: cfg.band.sigma_lower(),
        }),
        "const:upper" => Ok(ControlPolicy::Constant {
            sigma: cfg.band.sigma_upper(),
        }),
        other => ControlPolicy::parse(other, &cfg.band),
    }
}

fn cmd_simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<i32> {
    let policy = parse_policy(cfg, &a.policy)?;
    let paths = a.paths.unwrap_or(cfg.mc.paths);
    let seed = a.seed.unwrap_or(cfg.mc.seed);
    let steps = a.steps.unwrap_or(cfg.lattice.steps);
    let partition = TimePartition::uniform(a.horizon, steps)?;
    let bundle = simulate(
        &policy,
        cfg.band,
        &partition,
        &cfg.scheme()?.materialize()?,
        seed,
        paths,
    )?;
    if let Some(f) = csv_file(cfg, "paths.csv")? {
        write_bundle_csv(&bundle, f)?;
    }
    let mean_terminal = bundle.iter().map(|p| p.terminal()).sum::<f64>() / paths as f64;
    write_json(
        cfg,
        "paths.json",
        &json!({
            "policy": policy.to_string(),
            "paths": paths,
            "steps": steps,
            "seed": seed,
            "rng": RNG_ALGORITHM,
            "mean_terminal": mean_terminal,
            "config": echo(cfg),
        }),
    )?;
    println!("simulated {paths} paths of {steps} steps under {policy} (seed {seed})");
    Ok(EXIT_OK)
}

fn cmd_envelope(cfg: &RunConfig, a: &EnvelopeArgs) -> Result<i32> {
    let phi = parse_phi(cfg, &a.phi)?;
    let paths = a.paths.unwrap_or(cfg.mc.paths);
    let seed = a.seed.unwrap_or(cfg.mc.seed);
    let steps = a.steps.unwrap_or(cfg.lattice.steps);
    let partition = TimePartition::uniform(a.horizon, steps)?;
    let inc = cfg.scheme()?.materialize()?;
    let (coords, slot) = a.functional.coords();
    let dp = DpModel::new(partition.clone(), cfg.sigma_set(), inc.clone(), coords)?
        .solve(&|x: &[f64]| phi.eval(x[slot]), Retention::Policy)?;
    let mut family = Vec::new();
    for spec in a.family.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let policy = match spec {
            "extracted" => extract_policy(&dp)?,
            other => parse_policy(cfg, other)?,
        };
        family.push((spec.to_string(), policy));
    }
    let f = a.functional;
    let report = sup_over_policies(
        &|p: &SamplePath| phi.eval(f.on_path(p)),
        &family,
        cfg.band,
        &partition,
        &inc,
        paths,
        seed,
        Some(dp.value),
    )?;
    let sandwich = report.sandwich_holds(0.0);
    write_json(
        cfg,
        "envelope.json",
        &json!({
            "dp_value": report.dp_value,
            "best_mc": report.best_mc,
            "best_policy": report.best_policy,
            "per_policy": report.per_policy,
            "sandwich_holds": sandwich,
            "functional": format!("{f:?}").to_lowercase(),
            "phi": phi.to_string(),
            "config": echo(cfg),
        }),
    )?;
    println!(
        "dp = {:.6}, best MC = {:.6} ± {:.6} ({})",
        dp.value, report.best_mc.value, report.best_mc.stderr, report.best_policy
    );
    Ok(if sandwich == Some(false) { EXIT_FAIL } else { EXIT_OK })
}

/// Runs one named check with the parameters resolved from `cfg`.
pub fn run_check(cfg: &RunConfig, name: &str) -> Result<CheckReport> {
    use verify::structure::{MomentParams, StructuralParams};
    let mut report = match name {
        "pde_moments" => verify::pde_moments_report(&cfg.check_params::<MomentParams>(name)?),
        "lattice_pde" => verify::lattice_pde_report(&cfg.check_params(name)?),
        "product_space" => verify::product_space_report(&cfg.check_params(name)?),
        "structure" => verify::structural_report(&cfg.check_params::<StructuralParams>(name)?),
        "perturbation" => verify::perturbation_report(&cfg.check_params(name)?),
        "reflection" => verify::reflection_report(&cfg.check_params(name)?),
        "reflection_tilde" => verify::reflection_tilde_report(&cfg.check_params(name)?),
        "levy" => verify::levy_characterization_report(&cfg.check_params(name)?),
        "krylov" => verify::krylov_report(&cfg.check_params(name)?),
        "density" => verify::density_bound_report(&cfg.check_params(name)?),
        "sgn" => verify::sgn_convergence_report(&cfg.check_params(name)?),
        other => Err(Error::argument(format!(
            "unknown check '{other}' (known: {}, all)",
            CHECK_NAMES.join(", ")
        ))),
    }?;
    report.config = Some(echo(cfg));
    Ok(report)
}

fn cmd_verify(cfg: &RunConfig, check: &str) -> Result<i32> {
    let names: Vec<String> = if check == "all" {
        if cfg.verify.checks.is_empty() {
            CHECK_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            cfg.verify.checks.clone()
        }
    } else {
        vec![check.to_string()]
    };
    if let Some(bad) = names.iter().find(|n| !CHECK_NAMES.contains(&n.as_str())) {
        return Err(Error::argument(format!(
            "unknown check '{bad}' (known: {}, all)",
            CHECK_NAMES.join(", ")
        )));
    }
    let reports: Vec<CheckReport> = names.par_iter().map(|n| run_check(cfg, n)).collect::<Result<_>>()?;
    let mut summary = String::new();
    for r in &reports {
        write_json(cfg, &format!("{}.json", r.check), r)?;
        println!("{}", r.summary_line());
        for c in r.controls.iter().filter(|c| !c.flagged) {
            println!("    control '{}' was not flagged: {}", c.name, c.detail);
        }
        summary.push_str(&r.summary_line());
        summary.push('\n');
    }
    if cfg.wants(Format::Json) {
        fs::write(out_dir(cfg)?.join("summary.txt"), summary)?;
    }
    Ok(if reports.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_FAIL
    })
}

#[derive(Debug, Serialize)]
struct IndexEntry {
    file: String,
    check: String,
    pass: bool,
    skipped: Option<String>,
    runtime_s: f64,
}

/// Pass/fail matrix over the JSON reports in `dir`, written as `index.json`
/// and `summary.md`.
pub fn cmd_report(dir: &Path, strict: bool) -> Result<i32> {
    let entries = fs::read_dir(dir).map_err(|e| Error::config(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "index.json"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for path in &files {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(path)?;
        let value: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("warning: skipping malformed {name}: {e}");
                skipped.push(json!({ "file": name, "reason": e.to_string() }));
                continue;
            }
        };
        if value.get("check").is_none() || value.get("schema_version").is_none() {
            continue;
        }
        match serde_json::from_value::<CheckReport>(value) {
            Ok(r) => rows.push(IndexEntry {
                file: name,
                check: r.check,
                pass: r.pass,
                skipped: r.skipped,
                runtime_s: r.runtime_s,
            }),
            Err(e) => {
                eprintln!("warning: skipping {name}: not a check report ({e})");
                skipped.push(json!({ "file": name, "reason": e.to_string() }));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::config(format!("no check reports found in {}", dir.display())));
    }
    let all_pass = rows.iter().all(|r| r.pass);
    let mut md = String::from("| check | status | runtime (s) | file |\n|---|---|---|---|\n");
    for r in &rows {
        let status = match (&r.skipped, r.pass) {
            (Some(_), _) => "SKIP",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        md.push_str(&format!(
            "| {} | {status} | {:.2} | {} |\n",
            r.check, r.runtime_s, r.file
        ));
    }
    for s in &skipped {
        md.push_str(&format!("\nskipped {}: {}\n", s["file"], s["reason"]));
    }
    fs::write(dir.join("summary.md"), &md)?;
    fs::write(
        dir.join("index.json"),
        serde_json::to_string_pretty(&json!({
            "reports": rows,
            "skipped": skipped,
            "all_pass": all_pass,
            "schema_version": verify::SCHEMA_VERSION,
        }))?,
    )?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(md.as_bytes());
    Ok(if strict && !all_pass { EXIT_FAIL } else { EXIT_OK })
}
