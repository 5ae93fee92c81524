//! Theorem checks. Each check returns a [`CheckReport`] with the measured
//! values, the target or bound, the tolerances used and a pass flag. Every
//! check also runs at least one negative control (a deliberately broken
//! input) and only passes if the control is flagged.

pub mod density;
pub mod krylov;
pub mod levy;
pub mod perturbation;
pub mod reflection;
pub mod structure;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use density::{density_bound_report, sgn_convergence_report, DensityParams, SgnParams};
pub use krylov::{krylov_report, KrylovG, KrylovParams};
pub use levy::{levy_characterization_report, LevyCandidate, LevyParams};
pub use perturbation::{perturbation_report, PerturbationParams};
pub use reflection::{reflection_report, reflection_tilde_report, ReflectionParams, TildeReflectionParams};
pub use structure::{
    lattice_pde_report, pde_moments_report, product_space_report, structural_report, LatticePdeParams, ProductParams,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerances of every check. Reports copy the values they use into their
/// `tol` field.
pub mod tolerances {
    /// PDE anchors `Ê[B²]`, `Ê[−B²]`, `Ê[|B|]`.
    pub const PDE_MOMENT: f64 = 1e-3;
    /// Grid DP against the PDE.
    pub const LATTICE_PDE: f64 = 5e-3;
    /// Identities that hold exactly on the lattice, up to round-off.
    pub const EXACT: f64 = 1e-12;
    /// Nodewise conditional identities (martingale, quadratic, product space).
    pub const NODEWISE: f64 = 1e-10;
    /// Reflection principle, one-argument battery.
    pub const REFLECTION_ONE: f64 = 2e-2;
    /// Reflection principle, joint battery.
    pub const REFLECTION_JOINT: f64 = 3e-2;
    /// Classical (degenerate band) reflection against closed forms.
    pub const REFLECTION_CLOSED: f64 = 1e-2;
    /// Reflection under `G̃`.
    pub const REFLECTION_TILDE: f64 = 3e-2;
    /// Nested `G̃` engine with `G̃ = G` against the grid DP.
    pub const TILDE_VS_G: f64 = 5e-3;
    /// Lévy characterization, distribution match against the PDE.
    pub const LEVY_DISTRIBUTION: f64 = 5e-3;
    /// Minimum violation of the quadratic identity at flagged control nodes,
    /// in units of `|a|·Δt`.
    pub const LEVY_CONTROL_EXCESS: f64 = 0.2;
    /// Scheme margin of the small-ball density check.
    pub const DENSITY_MARGIN: f64 = 1e-2;
    /// Stochastic margin in standard errors.
    pub const STDERR_MULTIPLE: f64 = 3.0;
    /// Perturbation bound margin in units of `dx`.
    pub const PERTURBATION_DX_MULTIPLE: f64 = 2.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub name: String,
    /// True when the check rejected the broken input, as it should.
    pub flagged: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub params: Value,
    pub measured: Value,
    pub bound: Value,
    pub tol: Value,
    pub pass: bool,
    pub seed: Option<u64>,
    pub runtime_s: f64,
    pub schema_version: u32,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub controls: Vec<ControlOutcome>,
    /// Set when a precondition of the check does not hold; `pass` is false.
    #[serde(default)]
    pub skipped: Option<String>,
    /// Resolved run configuration, when produced by the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl CheckReport {
    pub(crate) fn start(check: &str, params: &impl Serialize) -> (Self, Instant) {
        let report = Self {
            check: check.to_string(),
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            measured: Value::Null,
            bound: Value::Null,
            tol: Value::Null,
            pass: false,
            seed: None,
            runtime_s: 0.0,
            schema_version: SCHEMA_VERSION,
            notes: Vec::new(),
            controls: Vec::new(),
            skipped: None,
            config: None,
        };
        (report, Instant::now())
    }

    /// Sets the pass flag from the main verdict and the controls, and stamps
    /// the runtime.
    pub(crate) fn finish(mut self, main_pass: bool, clock: Instant) -> Self {
        self.pass = main_pass && self.controls.iter().all(|c| c.flagged);
        self.runtime_s = clock.elapsed().as_secs_f64();
        self
    }

    pub(crate) fn skip(mut self, reason: String, clock: Instant) -> Self {
        self.skipped = Some(reason);
        self.pass = false;
        self.runtime_s = clock.elapsed().as_secs_f64();
        self
    }

    pub(crate) fn control(&mut self, name: &str, flagged: bool, detail: String) {
        self.controls.push(ControlOutcome {
            name: name.to_string(),
            flagged,
            detail,
        });
    }

    /// `PASS`/`FAIL`/`SKIP` line for terminals.
    pub fn summary_line(&self) -> String {
        let status = match (&self.skipped, self.pass) {
            (Some(_), _) => "SKIP",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        let controls = self.controls.iter().filter(|c| c.flagged).count();
        format!(
            "{status} {} ({:.2}s, {}/{} controls flagged)",
            self.check,
            self.runtime_s,
            controls,
            self.controls.len()
        )
    }
}

/// One-argument reflection battery `φ(u)` on `u ≥ 0`.
pub fn one_arg_battery() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("min(u,1)", |u| u.min(1.0)),
        ("arctan(u)", f64::atan),
        ("1-exp(-u)", |u| 1.0 - (-u).exp()),
        ("cos(u)", f64::cos),
        ("u/(1+u)", |u| u / (1.0 + u)),
        ("min(u,2)/2", |u| u.min(2.0) / 2.0),
    ]
}

/// Joint battery `φ(u, v)`: rank-one products and radial clamps.
pub fn joint_battery() -> Vec<(&'static str, fn(f64, f64) -> f64)> {
    vec![
        ("min(u,1)*min(v,1)", |u, v| u.min(1.0) * v.min(1.0)),
        ("arctan(u)*cos(v)", |u, v| u.atan() * v.cos()),
        ("min(|(u,v)|,1.5)", |u, v| (u * u + v * v).sqrt().min(1.5)),
        ("exp(-u)*min(v,2)/2", |u, v| (-u).exp() * v.min(2.0) / 2.0),
        ("clamp(u-v,-1,1)", |u, v| (u - v).clamp(-1.0, 1.0)),
    ]
}
