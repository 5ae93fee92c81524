//! Discrete consistent sublinear expectations.
//!
//! One step of the lattice expectation maps a function `f` of the increment
//! to `max_{σ∈Σ} Σ_k w_k f(σ√dt·z_k)`. Two engines compose this step
//! backwards in time:
//!
//! - [`tree::TreeLattice`] recurses over whole histories. It is exact for
//!   arbitrary path functionals but exponential in the number of steps.
//! - [`dp::DpModel`] runs the same recursion on a uniform grid of augmented
//!   states (B, running maximum, local time, ...) and scales to thousands of
//!   steps.
//!
//! [`tilde`] replaces the max over σ by a short G̃-heat solve, and
//! [`product`] adds an independent Gaussian coordinate `εW`.

pub mod dp;
pub mod product;
pub mod state;
pub mod tilde;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generator::VolatilityBand;
use crate::quadrature::gauss_hermite;
use crate::{Error, Result};

pub use dp::{conditional_expectation, dp_expectation, DpModel, DpResult, Retention};
pub use product::{ProductCheck, ProductLattice};
pub use state::{Axis, Coordinate, StateSpec};
pub use tilde::{tilde_conditional_expectation, TildeModel};
pub use tree::{TreeLattice, TreeNode};

/// Default number of σ levels when the band is refined.
pub const DEFAULT_SIGMA_LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    times: Vec<f64>,
    mesh: f64,
}

impl TimePartition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::config("a partition needs t0 = 0 and at least one step"));
        }
        let mut mesh: f64 = 0.0;
        for w in times.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!(
                    "partition times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
            mesh = mesh.max(d);
        }
        Ok(Self { times, mesh })
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::config(format!(
                "uniform partition needs horizon > 0 and steps >= 1, got T={horizon}, n={steps}"
            )));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        times[steps] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.horizon() / self.steps() as f64;
        (0..self.steps()).all(|i| (self.dt(i) - h).abs() <= 1e-12 * h.max(1.0))
    }

    /// Step size of a uniform partition, or a config error.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.is_uniform() {
            Ok(self.horizon() / self.steps() as f64)
        } else {
            Err(Error::config("grid dynamic programming requires a uniform partition"))
        }
    }
}

/// Finite set of volatilities `σ` (not variances), ascending, containing `σ̲`
/// and `σ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSet {
    levels: Vec<f64>,
}

impl SigmaSet {
    pub fn new(levels: Vec<f64>, band: &VolatilityBand) -> Result<Self> {
        if levels.is_empty() || levels.len() > u8::MAX as usize {
            return Err(Error::config(format!(
                "sigma set needs 1..=255 levels, got {}",
                levels.len()
            )));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sigma levels must be strictly ascending"));
        }
        let tol = 1e-12;
        if let Some(s) = levels.iter().find(|s| !band.contains_sigma(**s, tol)) {
            return Err(Error::config(format!(
                "sigma level {s} lies outside the band [{}, {}]",
                band.sigma_lower(),
                band.sigma_upper()
            )));
        }
        if (levels[0] - band.sigma_lower()).abs() > tol || (levels[levels.len() - 1] - band.sigma_upper()).abs() > tol {
            return Err(Error::config("sigma set must contain both band endpoints"));
        }
        Ok(Self { levels })
    }

    /// `{σ̲, σ̄}` (a single level for a degenerate band).
    pub fn endpoints(band: &VolatilityBand) -> Self {
        Self::refined(band, 2)
    }

    /// `k` levels evenly spaced in σ from `σ̲` to `σ̄`.
    pub fn refined(band: &VolatilityBand, k: usize) -> Self {
        let (lo, hi) = (band.sigma_lower(), band.sigma_upper());
        if band.is_degenerate() || k < 2 {
            let levels = if band.is_degenerate() { vec![hi] } else { vec![lo, hi] };
            return Self { levels };
        }
        let mut levels: Vec<f64> = (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect();
        levels[k - 1] = hi;
        Self { levels }
    }

    /// Arbitrary ascending levels with no band check; used to build
    /// deliberately broken controls.
    pub fn unchecked(levels: Vec<f64>) -> Self {
        Self { levels }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementScheme {
    Rademacher,
    Gauss { q: usize },
}

impl IncrementScheme {
    pub fn materialize(&self) -> Result<Increments> {
        let (nodes, weights) = match *self {
            IncrementScheme::Rademacher => (vec![-1.0, 1.0], vec![0.5, 0.5]),
            IncrementScheme::Gauss { q } => gauss_hermite(q)?,
        };
        let inc = Increments {
            scheme: *self,
            nodes,
            weights,
        };
        inc.validate()?;
        Ok(inc)
    }
}

impl fmt::Display for IncrementScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncrementScheme::Rademacher => write!(f, "rademacher"),
            IncrementScheme::Gauss { q } => write!(f, "gauss:{q}"),
        }
    }
}

impl FromStr for IncrementScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "rademacher" => Ok(IncrementScheme::Rademacher),
            None if s == "gauss" => Ok(IncrementScheme::Gauss { q: 8 }),
            Some(("gauss", q)) => q
                .parse()
                .map(|q| IncrementScheme::Gauss { q })
                .map_err(|_| Error::argument(format!("bad quadrature order in '{s}'"))),
            _ => Err(Error::argument(format!(
                "unknown increment scheme '{s}' (rademacher | gauss:Q)"
            ))),
        }
    }
}

/// Materialized increment law: standardized nodes `z_k` with weights `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub scheme: IncrementScheme,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Increments {
    pub fn rademacher() -> Self {
        IncrementScheme::Rademacher.materialize().expect("rademacher is valid")
    }

    pub fn gauss(q: usize) -> Result<Self> {
        IncrementScheme::Gauss { q }.materialize()
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-14 {
            return Err(Error::numerical(format!(
                "increment weights must be positive and sum to 1, got {total}"
            )));
        }
        let q = self.nodes.len();
        if (0..q).any(|k| (self.nodes[k] + self.nodes[q - 1 - k]).abs() > 1e-14) {
            return Err(Error::numerical("increment nodes must be symmetric about 0"));
        }
        let m2: f64 = self.nodes.iter().zip(&self.weights).map(|(z, w)| w * z * z).sum();
        if (m2 - 1.0).abs() > 1e-12 {
            return Err(Error::numerical(format!("increment second moment must be 1, got {m2}")));
        }
        Ok(())
    }

    pub fn max_abs_node(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// `max_{σ∈Σ} Σ_k w_k f(σ√dt·z_k)` and the index of the smallest maximizing σ.
pub fn one_step_sublinear(f: impl Fn(f64) -> f64, dt: f64, sigmas: &[f64], inc: &Increments) -> (f64, usize) {
    let sq = dt.sqrt();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (j, &s) in sigmas.iter().enumerate() {
        let v: f64 = inc.nodes.iter().zip(&inc.weights).map(|(z, w)| w * f(s * sq * z)).sum();
        if j == 0 || v > best {
            best = v;
            arg = j;
        }
    }
    (best, arg)
}
