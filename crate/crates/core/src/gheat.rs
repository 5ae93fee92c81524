//! Explicit monotone finite differences for `∂_t u = H(∂²_xx u)`, `u(0,·) = φ`.
//!
//! With `H = G` the solution at `(t, x)` is the G-expectation
//! `Ê[φ(x + B_t)]`. The update
//!
//! ```text
//! uⁿ⁺¹_j = uⁿ_j + dt · H((uⁿ_{j+1} − 2uⁿ_j + uⁿ_{j−1}) / dx²)
//! ```
//!
//! is monotone whenever `dt · 2·max_slope(H) / dx² ≤ 1`. The two edge nodes
//! use a zero second difference, so they keep their initial values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generator::{Nonlinearity, SublinearGenerator};
use crate::{Error, Result};

/// Default spatial step for G-expectations.
pub const DEFAULT_DX: f64 = 0.01;
/// Default ratio `dt·σ̄²_eff/dx²`.
pub const DEFAULT_CFL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub n_nodes: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(x_max > x_min) || !(dx > 0.0) {
            return Err(Error::config(format!(
                "spatial grid needs x_max > x_min and dx > 0, got [{x_min}, {x_max}] with dx={dx}"
            )));
        }
        let cells = (x_max - x_min) / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::config(format!(
                "(x_max - x_min)/dx must be an integer, got {cells}"
            )));
        }
        let n_nodes = rounded as usize + 1;
        if n_nodes < 5 {
            return Err(Error::config(format!(
                "spatial grid needs at least 5 nodes, got {n_nodes}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            dx,
            n_nodes,
        })
    }

    /// `[-half_width, half_width]`, with the half width rounded up to a
    /// multiple of `dx` so that `x = 0` is a node.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        let cells = (half_width / dx).ceil();
        Self::new(-cells * dx, cells * dx, dx)
    }

    /// Smallest symmetric grid (at least ±8) satisfying the domain rule
    /// `x_min ≤ −6σ̄√T − |x|` for the given effective variance.
    pub fn covering(horizon: f64, upper_variance: f64, x_eval: f64, dx: f64) -> Result<Self> {
        let need = 6.0 * (upper_variance * horizon).sqrt() + x_eval.abs() + 1.0;
        Self::symmetric(need.max(8.0), dx)
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |j| self.x(j))
    }

    /// True iff `x ± 6σ̄√T` stays inside the grid.
    pub fn covers(&self, horizon: f64, upper_variance: f64, x_eval: f64) -> bool {
        let reach = 6.0 * (upper_variance * horizon).sqrt();
        self.x_min <= x_eval - reach + 1e-12 && self.x_max >= x_eval + reach - 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time_stamp: f64,
}

impl GridFunction {
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self {
            grid,
            values,
            time_stamp: 0.0,
        }
    }

    /// Linear interpolation; constant extension beyond the edges.
    pub fn interpolate(&self, x: f64) -> f64 {
        let pos = (x - self.grid.x_min) / self.grid.dx;
        if pos <= 0.0 {
            return self.values[0];
        }
        let last = self.grid.n_nodes - 1;
        if pos >= last as f64 {
            return self.values[last];
        }
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        if frac == 0.0 {
            return self.values[j];
        }
        (1.0 - frac) * self.values[j] + frac * self.values[j + 1]
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Bounded Lipschitz initial data `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `|x| ∧ clamp`.
    ClampedAbs {
        clamp: f64,
    },
    /// `x² ∧ clamp`.
    ClampedSquare {
        clamp: f64,
    },
    /// `−(x² ∧ clamp)`.
    NegClampedSquare {
        clamp: f64,
    },
    /// `(x − strike)⁺ ∧ clamp`.
    ClampedCall {
        strike: f64,
        clamp: f64,
    },
    /// `(x ∨ −clamp) ∧ clamp`.
    ClampedLinear {
        clamp: f64,
    },
    /// `arctan(scale·x)`.
    ArctanScale {
        scale: f64,
    },
    /// `cos(freq·x)`.
    Cosine {
        freq: f64,
    },
    /// 1 on `[lo, hi]`, linear ramps of width `ramp` down to 0 outside.
    SmoothedIndicator {
        lo: f64,
        hi: f64,
        ramp: f64,
    },
    Constant {
        value: f64,
    },
}

impl TestFunction {
    pub const DEFAULT_ABS_CLAMP: f64 = 10.0;
    pub const DEFAULT_SQUARE_CLAMP: f64 = 100.0;

    pub fn clamped_abs() -> Self {
        TestFunction::ClampedAbs {
            clamp: Self::DEFAULT_ABS_CLAMP,
        }
    }

    pub fn clamped_square() -> Self {
        TestFunction::ClampedSquare {
            clamp: Self::DEFAULT_SQUARE_CLAMP,
        }
    }

    pub fn neg_clamped_square() -> Self {
        TestFunction::NegClampedSquare {
            clamp: Self::DEFAULT_SQUARE_CLAMP,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::ClampedAbs { clamp } => x.abs().min(clamp),
            TestFunction::ClampedSquare { clamp } => (x * x).min(clamp),
            TestFunction::NegClampedSquare { clamp } => -(x * x).min(clamp),
            TestFunction::ClampedCall { strike, clamp } => (x - strike).max(0.0).min(clamp),
            TestFunction::ClampedLinear { clamp } => x.max(-clamp).min(clamp),
            TestFunction::ArctanScale { scale } => (scale * x).atan(),
            TestFunction::Cosine { freq } => (freq * x).cos(),
            TestFunction::SmoothedIndicator { lo, hi, ramp } => {
                if x >= lo && x <= hi {
                    1.0
                } else {
                    let dist = if x < lo { lo - x } else { x - hi };
                    (1.0 - dist / ramp).max(0.0)
                }
            }
            TestFunction::Constant { value } => value,
        }
    }

    /// Lipschitz constant `C_φ`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            TestFunction::ClampedAbs { .. } | TestFunction::ClampedLinear { .. } => 1.0,
            TestFunction::ClampedSquare { clamp } | TestFunction::NegClampedSquare { clamp } => 2.0 * clamp.sqrt(),
            TestFunction::ClampedCall { .. } => 1.0,
            TestFunction::ArctanScale { scale } => scale.abs(),
            TestFunction::Cosine { freq } => freq.abs(),
            TestFunction::SmoothedIndicator { ramp, .. } => 1.0 / ramp,
            TestFunction::Constant { .. } => 0.0,
        }
    }

    /// `L` with `|φ| ≤ L`.
    pub fn bound(&self) -> f64 {
        match *self {
            TestFunction::ClampedAbs { clamp }
            | TestFunction::ClampedSquare { clamp }
            | TestFunction::NegClampedSquare { clamp }
            | TestFunction::ClampedCall { clamp, .. }
            | TestFunction::ClampedLinear { clamp } => clamp,
            TestFunction::ArctanScale { .. } => std::f64::consts::FRAC_PI_2,
            TestFunction::Cosine { .. } | TestFunction::SmoothedIndicator { .. } => 1.0,
            TestFunction::Constant { value } => value.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::ClampedAbs { clamp }
            | TestFunction::ClampedSquare { clamp }
            | TestFunction::NegClampedSquare { clamp }
            | TestFunction::ClampedLinear { clamp } => clamp > 0.0,
            TestFunction::ClampedCall { strike, clamp } => clamp > 0.0 && strike.is_finite(),
            TestFunction::ArctanScale { scale } => scale.is_finite(),
            TestFunction::Cosine { freq } => freq.is_finite(),
            TestFunction::SmoothedIndicator { lo, hi, ramp } => lo <= hi && ramp > 0.0,
            TestFunction::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::argument(format!("invalid test function parameters: {self}")))
        }
    }

    /// Checks `|φ(x) − φ(y)| ≤ C_φ|x − y|` and `|φ| ≤ L` on a probe grid.
    pub fn spot_check(&self) -> bool {
        let pts: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.0375).collect();
        let lip = self.lipschitz() * (1.0 + 1e-12) + 1e-12;
        let bound = self.bound() * (1.0 + 1e-12) + 1e-12;
        pts.iter().all(|&x| self.eval(x).abs() <= bound)
            && pts
                .windows(2)
                .all(|w| (self.eval(w[1]) - self.eval(w[0])).abs() <= lip * (w[1] - w[0]))
    }

    /// Six-function battery used by the lattice–PDE and Lévy checks.
    pub fn battery() -> Vec<TestFunction> {
        vec![
            TestFunction::clamped_square(),
            TestFunction::neg_clamped_square(),
            TestFunction::clamped_abs(),
            TestFunction::Cosine { freq: 1.0 },
            TestFunction::ArctanScale { scale: 1.0 },
            TestFunction::SmoothedIndicator {
                lo: -0.5,
                hi: 0.5,
                ramp: 0.25,
            },
        ]
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestFunction::ClampedAbs { clamp } => write!(f, "clamped_abs:{clamp}"),
            TestFunction::ClampedSquare { clamp } => write!(f, "clamped_square:{clamp}"),
            TestFunction::NegClampedSquare { clamp } => write!(f, "neg_clamped_square:{clamp}"),
            TestFunction::ClampedCall { strike, clamp } => write!(f, "clamped_call:{strike}:{clamp}"),
            TestFunction::ClampedLinear { clamp } => write!(f, "clamped_linear:{clamp}"),
            TestFunction::ArctanScale { scale } => write!(f, "arctan_scale:{scale}"),
            TestFunction::Cosine { freq } => write!(f, "cosine:{freq}"),
            TestFunction::SmoothedIndicator { lo, hi, ramp } => write!(f, "smoothed_indicator:{lo}:{hi}:{ramp}"),
            TestFunction::Constant { value } => write!(f, "constant:{value}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// `kind[:p1[:p2...]]`, e.g. `clamped_abs`, `cosine:2`,
    /// `smoothed_indicator:-0.5:0.5:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let params = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::argument(format!("bad numeric parameter '{p}' in '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let get = |i: usize, default: Option<f64>| -> Result<f64> {
            params
                .get(i)
                .copied()
                .or(default)
                .ok_or_else(|| Error::argument(format!("'{s}' is missing parameter {}", i + 1)))
        };
        let phi = match kind {
            "clamped_abs" | "abs" => TestFunction::ClampedAbs {
                clamp: get(0, Some(Self::DEFAULT_ABS_CLAMP))?,
            },
            "clamped_square" | "square" => TestFunction::ClampedSquare {
                clamp: get(0, Some(Self::DEFAULT_SQUARE_CLAMP))?,
            },
            "neg_clamped_square" | "neg_square" => TestFunction::NegClampedSquare {
                clamp: get(0, Some(Self::DEFAULT_SQUARE_CLAMP))?,
            },
            "clamped_call" | "call" => TestFunction::ClampedCall {
                strike: get(0, Some(0.0))?,
                clamp: get(1, Some(Self::DEFAULT_SQUARE_CLAMP))?,
            },
            "clamped_linear" | "linear" => TestFunction::ClampedLinear {
                clamp: get(0, Some(Self::DEFAULT_SQUARE_CLAMP))?,
            },
            "arctan_scale" | "arctan" => TestFunction::ArctanScale {
                scale: get(0, Some(1.0))?,
            },
            "cosine" | "cos" => TestFunction::Cosine {
                freq: get(0, Some(1.0))?,
            },
            "smoothed_indicator" | "indicator" => TestFunction::SmoothedIndicator {
                lo: get(0, None)?,
                hi: get(1, None)?,
                ramp: get(2, None)?,
            },
            "constant" => TestFunction::Constant { value: get(0, None)? },
            other => return Err(Error::argument(format!("unknown test function '{other}'"))),
        };
        phi.validate()?;
        Ok(phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub horizon: f64,
    /// Explicit time step; when absent the largest step with
    /// `dt·σ̄²_eff/dx² ≤ cfl_target` that divides the horizon is used.
    pub dt: Option<f64>,
    pub cfl_target: f64,
}

impl PdeConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            dt: None,
            cfl_target: DEFAULT_CFL,
        }
    }

    pub fn with_dt(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt: Some(dt),
            cfl_target: DEFAULT_CFL,
        }
    }

    /// Number of steps and the step size actually used.
    pub fn schedule(&self, upper_variance: f64, dx: f64) -> Result<(usize, f64)> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.horizon == 0.0 {
            return Ok((0, 0.0));
        }
        let limit = dx * dx / upper_variance;
        match self.dt {
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::config(format!("dt must be > 0, got {dt}")));
                }
                let steps = (self.horizon / dt - 1e-9).ceil().max(1.0) as usize;
                let used = self.horizon / steps as f64;
                if used * upper_variance / (dx * dx) > 1.0 + 1e-12 {
                    return Err(Error::config(format!(
                        "CFL violated: dt={dt} but dt <= dx^2/sigma_upper^2 = {limit} is required (dx={dx}, sigma_upper^2={upper_variance})"
                    )));
                }
                Ok((steps, used))
            }
            None => {
                if !(self.cfl_target > 0.0 && self.cfl_target <= 1.0) {
                    return Err(Error::config(format!(
                        "cfl_target must lie in (0, 1], got {}",
                        self.cfl_target
                    )));
                }
                let steps = (self.horizon / (self.cfl_target * limit)).ceil().max(1.0) as usize;
                Ok((steps, self.horizon / steps as f64))
            }
        }
    }
}

/// Advances `values` by `steps` explicit steps of size `dt`. `scratch` must
/// have the same length. Boundary nodes are left untouched.
pub(crate) fn march<H: Nonlinearity + ?Sized>(
    h: &H,
    values: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    dt: f64,
    dx: f64,
    steps: usize,
) {
    let n = values.len();
    let inv_dx2 = 1.0 / (dx * dx);
    scratch.copy_from_slice(values);
    for _ in 0..steps {
        for j in 1..n - 1 {
            let d2 = (values[j + 1] - 2.0 * values[j] + values[j - 1]) * inv_dx2;
            scratch[j] = values[j] + dt * h.eval(d2);
        }
        std::mem::swap(values, scratch);
    }
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("{what}: non-finite value at node {j}")));
    }
    Ok(())
}

/// Solves `∂_t u = H(∂²_xx u)`, `u(0) = φ`, up to `cfg.horizon`.
pub fn solve_with<H: Nonlinearity + ?Sized>(
    h: &H,
    phi: impl Fn(f64) -> f64,
    cfg: &PdeConfig,
    grid: &SpatialGrid,
) -> Result<GridFunction> {
    let (steps, dt) = cfg.schedule(h.effective_upper_variance(), grid.dx)?;
    let mut u = GridFunction::from_fn(*grid, phi);
    ensure_finite(&u.values, "initial data")?;
    let mut scratch = u.values.clone();
    // March in chunks so a blow-up is caught early.
    let chunk = 256;
    let mut done = 0;
    while done < steps {
        let k = chunk.min(steps - done);
        march(h, &mut u.values, &mut scratch, dt, grid.dx, k);
        done += k;
        ensure_finite(&u.values, "G-heat march")?;
    }
    u.time_stamp = steps as f64 * dt;
    Ok(u)
}

pub fn solve<H: Nonlinearity + ?Sized>(
    h: &H,
    phi: &TestFunction,
    cfg: &PdeConfig,
    grid: &SpatialGrid,
) -> Result<GridFunction> {
    solve_with(h, |x| phi.eval(x), cfg, grid)
}

/// Solutions at each of the increasing `times`, from one march. Each
/// segment between consecutive times gets its own CFL-limited step.
pub fn solve_at_times<H: Nonlinearity + ?Sized>(
    h: &H,
    phi: impl Fn(f64) -> f64,
    times: &[f64],
    grid: &SpatialGrid,
) -> Result<Vec<GridFunction>> {
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|t| !(*t >= 0.0)) {
        return Err(Error::argument("times must be nonnegative and strictly increasing"));
    }
    let mut u = GridFunction::from_fn(*grid, phi);
    ensure_finite(&u.values, "initial data")?;
    let mut scratch = u.values.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let (steps, dt) = PdeConfig::new(t - now).schedule(h.effective_upper_variance(), grid.dx)?;
        if t > now {
            march(h, &mut u.values, &mut scratch, dt, grid.dx, steps);
            ensure_finite(&u.values, "G-heat march")?;
        }
        now = t;
        u.time_stamp = t;
        out.push(u.clone());
    }
    Ok(out)
}

/// `Ê[φ(x + B_T)]` under the generator `h`, on a grid of step `dx` wide
/// enough for the evaluation point.
pub fn g_expectation<H: Nonlinearity + ?Sized>(
    h: &H,
    phi: &TestFunction,
    horizon: f64,
    x: f64,
    dx: f64,
) -> Result<f64> {
    let grid = SpatialGrid::covering(horizon, h.effective_upper_variance(), x, dx)?;
    let u = solve(h, phi, &PdeConfig::new(horizon), &grid)?;
    Ok(u.interpolate(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub eps: f64,
    /// `sup_x |u^ε(T,x) − u(T,x)|` over all nodes.
    pub gap: f64,
    /// `C_φ·√(2T/π)·ε`.
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    /// `sup_x |u^ε(T,x) − u^ε(T−h,x)|`.
    pub shift_gap: f64,
    /// `C_φ·√(2(σ̄²+1)/π)·√h`.
    pub shift_bound: f64,
    pub shift_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub phi: TestFunction,
    pub lipschitz: f64,
    pub horizon: f64,
    pub dx: f64,
    pub dt: f64,
    pub shift: f64,
    pub rows: Vec<PerturbationRow>,
}

impl PerturbationReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass && r.shift_pass)
    }
}

/// Solves with `G` and each `G_ε` on one grid and time step and compares the
/// sup-norm gap with `C_φ√(2T/π)ε + margin`. `lipschitz` overrides `C_φ`
/// (used to build negative controls).
pub fn compare_perturbed(
    generator: &SublinearGenerator,
    phi: &TestFunction,
    horizon: f64,
    eps_list: &[f64],
    dx: f64,
    margin: f64,
    lipschitz: Option<f64>,
) -> Result<PerturbationReport> {
    if let Some(e) = eps_list.iter().find(|e| !(**e >= 0.0 && **e < 1.0)) {
        return Err(Error::argument(format!("eps values must lie in [0, 1), got {e}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::argument(format!("horizon must be > 0, got {horizon}")));
    }
    let eps_max = eps_list.iter().cloned().fold(0.0, f64::max);
    let upper = generator.band.sigma_upper_sq() + eps_max * eps_max;
    let grid = SpatialGrid::covering(horizon, upper, 0.0, dx)?;
    let (steps, dt) = PdeConfig::new(horizon).schedule(upper, dx)?;
    let cfg = PdeConfig::with_dt(horizon, dt);
    // Shift ≈ 5% of the horizon, rounded to whole steps.
    let shift_steps = ((steps as f64) * 0.05).round().max(1.0) as usize;
    let shift = shift_steps as f64 * dt;
    let cfg_shift = PdeConfig::with_dt(horizon - shift, dt);

    let c_phi = lipschitz.unwrap_or_else(|| phi.lipschitz());
    let base = solve(generator, phi, &cfg, &grid)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let pert = generator.perturbed(eps)?;
        let u_eps = solve(&pert, phi, &cfg, &grid)?;
        let u_eps_early = solve(&pert, phi, &cfg_shift, &grid)?;
        let gap = u_eps.sup_distance(&base);
        let bound = c_phi * (2.0 * horizon / std::f64::consts::PI).sqrt() * eps;
        let shift_gap = u_eps.sup_distance(&u_eps_early);
        let shift_bound =
            c_phi * (2.0 * (generator.band.sigma_upper_sq() + 1.0) / std::f64::consts::PI).sqrt() * shift.sqrt();
        rows.push(PerturbationRow {
            eps,
            gap,
            bound,
            margin,
            pass: gap <= bound + margin,
            shift_gap,
            shift_bound,
            shift_pass: shift_gap <= shift_bound + margin,
        });
    }
    Ok(PerturbationReport {
        phi: *phi,
        lipschitz: c_phi,
        horizon,
        dx,
        dt,
        shift,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::VolatilityBand;
    use approx::assert_abs_diff_eq;

    fn g(lo: f64, hi: f64) -> SublinearGenerator {
        SublinearGenerator::new(VolatilityBand::new(lo, hi).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(SpatialGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(SpatialGrid::new(0.0, 0.3, 0.1).is_err());
        assert!(SpatialGrid::new(1.0, 0.0, 0.1).is_err());
        let grid = SpatialGrid::new(-8.0, 8.0, 0.01).unwrap();
        assert_eq!(grid.n_nodes, 1601);
        assert!(grid.covers(1.0, 1.0, 0.0));
        assert!(!grid.covers(4.0, 1.0, 0.0));
    }

    #[test]
    fn cfl_violation_is_config_error() {
        let cfg = PdeConfig::with_dt(1.0, 2e-4);
        let err = cfg.schedule(1.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("dx^2/sigma_upper^2"));
    }

    #[test]
    fn linear_data_is_stationary() {
        let grid = SpatialGrid::symmetric(8.0, 0.01).unwrap();
        let u = solve(
            &g(0.25, 1.0),
            &TestFunction::ClampedLinear { clamp: 100.0 },
            &PdeConfig::new(1.0),
            &grid,
        )
        .unwrap();
        assert_abs_diff_eq!(u.interpolate(0.0), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn constants_are_preserved() {
        let grid = SpatialGrid::symmetric(4.0, 0.05).unwrap();
        let u = solve(
            &g(0.25, 1.0),
            &TestFunction::Constant { value: 2.5 },
            &PdeConfig::new(1.0),
            &grid,
        )
        .unwrap();
        assert!(u.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn nan_initial_data_is_numerical_failure() {
        let grid = SpatialGrid::symmetric(2.0, 0.1).unwrap();
        let err = solve_with(
            &g(0.25, 1.0),
            |x| if x > 1.0 { f64::NAN } else { 0.0 },
            &PdeConfig::new(0.1),
            &grid,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn test_function_parsing() {
        assert_eq!(
            "clamped_abs".parse::<TestFunction>().unwrap(),
            TestFunction::clamped_abs()
        );
        assert_eq!(
            "cosine:2".parse::<TestFunction>().unwrap(),
            TestFunction::Cosine { freq: 2.0 }
        );
        assert!("smoothed_indicator:1".parse::<TestFunction>().is_err());
        assert!("nope".parse::<TestFunction>().is_err());
        for phi in TestFunction::battery() {
            assert_eq!(phi.to_string().parse::<TestFunction>().unwrap(), phi);
            assert!(phi.spot_check(), "{phi}");
        }
    }

    #[test]
    fn zero_eps_gives_zero_gap() {
        let rep = compare_perturbed(
            &g(0.0, 1.0),
            &TestFunction::clamped_abs(),
            0.5,
            &[0.0],
            0.02,
            0.04,
            None,
        )
        .unwrap();
        assert_eq!(rep.rows[0].gap, 0.0);
        assert!(compare_perturbed(
            &g(0.0, 1.0),
            &TestFunction::clamped_abs(),
            0.5,
            &[1.5],
            0.02,
            0.04,
            None
        )
        .is_err());
    }
}
