//! Reflection principle: `(S − B, S)` and `(|B|, L(0))` have the same law
//! under the G-expectation and under any dominated `Ê^{G̃}`.
//!
//! Both sides run on reduced coordinates with exact one-step updates:
//! `Y = S − B` (with `S` carried alongside) on the left, `R = |B|` (with the
//! Tanaka local time carried alongside) on the right.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{joint_battery, one_arg_battery, tolerances, CheckReport};
use crate::generator::{DominatedGenerator, VolatilityBand};
use crate::lattice::state::Coordinate;
use crate::lattice::Retention;
use crate::lattice::{dp_expectation, Increments, SigmaSet, TildeModel, TimePartition};
use crate::quadrature::{normal_expectation, reflected_joint_expectation};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionParams {
    pub band: VolatilityBand,
    pub horizon: f64,
    /// Self-convergence ladder for the one-argument battery; the last entry
    /// is the acceptance resolution.
    pub steps: Vec<usize>,
    pub joint_steps: Vec<usize>,
    /// Resolution of the classical (degenerate band) comparison.
    pub degenerate_steps: usize,
    /// The negative control computes the right side with `σ̄²` scaled by
    /// this factor.
    pub control_factor: f64,
}

impl Default for ReflectionParams {
    fn default() -> Self {
        Self {
            band: VolatilityBand::new(0.25, 1.0).expect("valid band"),
            horizon: 1.0,
            steps: vec![256, 512, 1024],
            joint_steps: vec![256, 1024],
            degenerate_steps: 4096,
            control_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub phi: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub steps: usize,
    pub max_gap: f64,
    pub rows: Vec<BatteryRow>,
}

fn row(phi: &str, lhs: f64, rhs: f64) -> BatteryRow {
    BatteryRow {
        phi: phi.to_string(),
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    }
}

fn max_gap(rows: &[BatteryRow]) -> f64 {
    rows.iter().map(|r| r.gap).fold(0.0, f64::max)
}

/// `Ê[φ(S_T − B_T)]` and `Ê[φ(|B_T|)]` for the one-argument battery; the
/// right side may use a different band.
pub fn one_arg_gaps(
    lhs_band: &VolatilityBand,
    rhs_band: &VolatilityBand,
    horizon: f64,
    steps: usize,
) -> Result<Vec<BatteryRow>> {
    let partition = TimePartition::uniform(horizon, steps)?;
    let inc = Increments::rademacher();
    let (ls, rs) = (SigmaSet::endpoints(lhs_band), SigmaSet::endpoints(rhs_band));
    one_arg_battery()
        .into_iter()
        .map(|(name, f)| {
            let lhs = dp_expectation(vec![Coordinate::Drawdown], &|x: &[f64]| f(x[0]), &partition, &ls, &inc)?.value;
            let rhs = dp_expectation(vec![Coordinate::Reflected], &|x: &[f64]| f(x[0]), &partition, &rs, &inc)?.value;
            Ok(row(name, lhs, rhs))
        })
        .collect()
}

/// `Ê[φ(S_T − B_T, S_T)]` and `Ê[φ(|B_T|, L_T(0))]` for the joint battery.
pub fn joint_gaps(band: &VolatilityBand, horizon: f64, steps: usize) -> Result<Vec<BatteryRow>> {
    let partition = TimePartition::uniform(horizon, steps)?;
    let inc = Increments::rademacher();
    let sigmas = SigmaSet::endpoints(band);
    joint_battery()
        .into_iter()
        .map(|(name, f)| {
            let lhs = dp_expectation(
                vec![Coordinate::Drawdown, Coordinate::DrawdownMax],
                &|x: &[f64]| f(x[0], x[1]),
                &partition,
                &sigmas,
                &inc,
            )?
            .value;
            let rhs = dp_expectation(
                vec![Coordinate::Reflected, Coordinate::ReflectedLocalTime],
                &|x: &[f64]| f(x[0], x[1]),
                &partition,
                &sigmas,
                &inc,
            )?
            .value;
            Ok(row(name, lhs, rhs))
        })
        .collect()
}

pub fn reflection_report(params: &ReflectionParams) -> Result<CheckReport> {
    let (mut report, clock) = CheckReport::start("reflection", params);
    let band = params.band;

    let mut ladder = Vec::new();
    for &n in &params.steps {
        let rows = one_arg_gaps(&band, &band, params.horizon, n)?;
        ladder.push(LadderRow {
            steps: n,
            max_gap: max_gap(&rows),
            rows,
        });
    }
    let finest = ladder.last().map_or(f64::INFINITY, |r| r.max_gap);
    let nonincreasing = ladder.windows(2).all(|w| w[1].max_gap <= w[0].max_gap);

    let mut joint = Vec::new();
    for &n in &params.joint_steps {
        let rows = joint_gaps(&band, params.horizon, n)?;
        joint.push(LadderRow {
            steps: n,
            max_gap: max_gap(&rows),
            rows,
        });
    }
    let joint_finest = joint.last().map_or(f64::INFINITY, |r| r.max_gap);

    // Constants pass through both recursions unchanged.
    let coarse = TimePartition::uniform(params.horizon, params.steps[0])?;
    let sigmas = SigmaSet::endpoints(&band);
    let inc = Increments::rademacher();
    let c = 0.7;
    let const_lhs = dp_expectation(
        vec![Coordinate::Drawdown, Coordinate::DrawdownMax],
        &|_| c,
        &coarse,
        &sigmas,
        &inc,
    )?
    .value;
    let const_rhs = dp_expectation(
        vec![Coordinate::Reflected, Coordinate::ReflectedLocalTime],
        &|_| c,
        &coarse,
        &sigmas,
        &inc,
    )?
    .value;
    let const_ok = const_lhs == c && const_rhs == c;

    // Classical reflection principle against quadrature.
    let degenerate = VolatilityBand::degenerate(band.sigma_upper_sq())?;
    let sigma = degenerate.sigma_upper();
    let mut closed = Vec::new();
    let n = params.degenerate_steps;
    for r in one_arg_gaps(&degenerate, &degenerate, params.horizon, n)? {
        let f = one_arg_battery()
            .into_iter()
            .find(|(name, _)| *name == r.phi)
            .expect("battery entry")
            .1;
        let exact = normal_expectation(|x| f(x.abs()), sigma, params.horizon);
        closed.push(json!({ "phi": r.phi, "lhs": r.lhs, "rhs": r.rhs, "closed_form": exact,
            "gap": (r.lhs - exact).abs().max((r.rhs - exact).abs()) }));
    }
    let (jname, jf) = joint_battery()[0];
    let jrow = &joint_gaps(&degenerate, params.horizon, n)?[0];
    let jexact = reflected_joint_expectation(jf, sigma, params.horizon);
    closed.push(
        json!({ "phi": jname, "lhs": jrow.lhs, "rhs": jrow.rhs, "closed_form": jexact,
        "gap": (jrow.lhs - jexact).abs().max((jrow.rhs - jexact).abs()) }),
    );
    let closed_gap = closed
        .iter()
        .map(|v| v["gap"].as_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);

    // Control: the right side computed under a wider band.
    let wide = VolatilityBand::new(band.sigma_lower_sq(), params.control_factor * band.sigma_upper_sq())?;
    let control_rows = one_arg_gaps(&band, &wide, params.horizon, params.steps[0])?;
    let control_gap = max_gap(&control_rows);
    report.control(
        "mismatched_band",
        control_gap > tolerances::REFLECTION_ONE,
        format!(
            "right side under sigma_upper^2 = {}: max gap {control_gap:.4}",
            wide.sigma_upper_sq()
        ),
    );

    let main_pass = finest <= tolerances::REFLECTION_ONE
        && nonincreasing
        && joint_finest <= tolerances::REFLECTION_JOINT
        && const_ok
        && closed_gap <= tolerances::REFLECTION_CLOSED;
    report.measured = json!({
        "one_arg": ladder,
        "one_arg_max_gap": finest,
        "nonincreasing": nonincreasing,
        "joint": joint,
        "joint_max_gap": joint_finest,
        "constant": { "value": c, "lhs": const_lhs, "rhs": const_rhs },
        "degenerate": closed,
        "degenerate_max_gap": closed_gap,
    });
    report.bound = json!({ "gap": 0.0 });
    report.tol = json!({
        "one_arg": tolerances::REFLECTION_ONE,
        "joint": tolerances::REFLECTION_JOINT,
        "closed_form": tolerances::REFLECTION_CLOSED,
    });
    Ok(report.finish(main_pass, clock))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeReflectionParams {
    pub generator: DominatedGenerator,
    pub horizon: f64,
    pub steps: usize,
    /// The negative control uses the linear generator `½κσ̄²a` with this
    /// factor `κ`.
    pub control_factor: f64,
}

impl Default for TildeReflectionParams {
    fn default() -> Self {
        let band = VolatilityBand::new(0.25, 1.0).expect("valid band");
        Self {
            generator: DominatedGenerator::default_three_segment(band).expect("valid generator"),
            horizon: 1.0,
            steps: 256,
            control_factor: 2.0,
        }
    }
}

fn tilde_value(
    g: &DominatedGenerator,
    coords: Vec<Coordinate>,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: &TimePartition,
) -> Result<f64> {
    Ok(TildeModel::new(p.clone(), g.clone(), coords)?
        .solve(f, Retention::Final)?
        .value)
}

pub fn reflection_tilde_report(params: &TildeReflectionParams) -> Result<CheckReport> {
    let (mut report, clock) = CheckReport::start("reflection_tilde", params);
    let g = &params.generator;
    let band = g.band();
    let check = g.check_domination(&crate::generator::default_probe_pairs())?;
    if !check.dominated {
        return Ok(report.skip(format!("generator is not dominated: {:?}", check.violation), clock));
    }
    let partition = TimePartition::uniform(params.horizon, params.steps)?;

    let mut rows = Vec::new();
    for (name, f) in one_arg_battery() {
        let lhs = tilde_value(g, vec![Coordinate::Drawdown], &|x| f(x[0]), &partition)?;
        let rhs = tilde_value(g, vec![Coordinate::Reflected], &|x| f(x[0]), &partition)?;
        rows.push(row(name, lhs, rhs));
    }
    let gap = max_gap(&rows);

    // With G̃ = G the nested engine must agree with the grid DP.
    let g_as_tilde = crate::generator::SublinearGenerator::new(band).as_dominated();
    let sigmas = SigmaSet::endpoints(&band);
    let inc = Increments::rademacher();
    let mut engine_rows = Vec::new();
    for (name, f) in one_arg_battery() {
        let nested = tilde_value(&g_as_tilde, vec![Coordinate::Drawdown], &|x| f(x[0]), &partition)?;
        let dp = dp_expectation(
            vec![Coordinate::Drawdown],
            &|x: &[f64]| f(x[0]),
            &partition,
            &sigmas,
            &inc,
        )?
        .value;
        engine_rows.push(row(name, nested, dp));
    }
    let engine_gap = max_gap(&engine_rows);

    // Domination carries over to the scheme: Ê^G̃[X] − Ê^G̃[Y] ≤ Ê^G[X − Y].
    let battery = one_arg_battery();
    let mut transfer_excess: f64 = f64::NEG_INFINITY;
    for pair in battery.windows(2) {
        let (fx, fy) = (pair[0].1, pair[1].1);
        let x = tilde_value(g, vec![Coordinate::Reflected], &|s| fx(s[0]), &partition)?;
        let y = tilde_value(g, vec![Coordinate::Reflected], &|s| fy(s[0]), &partition)?;
        let d = tilde_value(
            &g_as_tilde,
            vec![Coordinate::Reflected],
            &|s| fx(s[0]) - fy(s[0]),
            &partition,
        )?;
        transfer_excess = transfer_excess.max(x - y - d);
    }

    let wide = VolatilityBand::new(band.sigma_lower_sq(), params.control_factor * band.sigma_upper_sq())?;
    let slope = wide.sigma_upper_sq() / 2.0;
    let wrong = DominatedGenerator::new(vec![], vec![slope], wide)?;
    let mut control_gap: f64 = 0.0;
    for (r, (_, f)) in rows.iter().zip(one_arg_battery()) {
        let rhs = tilde_value(&wrong, vec![Coordinate::Reflected], &|x| f(x[0]), &partition)?;
        control_gap = control_gap.max((r.lhs - rhs).abs());
    }
    report.control(
        "mismatched_generator",
        control_gap > tolerances::REFLECTION_TILDE,
        format!("right side under a linear generator of slope {slope}: max gap {control_gap:.4}"),
    );

    let main_pass = gap <= tolerances::REFLECTION_TILDE
        && engine_gap <= tolerances::TILDE_VS_G
        && transfer_excess <= tolerances::NODEWISE;
    report.measured = json!({
        "rows": rows,
        "max_gap": gap,
        "engine_vs_dp": engine_rows,
        "engine_vs_dp_max_gap": engine_gap,
        "domination_transfer_excess": transfer_excess,
    });
    report.bound = json!({ "gap": 0.0, "domination_transfer_excess": 0.0 });
    report.tol = json!({
        "gap": tolerances::REFLECTION_TILDE,
        "engine_vs_dp": tolerances::TILDE_VS_G,
        "domination_transfer": tolerances::NODEWISE,
    });
    Ok(report.finish(main_pass, clock))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_one_arg_gap_is_small() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let rows = one_arg_gaps(&band, &band, 1.0, 128).unwrap();
        assert!(max_gap(&rows) < 0.05, "{rows:?}");
    }

    #[test]
    fn mismatched_band_is_visible() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let wide = VolatilityBand::new(0.25, 2.0).unwrap();
        let rows = one_arg_gaps(&band, &wide, 1.0, 64).unwrap();
        assert!(max_gap(&rows) > 0.05);
    }
}
