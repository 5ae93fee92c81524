//! Perturbation of the generator by `½ε²a` moves the G-heat solution by at
//! most `C_φ√(2T/π)ε`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{tolerances, CheckReport};
use crate::generator::{SublinearGenerator, VolatilityBand};
use crate::gheat::{compare_perturbed, TestFunction, DEFAULT_DX};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub band: VolatilityBand,
    pub phi: TestFunction,
    pub horizon: f64,
    pub eps: Vec<f64>,
    pub dx: f64,
    /// The control understates `C_φ` by this factor.
    pub control_factor: f64,
}

impl Default for PerturbationParams {
    fn default() -> Self {
        Self {
            band: VolatilityBand::new(0.25, 1.0).expect("valid band"),
            phi: TestFunction::clamped_abs(),
            horizon: 1.0,
            eps: vec![0.1, 0.2, 0.4],
            dx: DEFAULT_DX,
            control_factor: 0.05,
        }
    }
}

pub fn perturbation_report(params: &PerturbationParams) -> Result<CheckReport> {
    let (mut report, clock) = CheckReport::start("perturbation", params);
    let generator = SublinearGenerator::new(params.band);
    let margin = tolerances::PERTURBATION_DX_MULTIPLE * params.dx;
    let run = compare_perturbed(
        &generator,
        &params.phi,
        params.horizon,
        &params.eps,
        params.dx,
        margin,
        None,
    )?;

    let understated = params.phi.lipschitz() * params.control_factor;
    let control = compare_perturbed(
        &generator,
        &params.phi,
        params.horizon,
        &params.eps,
        params.dx,
        margin,
        Some(understated),
    )?;
    let worst = control
        .rows
        .iter()
        .map(|r| r.gap - r.bound - r.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    report.control(
        "understated_lipschitz",
        control.rows.iter().any(|r| !r.pass),
        format!("C_phi = {understated}: worst excess {worst:.4}"),
    );

    report.bound = json!(run
        .rows
        .iter()
        .map(|r| json!({ "eps": r.eps, "bound": r.bound, "shift_bound": r.shift_bound }))
        .collect::<Vec<_>>());
    report.tol = json!({ "margin": margin, "dx_multiple": tolerances::PERTURBATION_DX_MULTIPLE });
    let main_pass = run.pass();
    report.measured = serde_json::to_value(&run)?;
    Ok(report.finish(main_pass, clock))
}
