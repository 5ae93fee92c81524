//! Lévy characterization on the lattice: a candidate `M` is a G-Brownian
//! motion when it is a symmetric martingale, `½aM² − G(a)t` is a martingale,
//! and (as a consequence) its terminal law matches the G-heat equation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{tolerances, CheckReport};
use crate::generator::{SublinearGenerator, VolatilityBand};
use crate::gheat::{g_expectation, TestFunction, DEFAULT_DX};
use crate::lattice::state::Coordinate;
use crate::lattice::{dp_expectation, Increments, SigmaSet, TimePartition, TreeLattice};
use crate::{sgn, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyCandidate {
    /// `M = B`.
    GBrownian,
    /// `M = Σ sgn(B_{t_i})(B_{t_{i+1}} − B_{t_i})`.
    SgnIntegral,
    /// `M = B`, but wherever `B > 0` the upper volatility is replaced by
    /// `sigma` (outside the band).
    OutOfBand { sigma: f64 },
}

impl LevyCandidate {
    fn name(&self) -> String {
        match self {
            LevyCandidate::GBrownian => "g_brownian".into(),
            LevyCandidate::SgnIntegral => "sgn_integral".into(),
            LevyCandidate::OutOfBand { sigma } => format!("out_of_band(sigma={sigma})"),
        }
    }

    fn value(&self, path: &[f64]) -> f64 {
        match self {
            LevyCandidate::SgnIntegral => path.windows(2).map(|w| sgn(w[0]) * (w[1] - w[0])).sum(),
            _ => path[path.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyParams {
    pub band: VolatilityBand,
    pub horizon: f64,
    /// Steps of the history tree used for the nodewise identities.
    pub tree_steps: usize,
    pub a_values: Vec<f64>,
    /// Grid DP resolution and σ refinement for the G-BM distribution match.
    pub dist_steps: usize,
    pub sigma_levels: usize,
    /// Grid DP resolution for the `(B, M)` distribution match of the sgn
    /// integral (endpoint σ levels).
    pub sgn_dist_steps: usize,
    pub dx: f64,
    /// The out-of-band control replaces `σ̄` by this multiple of it.
    pub control_factor: f64,
    pub battery: Vec<TestFunction>,
}

impl Default for LevyParams {
    fn default() -> Self {
        Self {
            band: VolatilityBand::new(0.25, 1.0).expect("valid band"),
            horizon: 1.0,
            tree_steps: 6,
            a_values: vec![1.0, -1.0, 2.0, -2.0],
            dist_steps: 4096,
            sigma_levels: 5,
            sgn_dist_steps: 512,
            dx: DEFAULT_DX,
            control_factor: 1.2,
            battery: TestFunction::battery(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyOutcome {
    pub candidate: String,
    /// `max |Ê_i[±M_{i+1}] ∓ M_i|` over the nodes.
    pub martingale_error: f64,
    /// `max |Ê_i[aM²_{i+1} − aM²_i] − 2G(a)Δt|` per `a`.
    pub quadratic_error: Vec<(f64, f64)>,
    /// `max |Ê[aM_T²] − 2G(a)T|` per `a`, from the root.
    pub terminal_quadratic_error: Vec<(f64, f64)>,
    /// Nodes where the quadratic identity fails by at least the control
    /// threshold, and the smallest excess there in units of `|a|Δt`.
    pub flagged_nodes: usize,
    pub min_flagged_excess: Option<f64>,
    /// `(φ, lattice, pde)` triples, absent for the control.
    pub distribution: Vec<(String, f64, f64)>,
    pub distribution_gap: Option<f64>,
    pub pass: bool,
}

/// Nodewise identities of the candidate on a history tree with endpoint σ
/// levels and Rademacher increments.
pub fn nodewise_identities(candidate: LevyCandidate, params: &LevyParams) -> Result<LevyOutcome> {
    let generator = SublinearGenerator::new(params.band);
    let partition = TimePartition::uniform(params.horizon, params.tree_steps)?;
    let dt = partition.uniform_dt()?;
    let mut tree = TreeLattice::new(partition, SigmaSet::endpoints(&params.band), Increments::rademacher())?;
    if let LevyCandidate::OutOfBand { sigma } = candidate {
        let lo = params.band.sigma_lower();
        tree = tree.with_level_override(Arc::new(move |_, path: &[f64]| {
            (path[path.len() - 1] > 0.0).then(|| vec![lo, sigma])
        }));
    }
    let m = |p: &[f64]| candidate.value(p);

    let mut martingale_error: f64 = 0.0;
    let mut quad: Vec<f64> = vec![0.0; params.a_values.len()];
    let mut flagged = 0;
    let mut min_excess: Option<f64> = None;
    for i in 0..params.tree_steps {
        for path in tree.paths_at(i) {
            let m_i = m(&path);
            let (up, _) = tree.one_step_at(&path, &|p| m(p));
            let (down, _) = tree.one_step_at(&path, &|p| -m(p));
            martingale_error = martingale_error.max((up - m_i).abs()).max((down + m_i).abs());
            let mut node_flagged = false;
            for (k, &a) in params.a_values.iter().enumerate() {
                let (v, _) = tree.one_step_at(&path, &|p| {
                    let x = m(p);
                    a * x * x - a * m_i * m_i
                });
                let err = (v - 2.0 * generator.eval_g(a) * dt).abs();
                quad[k] = quad[k].max(err);
                let excess = err / (a.abs() * dt);
                if excess >= tolerances::LEVY_CONTROL_EXCESS {
                    node_flagged = true;
                    min_excess = Some(min_excess.map_or(excess, |e: f64| e.min(excess)));
                }
            }
            if node_flagged {
                flagged += 1;
            }
        }
    }
    let terminal: Vec<(f64, f64)> = params
        .a_values
        .iter()
        .map(|&a| {
            let v = tree.expectation(&|p| {
                let x = m(p);
                a * x * x
            });
            (a, (v - 2.0 * generator.eval_g(a) * params.horizon).abs())
        })
        .collect();
    let quadratic_error: Vec<(f64, f64)> = params.a_values.iter().cloned().zip(quad).collect();
    let exact_ok = martingale_error <= tolerances::NODEWISE
        && quadratic_error
            .iter()
            .chain(&terminal)
            .all(|(_, e)| *e <= tolerances::NODEWISE);
    Ok(LevyOutcome {
        candidate: candidate.name(),
        martingale_error,
        quadratic_error,
        terminal_quadratic_error: terminal,
        flagged_nodes: flagged,
        min_flagged_excess: min_excess,
        distribution: Vec::new(),
        distribution_gap: None,
        pass: exact_ok,
    })
}

/// `Ê[φ(M_T)]` on the grid DP for each battery function.
pub fn lattice_distribution(candidate: LevyCandidate, params: &LevyParams) -> Result<Vec<f64>> {
    let (coords, steps, sigmas, slot) = match candidate {
        LevyCandidate::SgnIntegral => (
            vec![Coordinate::Base, Coordinate::SgnIntegral],
            params.sgn_dist_steps,
            SigmaSet::endpoints(&params.band),
            1,
        ),
        _ => (
            vec![Coordinate::Base],
            params.dist_steps,
            SigmaSet::refined(&params.band, params.sigma_levels),
            0,
        ),
    };
    let partition = TimePartition::uniform(params.horizon, steps)?;
    let inc = Increments::rademacher();
    params
        .battery
        .iter()
        .map(|phi| {
            let phi = *phi;
            dp_expectation(
                coords.clone(),
                &move |x: &[f64]| phi.eval(x[slot]),
                &partition,
                &sigmas,
                &inc,
            )
            .map(|r| r.value)
        })
        .collect()
}

pub fn levy_characterization_report(params: &LevyParams) -> Result<CheckReport> {
    let (mut report, clock) = CheckReport::start("levy", params);
    let generator = SublinearGenerator::new(params.band);
    let pde: Vec<f64> = params
        .battery
        .iter()
        .map(|phi| g_expectation(&generator, phi, params.horizon, 0.0, params.dx))
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::new();
    for candidate in [LevyCandidate::GBrownian, LevyCandidate::SgnIntegral] {
        let mut out = nodewise_identities(candidate, params)?;
        let lattice = lattice_distribution(candidate, params)?;
        out.distribution = params
            .battery
            .iter()
            .zip(lattice.iter().zip(&pde))
            .map(|(phi, (l, p))| (phi.to_string(), *l, *p))
            .collect();
        let gap = out
            .distribution
            .iter()
            .map(|(_, l, p)| (l - p).abs())
            .fold(0.0, f64::max);
        out.distribution_gap = Some(gap);
        out.pass = out.pass && gap <= tolerances::LEVY_DISTRIBUTION;
        outcomes.push(out);
    }

    let control = nodewise_identities(
        LevyCandidate::OutOfBand {
            sigma: params.control_factor * params.band.sigma_upper(),
        },
        params,
    )?;
    report.control(
        "out_of_band_sigma",
        !control.pass && control.flagged_nodes > 0,
        format!(
            "{} nodes violate the quadratic identity by >= {}·|a|·dt (smallest excess {:?})",
            control.flagged_nodes,
            tolerances::LEVY_CONTROL_EXCESS,
            control.min_flagged_excess
        ),
    );
    let main_pass = outcomes.iter().all(|o| o.pass);
    report.measured = json!({ "candidates": outcomes, "control": control });
    report.bound = json!({ "quadratic_increment": "2G(a)·dt", "martingale_increment": 0.0 });
    report.tol = json!({
        "nodewise": tolerances::NODEWISE,
        "distribution": tolerances::LEVY_DISTRIBUTION,
        "control_excess": tolerances::LEVY_CONTROL_EXCESS,
    });
    report
        .notes
        .push("second moment of an increment over [t, t+s] is checked as sigma_upper^2·s".into());
    Ok(report.finish(main_pass, clock))
}
