//! Krylov estimate `Ê[Σ |g(B_i)|(ΔB_i)²] ≤ C‖g‖_p` with
//! `C = (σ̄²T)^{(p−1)/p}(σ̄√(2T/π))^{1/p}`, checked by Monte Carlo over a
//! policy family that includes the DP-optimal policy for each `g`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{tolerances, CheckReport};
use crate::envelope::{extract_policy, mc_estimate_many, ControlPolicy, EstimateWithError};
use crate::generator::VolatilityBand;
use crate::lattice::state::Coordinate;
use crate::lattice::{DpModel, Increments, Retention, SigmaSet, TimePartition};
use crate::pathspace::SamplePath;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KrylovG {
    /// Indicator of `(−half_width, half_width)`.
    Indicator {
        half_width: f64,
        p: f64,
    },
    /// `min(|x|^{−exponent}, cap)` on `[−support, support]`, 0 outside.
    TruncatedPower {
        exponent: f64,
        cap: f64,
        support: f64,
        p: f64,
    },
    /// `1/(1 + x²)`.
    Cauchy {
        p: f64,
    },
    Zero {
        p: f64,
    },
}

impl fmt::Display for KrylovG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KrylovG::Indicator { half_width, p } => write!(f, "indicator(|x|<{half_width}), p={p}"),
            KrylovG::TruncatedPower {
                exponent,
                cap,
                support,
                p,
            } => {
                write!(f, "min(|x|^-{exponent},{cap}) on [-{support},{support}], p={p}")
            }
            KrylovG::Cauchy { p } => write!(f, "1/(1+x^2), p={p}"),
            KrylovG::Zero { p } => write!(f, "0, p={p}"),
        }
    }
}

impl KrylovG {
    pub fn battery() -> Vec<KrylovG> {
        vec![
            KrylovG::Indicator {
                half_width: 0.1,
                p: 2.0,
            },
            KrylovG::TruncatedPower {
                exponent: 0.25,
                cap: 10.0,
                support: 1.0,
                p: 2.0,
            },
            KrylovG::Cauchy { p: 1.0 },
        ]
    }

    pub fn p(&self) -> f64 {
        match *self {
            KrylovG::Indicator { p, .. }
            | KrylovG::TruncatedPower { p, .. }
            | KrylovG::Cauchy { p }
            | KrylovG::Zero { p } => p,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            KrylovG::Indicator { half_width, .. } => {
                if x.abs() < half_width {
                    1.0
                } else {
                    0.0
                }
            }
            KrylovG::TruncatedPower {
                exponent, cap, support, ..
            } => {
                if x.abs() <= support {
                    x.abs().powf(-exponent).min(cap)
                } else {
                    0.0
                }
            }
            KrylovG::Cauchy { .. } => 1.0 / (1.0 + x * x),
            KrylovG::Zero { .. } => 0.0,
        }
    }

    /// `∫|g|^p dx` in closed form.
    pub fn lp_integral(&self) -> Result<f64> {
        let p = self.p();
        if !(p >= 1.0) {
            return Err(Error::argument(format!("p must be >= 1, got {p}")));
        }
        match *self {
            KrylovG::Indicator { half_width, .. } => Ok(2.0 * half_width),
            KrylovG::TruncatedPower {
                exponent, cap, support, ..
            } => {
                // |x|^{−e} ≥ cap on |x| ≤ x0 = cap^{−1/e}.
                let q = exponent * p;
                let x0 = cap.powf(-1.0 / exponent).min(support);
                if q >= 1.0 && x0 <= 0.0 {
                    return Err(Error::argument(format!("{self} is not in L^{p}")));
                }
                let tail = if (q - 1.0).abs() < 1e-12 {
                    (support / x0).ln()
                } else {
                    (support.powf(1.0 - q) - x0.powf(1.0 - q)) / (1.0 - q)
                };
                Ok(2.0 * (cap.powf(p) * x0 + tail))
            }
            KrylovG::Cauchy { .. } => {
                if (p - 1.0).abs() < 1e-12 {
                    Ok(PI)
                } else if (p - 2.0).abs() < 1e-12 {
                    Ok(PI / 2.0)
                } else {
                    Err(Error::argument(format!("no closed form for ∫(1+x²)^-p with p={p}")))
                }
            }
            KrylovG::Zero { .. } => Ok(0.0),
        }
    }
}

/// `C = (σ̄²T)^{(p−1)/p}·(σ̄√(2T/π))^{1/p}`.
pub fn krylov_constant(band: &VolatilityBand, horizon: f64, p: f64) -> f64 {
    let qv = band.sigma_upper_sq() * horizon;
    let abs = band.sigma_upper() * (2.0 * horizon / PI).sqrt();
    qv.powf((p - 1.0) / p) * abs.powf(1.0 / p)
}

/// `Σ |g(B_i)|(ΔB_i)²` along a path.
pub fn weighted_qv(g: &KrylovG, path: &SamplePath) -> f64 {
    path.values
        .windows(2)
        .map(|w| g.eval(w[0]).abs() * (w[1] - w[0]).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovParams {
    pub band: VolatilityBand,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub battery: Vec<KrylovG>,
    /// `|B|` threshold of the bang-bang member of the family.
    pub bang_bang_threshold: f64,
    /// The negative-control policy runs at this multiple of `σ̄`, simulated
    /// in a band widened to contain it.
    pub control_factor: f64,
}

impl Default for KrylovParams {
    fn default() -> Self {
        Self {
            band: VolatilityBand::new(0.25, 1.0).expect("valid band"),
            horizon: 1.0,
            steps: 256,
            paths: 100_000,
            seed: 20_240_601,
            battery: KrylovG::battery(),
            bang_bang_threshold: 0.3,
            control_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KrylovRow {
    pub g: String,
    pub p: f64,
    pub lp_integral: f64,
    pub bound: f64,
    pub dp_value: f64,
    pub per_policy: Vec<(String, EstimateWithError)>,
    pub best: EstimateWithError,
    pub pass: bool,
}

pub fn krylov_report(params: &KrylovParams) -> Result<CheckReport> {
    let (mut report, clock) = CheckReport::start("krylov", params);
    report.seed = Some(params.seed);
    let band = params.band;
    let partition = TimePartition::uniform(params.horizon, params.steps)?;
    let inc = Increments::rademacher();

    let fixed: Vec<(String, ControlPolicy)> = vec![
        (
            "const_lower".into(),
            ControlPolicy::Constant {
                sigma: band.sigma_lower(),
            },
        ),
        (
            "const_upper".into(),
            ControlPolicy::Constant {
                sigma: band.sigma_upper(),
            },
        ),
        (
            "bang_bang".into(),
            ControlPolicy::BangBang {
                threshold: params.bang_bang_threshold,
                inside: band.sigma_upper(),
                outside: band.sigma_lower(),
            },
        ),
    ];
    let gs = &params.battery;
    let functionals: Vec<Box<dyn Fn(&SamplePath) -> f64 + Sync>> = gs
        .iter()
        .map(|g| {
            let g = *g;
            Box::new(move |p: &SamplePath| weighted_qv(&g, p)) as Box<dyn Fn(&SamplePath) -> f64 + Sync>
        })
        .collect();
    let refs: Vec<&(dyn Fn(&SamplePath) -> f64 + Sync)> = functionals.iter().map(|b| b.as_ref()).collect();
    // Fixed policies: one pass over the paths for the whole battery.
    let mut fixed_estimates = Vec::new();
    for (name, policy) in &fixed {
        let est = mc_estimate_many(&refs, policy, band, &partition, &inc, params.paths, params.seed)?;
        fixed_estimates.push((name.clone(), est));
    }

    let model = DpModel::new(
        partition.clone(),
        SigmaSet::endpoints(&band),
        inc.clone(),
        vec![Coordinate::Base],
    )?;
    let mut rows = Vec::new();
    for (k, g) in gs.iter().enumerate() {
        let reward = |x: &[f64], d: f64| g.eval(x[0]).abs() * d * d;
        let dp = model.solve_with_reward(&|_| 0.0, Some(&reward), Retention::Policy)?;
        let optimal = extract_policy(&dp)?;
        let opt_est = mc_estimate_many(&[refs[k]], &optimal, band, &partition, &inc, params.paths, params.seed)?[0];
        let mut per_policy: Vec<(String, EstimateWithError)> =
            fixed_estimates.iter().map(|(n, e)| (n.clone(), e[k])).collect();
        per_policy.push(("dp_optimal".into(), opt_est));
        let best = per_policy
            .iter()
            .map(|(_, e)| *e)
            .fold(per_policy[0].1, |a, e| if e.value > a.value { e } else { a });
        let integral = g.lp_integral()?;
        let bound = krylov_constant(&band, params.horizon, g.p()) * integral.powf(1.0 / g.p());
        rows.push(KrylovRow {
            g: g.to_string(),
            p: g.p(),
            lp_integral: integral,
            bound,
            dp_value: dp.value,
            per_policy,
            best,
            pass: best.value <= bound + tolerances::STDERR_MULTIPLE * best.stderr,
        });
    }

    // Control: a volatility far above the band piles quadratic variation
    // onto the support of g.
    let control_g = gs[0];
    let control_sigma = params.control_factor * band.sigma_upper();
    let wide = VolatilityBand::new(band.sigma_lower_sq(), control_sigma.powi(2))?;
    let control_policy = ControlPolicy::Constant { sigma: control_sigma };
    let control_paths = (params.paths / 10).max(1000);
    let control = mc_estimate_many(
        &[&|p: &SamplePath| weighted_qv(&control_g, p)],
        &control_policy,
        wide,
        &partition,
        &inc,
        control_paths,
        params.seed,
    )?[0];
    let control_bound =
        krylov_constant(&band, params.horizon, control_g.p()) * control_g.lp_integral()?.powf(1.0 / control_g.p());
    report.control(
        "out_of_band_sigma",
        control.lower() > control_bound,
        format!(
            "sigma={} on {control_g}: {:.4} ± {:.4} vs nominal bound {control_bound:.4}",
            control_sigma, control.value, control.stderr
        ),
    );

    let main_pass = rows.iter().all(|r| r.pass);
    report.bound = json!(rows.iter().map(|r| (r.g.clone(), r.bound)).collect::<Vec<_>>());
    report.measured = json!({ "rows": rows });
    report.tol = json!({ "stderr_multiple": tolerances::STDERR_MULTIPLE });
    Ok(report.finish(main_pass, clock))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constants() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let c = krylov_constant(&band, 1.0, 2.0);
        assert_abs_diff_eq!(c, (2.0 / PI).sqrt().sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(krylov_constant(&band, 1.0, 1.0), (2.0 / PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn integrals() {
        let g = KrylovG::battery();
        assert_abs_diff_eq!(g[0].lp_integral().unwrap(), 0.2, epsilon = 1e-15);
        // 2·(100·1e−4 + 2·(1 − 0.01)).
        assert_abs_diff_eq!(g[1].lp_integral().unwrap(), 3.98, epsilon = 1e-12);
        assert_abs_diff_eq!(g[2].lp_integral().unwrap(), PI, epsilon = 1e-15);
        let bad = KrylovG::TruncatedPower {
            exponent: 0.5,
            cap: f64::INFINITY,
            support: 1.0,
            p: 2.0,
        };
        assert!(bad.lp_integral().is_err());
    }
}
