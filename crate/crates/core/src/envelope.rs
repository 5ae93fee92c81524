//! Monte Carlo lower bounds for `Ê` under explicit volatility policies.
//!
//! Every adapted policy induces one probability measure, so its expectation
//! is a lower bound for the sublinear expectation. Maximizing over a family
//! and comparing with the lattice DP value gives a two-sided sandwich.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::generator::VolatilityBand;
use crate::lattice::dp::DpResult;
use crate::lattice::state::{Axis, Coordinate, StateSpec};
use crate::lattice::{Increments, TimePartition};
use crate::pathspace::{Policy, SamplePath, Simulator};
use crate::{Error, Result};

/// Paths per deterministic reduction chunk.
pub const CHUNK: usize = 1024;
/// Width of the stochastic acceptance margin in standard errors.
pub const STDERR_MARGIN: f64 = 3.0;

/// Argmax table extracted from a DP solve.
#[derive(Debug, Clone)]
pub struct TablePolicy {
    spec: StateSpec,
    levels: Vec<f64>,
    argmax: Vec<Vec<u8>>,
}

impl TablePolicy {
    pub fn from_dp(dp: &DpResult) -> Result<Self> {
        if !dp.has_policy() {
            return Err(Error::argument(
                "DP result has no argmax grids; solve with Retention::Policy",
            ));
        }
        Ok(Self {
            spec: dp.spec.clone(),
            levels: dp.sigma_levels.clone(),
            argmax: dp.argmax.clone(),
        })
    }

    /// Reads the CSV written by [`DpResult::write_csv`] (full retention).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let nh = header.len();
        if nh < 4 || header[0] != "time" || header[nh - 2] != "value" || header[nh - 1] != "argmax_sigma" {
            return Err(Error::argument(
                "policy table needs columns time, <coordinates...>, value, argmax_sigma",
            ));
        }
        let names = &header[1..nh - 2];
        let coords = coords_from_names(names)?;
        let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.get(nh - 1).unwrap_or("").is_empty() {
                continue;
            }
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|_| Error::argument(format!("bad number in policy table column {}", header[k])))
            };
            let x = (1..nh - 2).map(parse).collect::<Result<Vec<f64>>>()?;
            rows.push((parse(0)?, x, parse(nh - 1)?));
        }
        if rows.is_empty() {
            return Err(Error::argument("policy table has no argmax rows"));
        }
        let times = sorted_unique(rows.iter().map(|r| r.0));
        let levels = sorted_unique(rows.iter().map(|r| r.2));
        let axes = (0..names.len())
            .map(|k| {
                let vals = sorted_unique(rows.iter().map(|r| r.1[k]));
                if vals.len() < 2 {
                    return Err(Error::argument(format!(
                        "policy table axis {} has fewer than 2 nodes",
                        names[k]
                    )));
                }
                let step = (vals[vals.len() - 1] - vals[0]) / (vals.len() - 1) as f64;
                Axis::new(vals[0], step, vals.len())
            })
            .collect::<Result<Vec<Axis>>>()?;
        let spec = StateSpec::with_axes(coords, axes)?;
        let mut argmax = vec![vec![0u8; spec.n_states()]; times.len()];
        for (t, x, s) in rows {
            let i = times.partition_point(|v| *v < t - 1e-12);
            let idx: Vec<usize> = spec.axes().iter().zip(&x).map(|(a, v)| a.locate(*v).0).collect();
            let j = levels.partition_point(|v| *v < s - 1e-12);
            argmax[i][spec.flatten(&idx)] = j as u8;
        }
        Ok(Self { spec, levels, argmax })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn sigma_at(&self, i: usize, state: &[f64]) -> f64 {
        let layer = &self.argmax[i.min(self.argmax.len() - 1)];
        let idx: Vec<usize> = self
            .spec
            .axes()
            .iter()
            .zip(state)
            .map(|(a, &x)| {
                let (j, frac) = a.locate(x);
                if frac > 0.5 {
                    j + 1
                } else {
                    j
                }
            })
            .collect();
        self.levels[layer[self.spec.flatten(&idx)] as usize]
    }
}

fn sorted_unique(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    v
}

fn coords_from_names(names: &[String]) -> Result<Vec<Coordinate>> {
    let has = |n: &str| names.iter().any(|x| x == n);
    names
        .iter()
        .map(|n| match n.as_str() {
            "B" => Ok(Coordinate::Base),
            "S" if has("B") => Ok(Coordinate::RunningMax),
            "S" => Ok(Coordinate::DrawdownMax),
            "Y" => Ok(Coordinate::Drawdown),
            "R" => Ok(Coordinate::Reflected),
            "L" => Ok(Coordinate::ReflectedLocalTime),
            "M" => Ok(Coordinate::SgnIntegral),
            other => match other.strip_prefix("L(").and_then(|r| r.strip_suffix(')')) {
                Some(level) => level
                    .parse()
                    .map(|level| Coordinate::Tanaka { level })
                    .map_err(|_| Error::argument(format!("bad Tanaka level in column '{other}'"))),
                None => Err(Error::argument(format!("unknown coordinate column '{other}'"))),
            },
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum ControlPolicy {
    Constant {
        sigma: f64,
    },
    /// `σ = inside` while `|B| < threshold`, `outside` otherwise.
    BangBang {
        threshold: f64,
        inside: f64,
        outside: f64,
    },
    Table(Arc<TablePolicy>),
}

impl fmt::Display for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlPolicy::Constant { sigma } => write!(f, "const:{sigma}"),
            ControlPolicy::BangBang {
                threshold,
                inside,
                outside,
            } => {
                write!(f, "bangbang:{threshold}:{inside}:{outside}")
            }
            ControlPolicy::Table(_) => write!(f, "table"),
        }
    }
}

impl ControlPolicy {
    /// `const:σ`, `bangbang:θ` (σ̄ inside, σ̲ outside), `bangbang:θ:in:out`
    /// or `table:<csv file>`.
    pub fn parse(spec: &str, band: &VolatilityBand) -> Result<Self> {
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::argument(format!("bad number '{s}' in policy '{spec}'")))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let policy = match parts.as_slice() {
            ["const", s] => ControlPolicy::Constant { sigma: num(s)? },
            ["bangbang", t] => ControlPolicy::BangBang {
                threshold: num(t)?,
                inside: band.sigma_upper(),
                outside: band.sigma_lower(),
            },
            ["bangbang", t, i, o] => ControlPolicy::BangBang {
                threshold: num(t)?,
                inside: num(i)?,
                outside: num(o)?,
            },
            ["table", _] => ControlPolicy::Table(Arc::new(TablePolicy::from_csv_path(Path::new(&spec[6..]))?)),
            _ => {
                return Err(Error::argument(format!(
                    "unknown policy '{spec}' (const:σ | bangbang:θ[:in:out] | table:<file>)"
                )))
            }
        };
        policy.validate(band)?;
        Ok(policy)
    }

    /// Every σ the policy can emit lies in the band.
    pub fn validate(&self, band: &VolatilityBand) -> Result<()> {
        let emitted: Vec<f64> = match self {
            ControlPolicy::Constant { sigma } => vec![*sigma],
            ControlPolicy::BangBang { inside, outside, .. } => vec![*inside, *outside],
            ControlPolicy::Table(t) => t.levels.clone(),
        };
        match emitted.iter().find(|s| !band.contains_sigma(**s, 1e-12)) {
            Some(s) => Err(Error::argument(format!(
                "policy {self} emits sigma={s} outside the band [{}, {}]",
                band.sigma_lower(),
                band.sigma_upper()
            ))),
            None => Ok(()),
        }
    }
}

impl Policy for ControlPolicy {
    fn coords(&self) -> Vec<Coordinate> {
        match self {
            ControlPolicy::Table(t) => t.spec.coords().to_vec(),
            _ => vec![Coordinate::Base],
        }
    }

    fn sigma(&self, i: usize, state: &[f64]) -> f64 {
        match self {
            ControlPolicy::Constant { sigma } => *sigma,
            ControlPolicy::BangBang {
                threshold,
                inside,
                outside,
            } => {
                if state[0].abs() < *threshold {
                    *inside
                } else {
                    *outside
                }
            }
            ControlPolicy::Table(t) => t.sigma_at(i, state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub value: f64,
    /// Sample standard deviation over `√n_paths`.
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl EstimateWithError {
    /// `value − 3·stderr`.
    pub fn lower(&self) -> f64 {
        self.value - STDERR_MARGIN * self.stderr
    }

    pub fn upper(&self) -> f64 {
        self.value + STDERR_MARGIN * self.stderr
    }
}

/// Means and standard errors of several functionals of the same paths.
pub fn mc_estimate_many(
    functionals: &[&(dyn Fn(&SamplePath) -> f64 + Sync)],
    policy: &dyn Policy,
    band: VolatilityBand,
    partition: &TimePartition,
    increments: &Increments,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    if n_paths < 2 {
        return Err(Error::argument("Monte Carlo needs at least 2 paths"));
    }
    let sim = Simulator::new(policy, band, Arc::new(partition.clone()), increments, seed)?;
    let nf = functionals.len();
    let chunks = n_paths.div_ceil(CHUNK);
    let sums: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![(0.0, 0.0); nf];
            for id in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                let path = sim.path(id as u64)?;
                for (a, f) in acc.iter_mut().zip(functionals) {
                    let v = f(&path);
                    a.0 += v;
                    a.1 += v * v;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let n = n_paths as f64;
    (0..nf)
        .map(|k| {
            let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), c| (a + c[k].0, b + c[k].1));
            let mean = s / n;
            let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
            if !mean.is_finite() || !var.is_finite() {
                return Err(Error::numerical("Monte Carlo functional produced non-finite values"));
            }
            Ok(EstimateWithError {
                value: mean,
                stderr: (var / n).sqrt(),
                n_paths,
                seed,
            })
        })
        .collect()
}

pub fn mc_estimate(
    functional: &(dyn Fn(&SamplePath) -> f64 + Sync),
    policy: &dyn Policy,
    band: VolatilityBand,
    partition: &TimePartition,
    increments: &Increments,
    n_paths: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    Ok(mc_estimate_many(&[functional], policy, band, partition, increments, n_paths, seed)?[0])
}

/// Table policy from the argmax grids of a DP solve.
pub fn extract_policy(dp: &DpResult) -> Result<ControlPolicy> {
    Ok(ControlPolicy::Table(Arc::new(TablePolicy::from_dp(dp)?)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyEstimate {
    pub policy: String,
    pub estimate: EstimateWithError,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub per_policy: Vec<PolicyEstimate>,
    pub best_policy: String,
    pub best_mc: EstimateWithError,
    pub dp_value: Option<f64>,
}

impl EnvelopeReport {
    /// `best − 3·stderr ≤ dp + margin`: no policy beats the sublinear value.
    pub fn sandwich_holds(&self, margin: f64) -> Option<bool> {
        self.dp_value.map(|dp| self.best_mc.lower() <= dp + margin)
    }
}

/// Best Monte Carlo estimate over a finite policy family. All policies use
/// the same seed, so they are compared on common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn sup_over_policies(
    functional: &(dyn Fn(&SamplePath) -> f64 + Sync),
    family: &[(String, ControlPolicy)],
    band: VolatilityBand,
    partition: &TimePartition,
    increments: &Increments,
    n_paths: usize,
    seed: u64,
    dp_value: Option<f64>,
) -> Result<EnvelopeReport> {
    if family.is_empty() {
        return Err(Error::argument("policy family must not be empty"));
    }
    let mut per_policy = Vec::with_capacity(family.len());
    for (name, policy) in family {
        policy.validate(&band)?;
        let estimate = mc_estimate(functional, policy, band, partition, increments, n_paths, seed)?;
        per_policy.push(PolicyEstimate {
            policy: name.clone(),
            estimate,
        });
    }
    let best = per_policy.iter().enumerate().fold(0, |b, (k, p)| {
        if p.estimate.value > per_policy[b].estimate.value {
            k
        } else {
            b
        }
    });
    Ok(EnvelopeReport {
        best_policy: per_policy[best].policy.clone(),
        best_mc: per_policy[best].estimate,
        per_policy,
        dp_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{DpModel, Retention, SigmaSet};

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn parse_policies() {
        let b = band();
        assert!(
            matches!(ControlPolicy::parse("const:1", &b).unwrap(), ControlPolicy::Constant { sigma } if sigma == 1.0)
        );
        assert!(ControlPolicy::parse("const:1.5", &b).is_err());
        assert!(matches!(
            ControlPolicy::parse("bangbang:0.3", &b).unwrap(),
            ControlPolicy::BangBang { inside, outside, .. } if inside == 1.0 && outside == 0.5
        ));
        assert!(ControlPolicy::parse("wiggle:1", &b).is_err());
    }

    #[test]
    fn empty_family_is_error() {
        let p = TimePartition::uniform(1.0, 4).unwrap();
        let r = sup_over_policies(
            &|p| p.terminal(),
            &[],
            band(),
            &p,
            &Increments::rademacher(),
            10,
            1,
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn deterministic_estimates() {
        let p = TimePartition::uniform(1.0, 16).unwrap();
        let pol = ControlPolicy::BangBang {
            threshold: 0.2,
            inside: 1.0,
            outside: 0.5,
        };
        let f = |p: &SamplePath| p.terminal().powi(2);
        let a = mc_estimate(&f, &pol, band(), &p, &Increments::rademacher(), 3000, 5).unwrap();
        let b = mc_estimate(&f, &pol, band(), &p, &Increments::rademacher(), 3000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_policy_round_trips_through_csv() {
        let p = TimePartition::uniform(0.25, 4).unwrap();
        let m = DpModel::new(
            p,
            SigmaSet::endpoints(&band()),
            Increments::rademacher(),
            vec![Coordinate::Base],
        )
        .unwrap();
        let dp = m.solve(&|x| x[0].cos(), Retention::Full).unwrap();
        let direct = TablePolicy::from_dp(&dp).unwrap();
        let mut buf = Vec::new();
        dp.write_csv(&mut buf).unwrap();
        let loaded = TablePolicy::from_csv(buf.as_slice()).unwrap();
        for i in 0..4 {
            for b in [-0.3, -0.05, 0.0, 0.1, 0.4] {
                assert_eq!(direct.sigma_at(i, &[b]), loaded.sigma_at(i, &[b]));
            }
        }
        let no_policy = m.solve(&|x| x[0], Retention::Final).unwrap();
        assert!(extract_policy(&no_policy).is_err());
    }
}
