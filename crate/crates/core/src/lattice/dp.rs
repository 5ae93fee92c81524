//! Backward induction over augmented states on a uniform grid.
//!
//! The `B`-grid step is `h = σ̄√dt/m` with the smallest `m ≤ 64` that puts
//! every child `x + σ√dt·z_k` of a node on a node. When no such `m` exists
//! (Gaussian nodes, irrational level ratios) `m = 8` is used and children are
//! resolved by multilinear interpolation. Axes reach about `7σ̄√T` and
//! children beyond the edge are clamped to it.
//!
//! Transitions do not depend on time, so they are built once as a sparse
//! table per `(state, σ)` and reused at every step.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::state::{Coordinate, StateSpec};
use super::{Increments, SigmaSet, TimePartition};
use crate::{Error, Result};

/// Half-width of the default axes in units of `σ̄√T`.
pub const AXIS_REACH: f64 = 7.0;
/// Axes shorter than this many `σ̄√T` are rejected.
pub const MIN_AXIS_REACH: f64 = 5.0;
/// Refuse transition tables beyond this many entries.
pub const MAX_TABLE_ENTRIES: usize = 200_000_000;

const PAR_THRESHOLD: usize = 4096;

/// What a solve keeps besides the value at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    Final,
    /// The value grid at one time index.
    Layer(usize),
    /// Argmax σ indices at every step (needed for policy extraction).
    Policy,
    /// Value grids and argmax at every step.
    Full,
}

/// `(h, exact)` for the given levels and standardized nodes.
pub fn lattice_step(levels: &[f64], nodes: &[f64], dt: f64) -> (f64, bool) {
    let top = levels.iter().cloned().fold(0.0, f64::max);
    for m in 1..=64u32 {
        let exact = levels.iter().all(|s| {
            nodes.iter().all(|z| {
                let x = s * z * m as f64 / top;
                (x - x.round()).abs() < 1e-9
            })
        });
        if exact {
            return (top * dt.sqrt() / m as f64, true);
        }
    }
    (top * dt.sqrt() / 8.0, false)
}

#[derive(Clone)]
pub struct DpModel {
    partition: TimePartition,
    dt: f64,
    sigmas: SigmaSet,
    increments: Increments,
    spec: StateSpec,
    grid_step: f64,
    exact: bool,
    offsets: Vec<usize>,
    children: Vec<u32>,
    weights: Vec<f64>,
}

impl std::fmt::Debug for DpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DpModel")
            .field("steps", &self.partition.steps())
            .field("sigmas", &self.sigmas.levels())
            .field("coords", &self.spec.names())
            .field("n_states", &self.spec.n_states())
            .field("grid_step", &self.grid_step)
            .field("exact", &self.exact)
            .finish()
    }
}

impl DpModel {
    /// Builds default axes for `coords` and the transition table.
    pub fn new(
        partition: TimePartition,
        sigmas: SigmaSet,
        increments: Increments,
        coords: Vec<Coordinate>,
    ) -> Result<Self> {
        let dt = partition.uniform_dt()?;
        let (h, _) = lattice_step(sigmas.levels(), &increments.nodes, dt);
        let reach = (AXIS_REACH * sigmas.max() * partition.horizon().sqrt() / h - 1e-9).ceil() as usize;
        let spec = StateSpec::new(coords, h, reach)?;
        Self::with_spec(partition, sigmas, increments, spec)
    }

    pub fn with_spec(
        partition: TimePartition,
        sigmas: SigmaSet,
        increments: Increments,
        spec: StateSpec,
    ) -> Result<Self> {
        let dt = partition.uniform_dt()?;
        let need = MIN_AXIS_REACH * sigmas.max() * partition.horizon().sqrt();
        for (c, a) in spec.coords().iter().zip(spec.axes()) {
            if matches!(c, Coordinate::Custom { .. }) {
                continue;
            }
            let short = a.max() < need - 1e-9 || (a.min < 0.0 && -a.min < need - 1e-9);
            if short {
                return Err(Error::config(format!(
                    "state grid overflow: axis {} spans [{}, {}] but must reach {need:.4} (5·sigma_upper·sqrt(T))",
                    c.name(),
                    a.min,
                    a.max()
                )));
            }
        }
        let n_states = spec.n_states();
        let est = n_states * sigmas.len() * increments.nodes.len() * (1 << spec.dim());
        if est > MAX_TABLE_ENTRIES || n_states > u32::MAX as usize {
            return Err(Error::config(format!(
                "transition table would need up to {est} entries for {n_states} states; coarsen the grid"
            )));
        }
        let h = spec.axes()[0].step;
        let (_, exact) = lattice_step(sigmas.levels(), &increments.nodes, dt);
        let exact = exact
            && spec.axes().iter().all(|a| {
                let r = a.step / h;
                (r - r.round()).abs() < 1e-9
            });

        let sq = dt.sqrt();
        let rows: Vec<Vec<(u32, f64)>> = (0..n_states)
            .into_par_iter()
            .map_init(
                || (vec![0.0; spec.dim()], Vec::new()),
                |(child, stencil), s| {
                    let x = spec.state_of(s);
                    let mut row: Vec<(u32, f64)> = Vec::new();
                    for &sig in sigmas.levels() {
                        let start = row.len();
                        for (z, w) in increments.nodes.iter().zip(&increments.weights) {
                            spec.update(&x, sig * sq * z, child);
                            spec.stencil(child, stencil);
                            row.extend(stencil.iter().map(|&(c, sw)| (c as u32, w * sw)));
                        }
                        let seg = &mut row[start..];
                        seg.sort_unstable_by_key(|e| e.0);
                        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(seg.len());
                        for &(c, w) in seg.iter() {
                            match merged.last_mut() {
                                Some(last) if last.0 == c => last.1 += w,
                                _ => merged.push((c, w)),
                            }
                        }
                        merged.retain(|e| e.1 != 0.0);
                        row.truncate(start);
                        row.extend(merged);
                        // Segment boundary marker.
                        row.push((u32::MAX, f64::NAN));
                    }
                    row
                },
            )
            .collect();

        let total: usize = rows.iter().map(|r| r.len() - sigmas.len()).sum();
        let mut offsets = Vec::with_capacity(n_states * sigmas.len() + 1);
        let mut children = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        offsets.push(0);
        for row in rows {
            for (c, w) in row {
                if c == u32::MAX {
                    offsets.push(children.len());
                } else {
                    children.push(c);
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            partition,
            dt,
            sigmas,
            increments,
            spec,
            grid_step: h,
            exact,
            offsets,
            children,
            weights,
        })
    }

    pub fn spec(&self) -> &StateSpec {
        &self.spec
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn sigmas(&self) -> &SigmaSet {
        &self.sigmas
    }

    pub fn increments(&self) -> &Increments {
        &self.increments
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// True when every child lands on a node (no interpolation).
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn table_entries(&self) -> usize {
        self.children.len()
    }

    pub fn solve(&self, payoff: &(dyn Fn(&[f64]) -> f64 + Sync), retention: Retention) -> Result<DpResult> {
        self.solve_with_reward(payoff, None, retention)
    }

    /// Backward induction with an optional running reward `r(x, δ)` collected
    /// on each step: `v_i(x) = max_σ Σ_k w_k [r(x, σ√dt z_k) + v_{i+1}(x')]`.
    pub fn solve_with_reward(
        &self,
        payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
        reward: Option<&(dyn Fn(&[f64], f64) -> f64 + Sync)>,
        retention: Retention,
    ) -> Result<DpResult> {
        let n = self.partition.steps();
        if let Retention::Layer(i) = retention {
            if i > n {
                return Err(Error::argument(format!(
                    "stop index {i} exceeds the number of steps {n}"
                )));
            }
        }
        let n_states = self.spec.n_states();
        let ns = self.sigmas.len();
        let par = n_states >= PAR_THRESHOLD;

        let mut v: Vec<f64> = if par {
            (0..n_states)
                .into_par_iter()
                .map(|s| payoff(&self.spec.state_of(s)))
                .collect()
        } else {
            (0..n_states).map(|s| payoff(&self.spec.state_of(s))).collect()
        };
        check_finite(&v, "terminal payoff")?;

        let rewards: Option<Vec<f64>> = reward.map(|r| {
            let sq = self.dt.sqrt();
            let levels = self.sigmas.levels();
            let inc = &self.increments;
            let f = |idx: usize| {
                let x = self.spec.state_of(idx / ns);
                let s = levels[idx % ns];
                inc.nodes
                    .iter()
                    .zip(&inc.weights)
                    .map(|(z, w)| w * r(&x, s * sq * z))
                    .sum::<f64>()
            };
            if par {
                (0..n_states * ns).into_par_iter().map(f).collect()
            } else {
                (0..n_states * ns).map(f).collect()
            }
        });
        if let Some(r) = &rewards {
            check_finite(r, "running reward")?;
        }

        let keep_all_values = retention == Retention::Full;
        let keep_argmax = matches!(retention, Retention::Policy | Retention::Full);
        let mut layers = Vec::new();
        let mut argmax: Vec<Vec<u8>> = if keep_argmax { vec![Vec::new(); n] } else { Vec::new() };
        let wants = |i: usize| keep_all_values || retention == Retention::Layer(i);
        if wants(n) {
            layers.push((n, v.clone()));
        }
        let mut next = vec![0.0; n_states];
        let mut arg = vec![0u8; if keep_argmax { n_states } else { 0 }];
        for i in (0..n).rev() {
            let step = |s: usize, out: &mut f64, a: Option<&mut u8>| {
                let mut best = f64::NEG_INFINITY;
                let mut best_j = 0;
                for j in 0..ns {
                    let row = s * ns + j;
                    let mut acc = rewards.as_ref().map_or(0.0, |r| r[row]);
                    let (lo, hi) = (self.offsets[row], self.offsets[row + 1]);
                    for (c, w) in self.children[lo..hi].iter().zip(&self.weights[lo..hi]) {
                        acc += w * v[*c as usize];
                    }
                    if j == 0 || acc > best {
                        best = acc;
                        best_j = j;
                    }
                }
                *out = best;
                if let Some(a) = a {
                    *a = best_j as u8;
                }
            };
            match (par, keep_argmax) {
                (true, true) => next
                    .par_iter_mut()
                    .zip(arg.par_iter_mut())
                    .enumerate()
                    .for_each(|(s, (o, a))| step(s, o, Some(a))),
                (true, false) => next.par_iter_mut().enumerate().for_each(|(s, o)| step(s, o, None)),
                (false, true) => next
                    .iter_mut()
                    .zip(arg.iter_mut())
                    .enumerate()
                    .for_each(|(s, (o, a))| step(s, o, Some(a))),
                (false, false) => next.iter_mut().enumerate().for_each(|(s, o)| step(s, o, None)),
            }
            std::mem::swap(&mut v, &mut next);
            if i % 256 == 0 {
                check_finite(&v, "backward induction")?;
            }
            if keep_argmax {
                argmax[i] = arg.clone();
            }
            if wants(i) {
                layers.push((i, v.clone()));
            }
        }
        layers.reverse();
        Ok(DpResult {
            value: v[self.spec.origin()],
            spec: self.spec.clone(),
            partition: self.partition.clone(),
            sigma_levels: self.sigmas.levels().to_vec(),
            layers,
            argmax,
            grid_step: self.grid_step,
            exact: self.exact,
        })
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some(j) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::numerical(format!("{what}: non-finite value at state {j}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DpResult {
    /// Value at the all-zero initial state.
    pub value: f64,
    pub spec: StateSpec,
    pub partition: TimePartition,
    pub sigma_levels: Vec<f64>,
    /// Retained `(time index, value grid)` pairs, ascending in time.
    pub layers: Vec<(usize, Vec<f64>)>,
    /// Argmax σ index per state, for each step `0..n` (empty unless retained).
    pub argmax: Vec<Vec<u8>>,
    pub grid_step: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpSummary {
    pub value: f64,
    pub steps: usize,
    pub horizon: f64,
    pub sigma_levels: Vec<f64>,
    pub coordinates: Vec<String>,
    pub n_states: usize,
    pub grid_step: f64,
    pub exact_grid: bool,
}

impl DpResult {
    pub fn layer(&self, i: usize) -> Option<&[f64]> {
        self.layers.iter().find(|(t, _)| *t == i).map(|(_, v)| v.as_slice())
    }

    /// Interpolated value at time index `i` and state `x`, if that layer was kept.
    pub fn value_at(&self, i: usize, x: &[f64]) -> Option<f64> {
        let layer = self.layer(i)?;
        let mut st = Vec::new();
        self.spec.stencil(x, &mut st);
        Some(st.iter().map(|(c, w)| w * layer[*c]).sum())
    }

    pub fn has_policy(&self) -> bool {
        !self.argmax.is_empty()
    }

    /// Maximizing σ at step `i` for the grid node nearest to `x`.
    pub fn argmax_sigma(&self, i: usize, x: &[f64]) -> Option<f64> {
        let layer = self.argmax.get(i)?;
        let idx: Vec<usize> = self
            .spec
            .axes()
            .iter()
            .zip(x)
            .map(|(a, &xi)| {
                let (j, frac) = a.locate(xi);
                if frac > 0.5 {
                    j + 1
                } else {
                    j
                }
            })
            .collect();
        Some(self.sigma_levels[layer[self.spec.flatten(&idx)] as usize])
    }

    pub fn summary(&self) -> DpSummary {
        DpSummary {
            value: self.value,
            steps: self.partition.steps(),
            horizon: self.partition.horizon(),
            sigma_levels: self.sigma_levels.clone(),
            coordinates: self.spec.names(),
            n_states: self.spec.n_states(),
            grid_step: self.grid_step,
            exact_grid: self.exact,
        }
    }

    /// CSV with columns `time, <coordinates...>, value, argmax_sigma` for every
    /// retained layer. `argmax_sigma` is empty at the terminal layer or when
    /// the policy was not kept.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.spec.names());
        header.push("value".into());
        header.push("argmax_sigma".into());
        out.write_record(&header)?;
        for (i, values) in &self.layers {
            let t = self.partition.times()[*i];
            for (s, v) in values.iter().enumerate() {
                let mut rec = vec![t.to_string()];
                rec.extend(self.spec.state_of(s).iter().map(|x| x.to_string()));
                rec.push(v.to_string());
                rec.push(
                    self.argmax
                        .get(*i)
                        .filter(|a| !a.is_empty())
                        .map(|a| self.sigma_levels[a[s] as usize].to_string())
                        .unwrap_or_default(),
                );
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `Ê[payoff(state_T)]` for the given coordinates, keeping only the final value.
pub fn dp_expectation(
    coords: Vec<Coordinate>,
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    partition: &TimePartition,
    sigmas: &SigmaSet,
    increments: &Increments,
) -> Result<DpResult> {
    DpModel::new(partition.clone(), sigmas.clone(), increments.clone(), coords)?.solve(payoff, Retention::Final)
}

/// `Ê_{t_i}[φ(B_T)]` as a grid over `B` at time `t_i` (kept as the single
/// retained layer of the result). At `i = 0` the result's `value` is the scalar.
pub fn conditional_expectation(
    phi: &(dyn Fn(f64) -> f64 + Sync),
    partition: &TimePartition,
    sigmas: &SigmaSet,
    increments: &Increments,
    i: usize,
) -> Result<DpResult> {
    let model = DpModel::new(
        partition.clone(),
        sigmas.clone(),
        increments.clone(),
        vec![Coordinate::Base],
    )?;
    model.solve(&|x: &[f64]| phi(x[0]), Retention::Layer(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::VolatilityBand;
    use approx::assert_abs_diff_eq;

    fn band() -> VolatilityBand {
        VolatilityBand::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn step_selection() {
        let (h, exact) = lattice_step(&[0.5, 1.0], &[-1.0, 1.0], 0.01);
        assert!(exact);
        assert_abs_diff_eq!(h, 0.05, epsilon = 1e-15);
        let (h, exact) = lattice_step(&[0.5, 0.625, 0.75, 0.875, 1.0], &[-1.0, 1.0], 0.01);
        assert!(exact);
        assert_abs_diff_eq!(h, 0.1 / 8.0, epsilon = 1e-15);
        let inc = Increments::gauss(8).unwrap();
        assert!(!lattice_step(&[1.0], &inc.nodes, 0.01).1);
    }

    #[test]
    fn martingale_is_exact() {
        let p = TimePartition::uniform(1.0, 64).unwrap();
        let r =
            conditional_expectation(&|b| b, &p, &SigmaSet::endpoints(&band()), &Increments::rademacher(), 0).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn second_moment_is_exact() {
        let p = TimePartition::uniform(1.0, 64).unwrap();
        let s = SigmaSet::refined(&band(), 5);
        let r = conditional_expectation(&|b| b * b, &p, &s, &Increments::rademacher(), 0).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-12);
        let r = conditional_expectation(&|b| -b * b, &p, &s, &Increments::rademacher(), 0).unwrap();
        assert_abs_diff_eq!(r.value, -0.25, epsilon = 1e-12);
    }

    #[test]
    fn short_axis_is_config_error() {
        let p = TimePartition::uniform(1.0, 16).unwrap();
        let spec = StateSpec::new(vec![Coordinate::Base], 0.125, 16).unwrap();
        let err = DpModel::with_spec(p, SigmaSet::endpoints(&band()), Increments::rademacher(), spec).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("overflow"));
    }

    #[test]
    fn csv_export() {
        let p = TimePartition::uniform(0.25, 2).unwrap();
        let m = DpModel::new(
            p,
            SigmaSet::endpoints(&band()),
            Increments::rademacher(),
            vec![Coordinate::Base],
        )
        .unwrap();
        let r = m.solve(&|x| x[0].abs(), Retention::Full).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,B,value,argmax_sigma\n"));
        assert_eq!(text.lines().count(), 1 + 3 * m.spec().n_states());
    }
}
