//! Lattice expectation under a dominated generator `G̃`.
//!
//! `G̃` is not positively homogeneous, so there is no σ to maximize over.
//! Instead each macro step solves the `G̃`-heat equation for one `dt` on a
//! local increment grid: `ψ(δ) = v_{i+1}(F(x, δ))` is marched with the
//! explicit scheme and read back at `δ = 0`.
//!
//! The local grid has step `dδ = σ̄√dt/4` and 24 nodes on each side of 0,
//! while the march takes 18 sub-steps at CFL 0.9. The explicit stencil moves
//! information one node per sub-step, so the value at `δ = 0` never sees the
//! edges of the local grid.

use rayon::prelude::*;

use super::dp::{DpResult, Retention, AXIS_REACH, MIN_AXIS_REACH};
use super::state::{Coordinate, StateSpec};
use super::TimePartition;
use crate::generator::{default_probe_pairs, DominatedGenerator, Nonlinearity};
use crate::gheat::march;
use crate::{Error, Result};

/// Local grid nodes on each side of `δ = 0`.
pub const LOCAL_HALF_NODES: usize = 24;
/// Local grid refinement: `dδ = σ̄√dt / LOCAL_REFINE`.
pub const LOCAL_REFINE: f64 = 4.0;
const SUB_CFL: f64 = 0.9;

#[derive(Clone)]
pub struct TildeModel {
    partition: TimePartition,
    dt: f64,
    generator: DominatedGenerator,
    spec: StateSpec,
    d_delta: f64,
    substeps: usize,
    offsets: Vec<usize>,
    children: Vec<u32>,
    weights: Vec<f64>,
}

impl std::fmt::Debug for TildeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TildeModel")
            .field("steps", &self.partition.steps())
            .field("coords", &self.spec.names())
            .field("n_states", &self.spec.n_states())
            .field("local_step", &self.d_delta)
            .field("substeps", &self.substeps)
            .finish()
    }
}

impl TildeModel {
    pub fn new(partition: TimePartition, generator: DominatedGenerator, coords: Vec<Coordinate>) -> Result<Self> {
        let dt = partition.uniform_dt()?;
        let h = generator.band().sigma_upper() * dt.sqrt() / LOCAL_REFINE;
        let reach =
            (AXIS_REACH * generator.band().sigma_upper() * partition.horizon().sqrt() / h - 1e-9).ceil() as usize;
        let spec = StateSpec::new(coords, h, reach)?;
        Self::with_spec(partition, generator, spec)
    }

    pub fn with_spec(partition: TimePartition, generator: DominatedGenerator, spec: StateSpec) -> Result<Self> {
        generator.validate()?;
        let dt = partition.uniform_dt()?;
        let sigma_upper = generator.band().sigma_upper();
        let need = MIN_AXIS_REACH * sigma_upper * partition.horizon().sqrt();
        for (c, a) in spec.coords().iter().zip(spec.axes()) {
            if !matches!(c, Coordinate::Custom { .. })
                && (a.max() < need - 1e-9 || (a.min < 0.0 && -a.min < need - 1e-9))
            {
                return Err(Error::config(format!(
                    "state grid overflow: axis {} must reach {need:.4} (5·sigma_upper·sqrt(T))",
                    c.name()
                )));
            }
        }
        let d_delta = sigma_upper * dt.sqrt() / LOCAL_REFINE;
        let upper = generator.effective_upper_variance();
        let substeps = ((dt * upper / (SUB_CFL * d_delta * d_delta)) - 1e-9).ceil().max(1.0) as usize;
        if substeps >= LOCAL_HALF_NODES {
            return Err(Error::config(format!(
                "nested step needs {substeps} sub-steps, more than the local half-width {LOCAL_HALF_NODES}"
            )));
        }

        let width = 2 * LOCAL_HALF_NODES + 1;
        let n_states = spec.n_states();
        let rows: Vec<Vec<(u32, f64)>> = (0..n_states)
            .into_par_iter()
            .map_init(
                || (vec![0.0; spec.dim()], Vec::new()),
                |(child, stencil), s| {
                    let x = spec.state_of(s);
                    let mut row = Vec::with_capacity(width * 2);
                    for j in 0..width {
                        let delta = (j as f64 - LOCAL_HALF_NODES as f64) * d_delta;
                        spec.update(&x, delta, child);
                        spec.stencil(child, stencil);
                        row.extend(stencil.iter().map(|&(c, w)| (c as u32, w)));
                        row.push((u32::MAX, f64::NAN));
                    }
                    row
                },
            )
            .collect();
        let mut offsets = vec![0];
        let mut children = Vec::new();
        let mut weights = Vec::new();
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
            generator,
            spec,
            d_delta,
            substeps,
            offsets,
            children,
            weights,
        })
    }

    pub fn spec(&self) -> &StateSpec {
        &self.spec
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn local_step(&self) -> f64 {
        self.d_delta
    }

    pub fn solve(&self, payoff: &(dyn Fn(&[f64]) -> f64 + Sync), retention: Retention) -> Result<DpResult> {
        let n = self.partition.steps();
        if matches!(retention, Retention::Policy | Retention::Full) {
            return Err(Error::argument(
                "G-tilde solves have no sigma policy; retain Final or Layer(i)",
            ));
        }
        let n_states = self.spec.n_states();
        let mut v: Vec<f64> = (0..n_states)
            .into_par_iter()
            .map(|s| payoff(&self.spec.state_of(s)))
            .collect();
        let mut layers = Vec::new();
        if retention == Retention::Layer(n) {
            layers.push((n, v.clone()));
        }
        let width = 2 * LOCAL_HALF_NODES + 1;
        let sub_dt = self.dt / self.substeps as f64;
        let mut next = vec![0.0; n_states];
        for i in (0..n).rev() {
            next.par_iter_mut().enumerate().for_each_init(
                || (vec![0.0; width], vec![0.0; width]),
                |(psi, scratch), (s, out)| {
                    for (j, p) in psi.iter_mut().enumerate() {
                        let row = s * width + j;
                        *p = (self.offsets[row]..self.offsets[row + 1])
                            .map(|e| self.weights[e] * v[self.children[e] as usize])
                            .sum();
                    }
                    march(&self.generator, psi, scratch, sub_dt, self.d_delta, self.substeps);
                    *out = psi[LOCAL_HALF_NODES];
                },
            );
            std::mem::swap(&mut v, &mut next);
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::numerical(format!(
                    "nested G-tilde step {i}: non-finite value at state {j}"
                )));
            }
            if retention == Retention::Layer(i) {
                layers.push((i, v.clone()));
            }
        }
        Ok(DpResult {
            value: v[self.spec.origin()],
            spec: self.spec.clone(),
            partition: self.partition.clone(),
            sigma_levels: Vec::new(),
            layers,
            argmax: Vec::new(),
            grid_step: self.spec.axes()[0].step,
            exact: true,
        })
    }
}

/// `Ê^{G̃}[payoff(state_T)]`; rejects generators that fail the domination check.
pub fn tilde_conditional_expectation(
    generator: &DominatedGenerator,
    payoff: &(dyn Fn(&[f64]) -> f64 + Sync),
    partition: &TimePartition,
    coords: Vec<Coordinate>,
) -> Result<f64> {
    let check = generator.check_domination(&default_probe_pairs())?;
    if !check.dominated {
        return Err(Error::config(format!(
            "G-tilde is not dominated by G: {:?}",
            check.violation
        )));
    }
    Ok(TildeModel::new(partition.clone(), generator.clone(), coords)?
        .solve(payoff, Retention::Final)?
        .value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::VolatilityBand;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_tilde_is_classical_heat() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let lin = DominatedGenerator::new(vec![], vec![0.3], band).unwrap();
        let p = TimePartition::uniform(1.0, 64).unwrap();
        let v = tilde_conditional_expectation(&lin, &|x| x[0] * x[0], &p, vec![Coordinate::Base]).unwrap();
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-9);
    }

    #[test]
    fn substeps_stay_inside_local_grid() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let g = DominatedGenerator::default_three_segment(band).unwrap();
        let m = TildeModel::new(TimePartition::uniform(1.0, 16).unwrap(), g, vec![Coordinate::Base]).unwrap();
        assert_eq!(m.substeps(), 18);
        assert!(m.solve(&|x| x[0], Retention::Policy).is_err());
    }
}
