//! Product of the lattice with an independent Gaussian coordinate.
//!
//! On `Ω × Ω̄` the process `M^ε = M + εW` pairs a lattice symmetric
//! martingale `M` with a classical Brownian motion `W` realized by
//! Gauss–Hermite increments. The one-step operator averages linearly over
//! the `W` increment inside the max over σ, so `W` adds exactly `ε²dt` to
//! every conditional second moment.

use super::{Increments, SigmaSet, TimePartition};
use crate::generator::SublinearGenerator;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProductLattice {
    pub partition: TimePartition,
    pub sigmas: SigmaSet,
    pub base: Increments,
    pub gauss: Increments,
    pub eps: f64,
}

/// Worst nodewise error of one identity on the product lattice.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProductCheck {
    pub name: String,
    pub max_error: f64,
    /// `(time index, m, w)` of the worst node.
    pub worst_node: (usize, f64, f64),
    pub nodes_checked: usize,
}

impl ProductLattice {
    pub fn new(partition: TimePartition, sigmas: SigmaSet, base: Increments, gauss_q: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::argument(format!("eps must lie in (0, 1), got {eps}")));
        }
        if partition.steps() > 4 {
            return Err(Error::config(
                "the product lattice enumerates histories; use at most 4 steps",
            ));
        }
        Ok(Self {
            partition,
            sigmas,
            base,
            gauss: Increments::gauss(gauss_q)?,
            eps,
        })
    }

    /// Nodes `(m, w)` reachable at time index `i` (with multiplicity).
    pub fn nodes_at(&self, i: usize) -> Vec<(f64, f64)> {
        let mut layer = vec![(0.0, 0.0)];
        for step in 0..i {
            let sq = self.partition.dt(step).sqrt();
            let mut next =
                Vec::with_capacity(layer.len() * self.sigmas.len() * self.base.nodes.len() * self.gauss.nodes.len());
            for &(m, w) in &layer {
                for s in self.sigmas.levels() {
                    for z in &self.base.nodes {
                        for g in &self.gauss.nodes {
                            next.push((m + s * sq * z, w + sq * g));
                        }
                    }
                }
            }
            layer = next;
        }
        layer
    }

    /// `Ẽ_{t_i}[f(M_{t_{i+1}}, W_{t_{i+1}})]` at the node `(m, w)`.
    pub fn one_step(&self, i: usize, m: f64, w: f64, f: &dyn Fn(f64, f64) -> f64) -> f64 {
        let sq = self.partition.dt(i).sqrt();
        let mut best = f64::NEG_INFINITY;
        for s in self.sigmas.levels() {
            let mut acc = 0.0;
            for (z, pz) in self.base.nodes.iter().zip(&self.base.weights) {
                let mut inner = 0.0;
                for (g, pg) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                    inner += pg * f(m + s * sq * z, w + sq * g);
                }
                acc += pz * inner;
            }
            best = best.max(acc);
        }
        best
    }

    fn value_from(&self, path: &mut Vec<(f64, f64)>, payoff: &dyn Fn(&[(f64, f64)]) -> f64) -> f64 {
        let i = path.len() - 1;
        if i == self.partition.steps() {
            return payoff(path);
        }
        let sq = self.partition.dt(i).sqrt();
        let (m, w) = path[i];
        let mut best = f64::NEG_INFINITY;
        for s in self.sigmas.levels() {
            let mut acc = 0.0;
            for (z, pz) in self.base.nodes.iter().zip(&self.base.weights) {
                for (g, pg) in self.gauss.nodes.iter().zip(&self.gauss.weights) {
                    path.push((m + s * sq * z, w + sq * g));
                    acc += pz * pg * self.value_from(path, payoff);
                    path.pop();
                }
            }
            best = best.max(acc);
        }
        best
    }

    /// `Ẽ[ξ]` for `ξ = payoff((M, W)_{t_0..=t_n})`.
    pub fn expectation(&self, payoff: &dyn Fn(&[(f64, f64)]) -> f64) -> f64 {
        self.value_from(&mut vec![(0.0, 0.0)], payoff)
    }

    fn worst(&self, name: &str, err: impl Fn(usize, f64, f64) -> f64) -> ProductCheck {
        let mut out = ProductCheck {
            name: name.to_string(),
            max_error: 0.0,
            worst_node: (0, 0.0, 0.0),
            nodes_checked: 0,
        };
        for i in 0..self.partition.steps() {
            for (m, w) in self.nodes_at(i) {
                let e = err(i, m, w);
                out.nodes_checked += 1;
                if !(e <= out.max_error) {
                    out.max_error = e;
                    out.worst_node = (i, m, w);
                }
            }
        }
        out
    }

    /// `Ẽ_{t_i}[±M^ε_{t_{i+1}}] = ±M^ε_{t_i}` at every node.
    pub fn check_symmetric_martingale(&self) -> ProductCheck {
        let eps = self.eps;
        self.worst("symmetric martingale", |i, m, w| {
            let here = m + eps * w;
            let up = self.one_step(i, m, w, &|m1, w1| m1 + eps * w1);
            let down = self.one_step(i, m, w, &|m1, w1| -(m1 + eps * w1));
            (up - here).abs().max((down + here).abs())
        })
    }

    /// `Ẽ_{t_i}[a(M^ε_{t_{i+1}})²] − a(M^ε_{t_i})² = 2G_ε(a)Δt` at every node.
    pub fn check_quadratic(&self, generator: &SublinearGenerator, a: f64) -> Result<ProductCheck> {
        let eps = self.eps;
        let g_eps = generator.eval_epsilon(a, eps)?;
        Ok(self.worst(&format!("quadratic a={a}"), |i, m, w| {
            let here = m + eps * w;
            let v = self.one_step(i, m, w, &|m1, w1| a * (m1 + eps * w1).powi(2));
            (v - a * here * here - 2.0 * g_eps * self.partition.dt(i)).abs()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::VolatilityBand;

    #[test]
    fn eps_range() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let p = TimePartition::uniform(1.0, 3).unwrap();
        let s = SigmaSet::endpoints(&band);
        assert!(ProductLattice::new(p.clone(), s.clone(), Increments::rademacher(), 8, 0.0).is_err());
        assert!(ProductLattice::new(p, s, Increments::rademacher(), 8, 1.0).is_err());
    }

    #[test]
    fn identities_on_small_lattice() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let g = SublinearGenerator::new(band);
        let pl = ProductLattice::new(
            TimePartition::uniform(1.0, 2).unwrap(),
            SigmaSet::endpoints(&band),
            Increments::rademacher(),
            4,
            0.3,
        )
        .unwrap();
        assert!(pl.check_symmetric_martingale().max_error < 1e-12);
        assert!(pl.check_quadratic(&g, -2.0).unwrap().max_error < 1e-12);
    }
}
