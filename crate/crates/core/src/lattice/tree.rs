//! Exact recursion over whole increment histories.
//!
//! The node set at time `t_i` is every path `(B_{t_0}, …, B_{t_i})` reachable
//! under some choice of σ and increment node at each earlier step. Cost is
//! `(|Σ|·Q)^n`, so the tree is meant for small `n` (oracles, nodewise
//! identities, the product space).

use std::sync::Arc;

use super::{Increments, SigmaSet, TimePartition};
use crate::{Error, Result};

/// Replaces the σ levels at a node: `(step index, path so far) -> levels`.
pub type LevelOverride = Arc<dyn Fn(usize, &[f64]) -> Option<Vec<f64>> + Send + Sync>;

/// Cap on the number of leaves the tree is willing to enumerate.
pub const MAX_LEAVES: f64 = 5e7;

#[derive(Clone)]
pub struct TreeLattice {
    pub partition: TimePartition,
    pub sigmas: SigmaSet,
    pub increments: Increments,
    level_override: Option<LevelOverride>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// `B` at `t_0..=t_i`.
    pub path: Vec<f64>,
    pub value: f64,
    /// Maximizing σ at this node (absent at the terminal layer).
    pub argmax_sigma: Option<f64>,
}

impl TreeLattice {
    pub fn new(partition: TimePartition, sigmas: SigmaSet, increments: Increments) -> Result<Self> {
        let branching = (sigmas.len() * increments.nodes.len()) as f64;
        if branching.powi(partition.steps() as i32) > MAX_LEAVES {
            return Err(Error::config(format!(
                "history tree with {} steps and branching {branching} is too large; use the grid engine",
                partition.steps()
            )));
        }
        Ok(Self {
            partition,
            sigmas,
            increments,
            level_override: None,
        })
    }

    pub fn with_level_override(mut self, f: LevelOverride) -> Self {
        self.level_override = Some(f);
        self
    }

    pub fn levels_at(&self, i: usize, path: &[f64]) -> Vec<f64> {
        self.level_override
            .as_ref()
            .and_then(|f| f(i, path))
            .unwrap_or_else(|| self.sigmas.levels().to_vec())
    }

    /// Every node at time `t_i`, in enumeration order.
    pub fn paths_at(&self, i: usize) -> Vec<Vec<f64>> {
        let mut layer = vec![vec![0.0]];
        for step in 0..i {
            let sq = self.partition.dt(step).sqrt();
            let mut next = Vec::new();
            for path in &layer {
                let b = path[path.len() - 1];
                for s in self.levels_at(step, path) {
                    for z in &self.increments.nodes {
                        let mut p = path.clone();
                        p.push(b + s * sq * z);
                        next.push(p);
                    }
                }
            }
            layer = next;
        }
        layer
    }

    /// One step from the node `path` (at time index `path.len() − 1`):
    /// `max_σ Σ_k w_k f(path ⊕ (B + σ√dt z_k))`, smallest maximizer on ties.
    pub fn one_step_at(&self, path: &[f64], f: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
        let i = path.len() - 1;
        let sq = self.partition.dt(i).sqrt();
        let b = path[i];
        let mut ext = path.to_vec();
        ext.push(0.0);
        let mut best = f64::NEG_INFINITY;
        let mut arg = f64::NAN;
        for (j, s) in self.levels_at(i, path).into_iter().enumerate() {
            let mut acc = 0.0;
            for (z, w) in self.increments.nodes.iter().zip(&self.increments.weights) {
                ext[i + 1] = b + s * sq * z;
                acc += w * f(&ext);
            }
            if j == 0 || acc > best {
                best = acc;
                arg = s;
            }
        }
        (best, arg)
    }

    fn value_from(&self, path: &mut Vec<f64>, payoff: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
        let i = path.len() - 1;
        if i == self.partition.steps() {
            return (payoff(path), f64::NAN);
        }
        let sq = self.partition.dt(i).sqrt();
        let b = path[i];
        let mut best = f64::NEG_INFINITY;
        let mut arg = f64::NAN;
        for (j, s) in self.levels_at(i, path).into_iter().enumerate() {
            let mut acc = 0.0;
            for (z, w) in self.increments.nodes.iter().zip(&self.increments.weights) {
                path.push(b + s * sq * z);
                acc += w * self.value_from(path, payoff).0;
                path.pop();
            }
            if j == 0 || acc > best {
                best = acc;
                arg = s;
            }
        }
        (best, arg)
    }

    /// `Ê_{t_i}[ξ]` at every node of time `t_i`, where `ξ = payoff(B_{t_0..=t_n})`.
    pub fn conditional(&self, payoff: &dyn Fn(&[f64]) -> f64, i: usize) -> Result<Vec<TreeNode>> {
        if i > self.partition.steps() {
            return Err(Error::argument(format!(
                "stop index {i} exceeds the number of steps {}",
                self.partition.steps()
            )));
        }
        Ok(self
            .paths_at(i)
            .into_iter()
            .map(|mut path| {
                let (value, arg) = self.value_from(&mut path, payoff);
                TreeNode {
                    path,
                    value,
                    argmax_sigma: (!arg.is_nan()).then_some(arg),
                }
            })
            .collect())
    }

    /// `Ê[ξ]` at the root.
    pub fn expectation(&self, payoff: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.value_from(&mut vec![0.0], payoff).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::VolatilityBand;
    use approx::assert_abs_diff_eq;

    fn tree(n: usize) -> TreeLattice {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        TreeLattice::new(
            TimePartition::uniform(1.0, n).unwrap(),
            SigmaSet::endpoints(&band),
            Increments::rademacher(),
        )
        .unwrap()
    }

    #[test]
    fn martingale_and_second_moment() {
        let t = tree(3);
        assert_eq!(t.expectation(&|p| p[3]), 0.0);
        assert_abs_diff_eq!(t.expectation(&|p| p[3] * p[3]), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.expectation(&|p| -p[3] * p[3]), -0.25, epsilon = 1e-14);
        assert_eq!(t.paths_at(2).len(), 16);
    }

    #[test]
    fn conditional_at_terminal_layer_is_payoff() {
        let t = tree(2);
        for node in t.conditional(&|p| p[2].abs(), 2).unwrap() {
            assert_eq!(node.value, node.path[2].abs());
            assert!(node.argmax_sigma.is_none());
        }
        assert!(t.conditional(&|p| p[2], 3).is_err());
    }

    #[test]
    fn override_changes_levels() {
        let t = tree(1).with_level_override(Arc::new(|_, _| Some(vec![1.2])));
        assert_abs_diff_eq!(t.expectation(&|p| p[1] * p[1]), 1.44, epsilon = 1e-14);
    }
}
