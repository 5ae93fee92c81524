//! Augmented state coordinates for grid dynamic programming.
//!
//! Each coordinate has an update map `x' = F(x, δ)` driven by the increment
//! `δ` of `B`. Some coordinates read another one (the running maximum reads
//! `B`), and the `StateSpec` records those dependencies.

use std::fmt;
use std::sync::Arc;

use crate::{sgn, Error, Result};

/// Custom update: `(old state, δ) -> new value of this coordinate`.
pub type UpdateFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Uniform axis `min + i·step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(min: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || len < 2 || !min.is_finite() {
            return Err(Error::config(format!(
                "axis needs step > 0 and at least 2 nodes, got step={step}, len={len}"
            )));
        }
        Ok(Self { min, step, len })
    }

    /// `[-reach·step, reach·step]`.
    pub fn symmetric(step: f64, reach: usize) -> Self {
        Self {
            min: -(reach as f64) * step,
            step,
            len: 2 * reach + 1,
        }
    }

    /// `[0, reach·step]`.
    pub fn nonnegative(step: f64, reach: usize) -> Self {
        Self {
            min: 0.0,
            step,
            len: reach + 1,
        }
    }

    /// Node value. Axes whose minimum is a multiple of the step are computed
    /// as `k·step` with integer `k`, so symmetric axes are exactly symmetric.
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        let k0 = self.min / self.step;
        let r = k0.round();
        if (k0 - r).abs() < 1e-9 {
            (i as f64 + r) * self.step
        } else {
            self.min + i as f64 * self.step
        }
    }

    pub fn max(&self) -> f64 {
        self.value(self.len - 1)
    }

    /// Lower node and interpolation fraction, clamped to the axis. Fractions
    /// within `1e-9` of a node snap to it.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.min) / self.step;
        if pos <= 0.0 {
            return (0, 0.0);
        }
        let last = (self.len - 1) as f64;
        if pos >= last {
            return (self.len - 1, 0.0);
        }
        let r = pos.round();
        if (pos - r).abs() < 1e-9 {
            return (r as usize, 0.0);
        }
        let i = pos.floor();
        (i as usize, pos - i)
    }

    /// Exact node index of `x`, if `x` is a node.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let pos = (x - self.min) / self.step;
        let r = pos.round();
        ((pos - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.len).then_some(r as usize)
    }
}

#[derive(Clone)]
pub enum Coordinate {
    /// `B' = B + δ`.
    Base,
    /// `S' = max(S, B + δ)`; needs [`Coordinate::Base`].
    RunningMax,
    /// Tanaka accumulator at level `a`:
    /// `L' = L + |B+δ−a| − |B−a| − sgn(B−a)·δ`; needs [`Coordinate::Base`].
    Tanaka { level: f64 },
    /// Drawdown `Y = S − B`: `Y' = (Y − δ)⁺`.
    Drawdown,
    /// Running maximum carried alongside the drawdown: `S' = S + (δ − Y)⁺`;
    /// needs [`Coordinate::Drawdown`].
    DrawdownMax,
    /// `R = |B|`: `R' = |R + δ|`.
    Reflected,
    /// Local time at 0 carried alongside `R`: `L' = L + 2(R + δ)⁻`; needs
    /// [`Coordinate::Reflected`].
    ReflectedLocalTime,
    /// `M' = M + sgn(B)·δ`; needs [`Coordinate::Base`].
    SgnIntegral,
    Custom {
        name: String,
        update: UpdateFn,
        lipschitz: f64,
        axis: Axis,
    },
}

impl fmt::Debug for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl Coordinate {
    pub fn name(&self) -> String {
        match self {
            Coordinate::Base => "B".into(),
            Coordinate::RunningMax => "S".into(),
            Coordinate::Tanaka { level } => format!("L({level})"),
            Coordinate::Drawdown => "Y".into(),
            Coordinate::DrawdownMax => "S".into(),
            Coordinate::Reflected => "R".into(),
            Coordinate::ReflectedLocalTime => "L".into(),
            Coordinate::SgnIntegral => "M".into(),
            Coordinate::Custom { name, .. } => name.clone(),
        }
    }

    /// Lipschitz constant of the update in `δ`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Coordinate::Tanaka { .. } | Coordinate::ReflectedLocalTime => 2.0,
            Coordinate::Custom { lipschitz, .. } => *lipschitz,
            _ => 1.0,
        }
    }

    fn requires(&self) -> Option<fn(&Coordinate) -> bool> {
        match self {
            Coordinate::RunningMax | Coordinate::Tanaka { .. } | Coordinate::SgnIntegral => {
                Some(|c| matches!(c, Coordinate::Base))
            }
            Coordinate::DrawdownMax => Some(|c| matches!(c, Coordinate::Drawdown)),
            Coordinate::ReflectedLocalTime => Some(|c| matches!(c, Coordinate::Reflected)),
            _ => None,
        }
    }

    fn signed(&self) -> bool {
        matches!(self, Coordinate::Base | Coordinate::SgnIntegral)
    }
}

#[derive(Debug, Clone)]
pub struct StateSpec {
    coords: Vec<Coordinate>,
    axes: Vec<Axis>,
    deps: Vec<usize>,
}

impl StateSpec {
    /// Builds axes of step `h` reaching `reach` nodes from 0: symmetric for
    /// `B` and `M`, nonnegative otherwise. Custom coordinates bring their own.
    pub fn new(coords: Vec<Coordinate>, h: f64, reach: usize) -> Result<Self> {
        let axes = coords
            .iter()
            .map(|c| match c {
                Coordinate::Custom { axis, .. } => *axis,
                c if c.signed() => Axis::symmetric(h, reach),
                _ => Axis::nonnegative(h, reach),
            })
            .collect();
        Self::with_axes(coords, axes)
    }

    pub fn with_axes(coords: Vec<Coordinate>, axes: Vec<Axis>) -> Result<Self> {
        if coords.is_empty() || coords.len() != axes.len() {
            return Err(Error::config(
                "state spec needs one axis per coordinate and at least one coordinate",
            ));
        }
        let mut deps = Vec::with_capacity(coords.len());
        for (k, c) in coords.iter().enumerate() {
            let dep = match c.requires() {
                Some(pred) => coords
                    .iter()
                    .position(pred)
                    .ok_or_else(|| Error::config(format!("coordinate {} needs a companion coordinate", c.name())))?,
                None => k,
            };
            deps.push(dep);
        }
        for (c, a) in coords.iter().zip(&axes) {
            if a.index_of(0.0).is_none() {
                return Err(Error::config(format!("axis of {} must contain 0 as a node", c.name())));
            }
        }
        Ok(Self { coords, axes, deps })
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn n_states(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn names(&self) -> Vec<String> {
        self.coords.iter().map(|c| c.name()).collect()
    }

    /// Row-major flattening, last axis fastest.
    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.len + i)
    }

    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.axes.len()).rev() {
            out[k] = flat % self.axes[k].len;
            flat /= self.axes[k].len;
        }
    }

    pub fn state_of(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unflatten(flat, &mut idx);
        idx.iter().zip(&self.axes).map(|(i, a)| a.value(*i)).collect()
    }

    /// Flat index of the all-zero initial state.
    pub fn origin(&self) -> usize {
        let idx: Vec<usize> = self.axes.iter().map(|a| a.index_of(0.0).expect("checked")).collect();
        self.flatten(&idx)
    }

    pub fn update(&self, x: &[f64], delta: f64, out: &mut [f64]) {
        for (k, c) in self.coords.iter().enumerate() {
            let v = x[k];
            let d = x[self.deps[k]];
            out[k] = match c {
                Coordinate::Base => v + delta,
                Coordinate::RunningMax => v.max(d + delta),
                Coordinate::Tanaka { level } => {
                    v + (d + delta - level).abs() - (d - level).abs() - sgn(d - level) * delta
                }
                Coordinate::Drawdown => (v - delta).max(0.0),
                Coordinate::DrawdownMax => v + (delta - d).max(0.0),
                Coordinate::Reflected => (v + delta).abs(),
                Coordinate::ReflectedLocalTime => v + 2.0 * (-(d + delta)).max(0.0),
                Coordinate::SgnIntegral => v + sgn(d) * delta,
                Coordinate::Custom { update, .. } => update(x, delta),
            };
        }
    }

    /// Multilinear interpolation stencil of a point: `(flat index, weight)`
    /// pairs with zero weights dropped.
    pub fn stencil(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.push((0, 1.0));
        for (k, a) in self.axes.iter().enumerate() {
            let (i, frac) = a.locate(x[k]);
            let n = out.len();
            for e in 0..n {
                let (flat, w) = out[e];
                if frac == 0.0 {
                    out[e] = (flat * a.len + i, w);
                } else {
                    out[e] = (flat * a.len + i, w * (1.0 - frac));
                    out.push((flat * a.len + i + 1, w * frac));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn updates() {
        let spec = StateSpec::new(
            vec![
                Coordinate::Base,
                Coordinate::RunningMax,
                Coordinate::Tanaka { level: 0.0 },
                Coordinate::SgnIntegral,
            ],
            0.5,
            8,
        )
        .unwrap();
        let mut out = [0.0; 4];
        spec.update(&[0.0, 0.0, 0.0, 0.0], 1.0, &mut out);
        // sgn(0) = -1: L' = |1| - 0 + 1 = 2, M' = -1.
        assert_eq!(out, [1.0, 1.0, 2.0, -1.0]);
        spec.update(&[1.0, 1.0, 2.0, -1.0], -1.0, &mut out);
        assert_eq!(out, [0.0, 1.0, 2.0, -2.0]);
    }

    #[test]
    fn reduced_updates() {
        let spec = StateSpec::new(vec![Coordinate::Drawdown, Coordinate::DrawdownMax], 0.5, 8).unwrap();
        let mut out = [0.0; 2];
        spec.update(&[0.5, 1.0], 1.0, &mut out);
        assert_eq!(out, [0.0, 1.5]);
        let spec = StateSpec::new(vec![Coordinate::Reflected, Coordinate::ReflectedLocalTime], 0.5, 8).unwrap();
        spec.update(&[0.5, 0.0], -1.5, &mut out);
        assert_eq!(out, [1.0, 2.0]);
    }

    #[test]
    fn missing_dependency() {
        assert!(StateSpec::new(vec![Coordinate::RunningMax], 0.5, 4).is_err());
        assert!(StateSpec::new(vec![Coordinate::ReflectedLocalTime, Coordinate::Base], 0.5, 4).is_err());
    }

    #[test]
    fn stencil_weights() {
        let spec = StateSpec::new(vec![Coordinate::Base, Coordinate::RunningMax], 1.0, 2).unwrap();
        let mut st = Vec::new();
        spec.stencil(&[0.25, 1.5], &mut st);
        let total: f64 = st.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(st.len(), 4);
        spec.stencil(&[-5.0, 0.0], &mut st);
        assert_eq!(st, vec![(0, 1.0)]);
    }
}
