//! Pathwise toolkit: simulated scenarios, Itô sums, quadratic variation,
//! the Skorokhod map and discrete local time.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; path `k`
//! uses stream `k`, so any single path can be regenerated on its own and a
//! bundle does not depend on how it is split across threads.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::generator::VolatilityBand;
use crate::lattice::state::{Coordinate, StateSpec};
use crate::lattice::{Increments, TimePartition};
use crate::{sgn, Error, Result};

/// Identifier of the generator algorithm, stored alongside simulated output.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed_from_u64, stream = path id)";

/// An adapted volatility rule: σ at step `i` given the observed state.
pub trait Policy: Sync {
    /// Coordinates the policy observes. The first is always `B` or a
    /// function of it; the simulator tracks all of them.
    fn coords(&self) -> Vec<Coordinate> {
        vec![Coordinate::Base]
    }

    fn sigma(&self, i: usize, state: &[f64]) -> f64;
}

impl<F: Fn(usize, &[f64]) -> f64 + Sync> Policy for F {
    fn sigma(&self, i: usize, state: &[f64]) -> f64 {
        self(i, state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub partition: Arc<TimePartition>,
    /// `B` at every time of the partition, starting at 0.
    pub values: Vec<f64>,
    /// σ used on each step.
    pub policy_trace: Vec<f64>,
}

impl SamplePath {
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn running_max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draws standardized increments from a materialized scheme.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl IncrementSampler {
    pub fn new(inc: &Increments) -> Self {
        let mut acc = 0.0;
        let cumulative = inc
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self {
            nodes: inc.nodes.clone(),
            cumulative,
        }
    }

    #[inline]
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.nodes.len() == 2 {
            return if rng.random::<u64>() & 1 == 1 {
                self.nodes[1]
            } else {
                self.nodes[0]
            };
        }
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|c| *c <= u).min(self.nodes.len() - 1);
        self.nodes[k]
    }
}

pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// Everything needed to regenerate a path from its id.
pub struct Simulator<'a> {
    pub band: VolatilityBand,
    pub partition: Arc<TimePartition>,
    pub sampler: IncrementSampler,
    pub policy: &'a dyn Policy,
    spec: StateSpec,
    pub seed: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        policy: &'a dyn Policy,
        band: VolatilityBand,
        partition: Arc<TimePartition>,
        increments: &Increments,
        seed: u64,
    ) -> Result<Self> {
        // Axes are irrelevant for the update maps; any valid grid will do.
        let spec = StateSpec::new(policy.coords(), 1.0, 1)?;
        Ok(Self {
            band,
            partition,
            sampler: IncrementSampler::new(increments),
            policy,
            spec,
            seed,
        })
    }

    pub fn path(&self, path_id: u64) -> Result<SamplePath> {
        let mut rng = path_rng(self.seed, path_id);
        let n = self.partition.steps();
        let mut values = Vec::with_capacity(n + 1);
        let mut trace = Vec::with_capacity(n);
        let mut state = vec![0.0; self.spec.dim()];
        let mut next = state.clone();
        let mut b = 0.0;
        values.push(b);
        for i in 0..n {
            let s = self.policy.sigma(i, &state);
            if !self.band.contains_sigma(s, 1e-12) {
                return Err(Error::argument(format!(
                    "policy returned sigma={s} outside the band [{}, {}] at step {i}",
                    self.band.sigma_lower(),
                    self.band.sigma_upper()
                )));
            }
            let delta = s * self.partition.dt(i).sqrt() * self.sampler.draw(&mut rng);
            self.spec.update(&state, delta, &mut next);
            std::mem::swap(&mut state, &mut next);
            b += delta;
            values.push(b);
            trace.push(s);
        }
        Ok(SamplePath {
            partition: Arc::clone(&self.partition),
            values,
            policy_trace: trace,
        })
    }
}

/// `n_paths` paths with ids `0..n_paths`.
pub fn simulate(
    policy: &dyn Policy,
    band: VolatilityBand,
    partition: &TimePartition,
    increments: &Increments,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<SamplePath>> {
    let sim = Simulator::new(policy, band, Arc::new(partition.clone()), increments, seed)?;
    (0..n_paths as u64).map(|k| sim.path(k)).collect()
}

/// Running sums `Σ_{j<i} η_j ΔB_j`, `i = 0..=n`.
pub fn ito_sum(eta: &[f64], path: &SamplePath) -> Result<Vec<f64>> {
    let n = path.values.len() - 1;
    if eta.len() != n {
        return Err(Error::argument(format!(
            "integrand has {} entries but the path has {n} steps",
            eta.len()
        )));
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (e, d) in eta.iter().zip(path.increments()) {
        acc += e * d;
        out.push(acc);
    }
    Ok(out)
}

/// `QV_i = Σ_{j<i} (ΔB_j)²`.
pub fn quadratic_variation(path: &SamplePath) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(path.increments().map(|d| {
            acc += d * d;
            acc
        }))
        .collect()
}

/// `Σ_{j<i} ΔX_j ΔY_j` for two paths on the same partition.
pub fn mutual_variation(a: &SamplePath, b: &SamplePath) -> Result<Vec<f64>> {
    if a.partition != b.partition || a.values.len() != b.values.len() {
        return Err(Error::argument(
            "mutual variation needs two paths on the same partition",
        ));
    }
    let mut acc = 0.0;
    Ok(std::iter::once(0.0)
        .chain(a.increments().zip(b.increments()).map(|(x, y)| {
            acc += x * y;
            acc
        }))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkorokhodDecomposition {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl SkorokhodDecomposition {
    /// `z = x + y`, `y` nondecreasing from 0, `z ≥ −tol` and
    /// `Σ z_{i+1} (y_{i+1} − y_i) ≤ tol`.
    pub fn satisfies_invariants(&self, tol: f64) -> bool {
        let sum_ok = self
            .x
            .iter()
            .zip(&self.y)
            .zip(&self.z)
            .all(|((x, y), z)| (x + y - z).abs() <= tol);
        let y_ok = self.y[0] == 0.0 && self.y.windows(2).all(|w| w[1] >= w[0]);
        let z_ok = self.z.iter().all(|z| *z >= -tol);
        // Increments of y happen when z returns to 0, i.e. at the later index.
        let comp: f64 = self.z[1..]
            .iter()
            .zip(self.y.windows(2))
            .map(|(z, w)| z * (w[1] - w[0]))
            .sum();
        sum_ok && y_ok && z_ok && comp <= tol
    }
}

/// `y_i = max_{j≤i}(−x_j) ∨ 0`, `z = x + y`.
pub fn skorokhod_map(x: &[f64]) -> Result<SkorokhodDecomposition> {
    if x.first() != Some(&0.0) {
        return Err(Error::argument("the Skorokhod map needs a path starting at 0"));
    }
    let mut run = 0.0f64;
    let y: Vec<f64> = x
        .iter()
        .map(|v| {
            run = run.max(-v);
            run
        })
        .collect();
    let z = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    Ok(SkorokhodDecomposition { x: x.to_vec(), y, z })
}

/// `φ_ε(x)`: `sgn` with the jump replaced by the ramp `x/ε` on `(−ε, ε)`.
#[inline]
pub fn sgn_clamp(x: f64, eps: f64) -> f64 {
    if x >= eps {
        1.0
    } else if x <= -eps {
        -1.0
    } else {
        x / eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeTrack {
    pub level: f64,
    /// Tanaka residual `|B_i − a| − |a| − Σ_{j<i} sgn(B_j − a)ΔB_j`.
    pub local_time: Vec<f64>,
    /// `Σ_{j<i} sgn(B_j − a)ΔB_j`.
    pub ito_sum: Vec<f64>,
    /// Occupation estimate `(1/2ε) Σ I_{(a−ε,a+ε)}(B_j)(ΔB_j)²` of the final value.
    pub occupation: f64,
    pub occupation_eps: f64,
}

impl LocalTimeTrack {
    pub fn terminal(&self) -> f64 {
        self.local_time[self.local_time.len() - 1]
    }

    /// Largest decrease of `L` between consecutive times (0 for a monotone track).
    pub fn max_decrease(&self) -> f64 {
        self.local_time.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Discrete local time at level `a`. `occupation_eps` defaults to
/// `2·σ_max·√mesh`, with `σ_max` the largest σ used along the path.
pub fn discrete_local_time(path: &SamplePath, level: f64, occupation_eps: Option<f64>) -> LocalTimeTrack {
    let eta: Vec<f64> = path.values[..path.values.len() - 1]
        .iter()
        .map(|b| sgn(b - level))
        .collect();
    let ito = ito_sum(&eta, path).expect("lengths match");
    let local_time = path
        .values
        .iter()
        .zip(&ito)
        .map(|(b, s)| (b - level).abs() - level.abs() - s)
        .collect();
    let eps = occupation_eps.unwrap_or_else(|| {
        let top = path.policy_trace.iter().cloned().fold(0.0, f64::max);
        2.0 * top.max(f64::MIN_POSITIVE) * path.partition.mesh().sqrt()
    });
    let occupation = path
        .values
        .windows(2)
        .filter(|w| (w[0] - level).abs() < eps)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum::<f64>()
        / (2.0 * eps);
    LocalTimeTrack {
        level,
        local_time,
        ito_sum: ito,
        occupation,
        occupation_eps: eps,
    }
}

/// CSV with columns `path_id, t, B, sigma, QV, L` (local time at 0). The
/// `sigma` column holds the σ used on the step starting at `t` and is empty
/// at the horizon.
pub fn write_bundle_csv<W: Write>(paths: &[SamplePath], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "t", "B", "sigma", "QV", "L"])?;
    for (id, p) in paths.iter().enumerate() {
        let qv = quadratic_variation(p);
        let lt = discrete_local_time(p, 0.0, None);
        for (i, t) in p.partition.times().iter().enumerate() {
            out.write_record([
                id.to_string(),
                t.to_string(),
                p.values[i].to_string(),
                p.policy_trace.get(i).map(|s| s.to_string()).unwrap_or_default(),
                qv[i].to_string(),
                lt.local_time[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path_from(values: Vec<f64>) -> SamplePath {
        let n = values.len() - 1;
        SamplePath {
            partition: Arc::new(TimePartition::uniform(1.0, n).unwrap()),
            values,
            policy_trace: vec![1.0; n],
        }
    }

    #[test]
    fn skorokhod_examples() {
        let d = skorokhod_map(&[0.0, -1.0, -0.5, 0.3]).unwrap();
        assert_eq!(d.y, vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.z, vec![0.0, 0.0, 0.5, 1.3]);
        assert!(d.satisfies_invariants(1e-12));
        let d = skorokhod_map(&[0.0, 0.5, 0.5, 2.0]).unwrap();
        assert_eq!(d.y, vec![0.0; 4]);
        assert_eq!(d.z, d.x);
        assert!(skorokhod_map(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn sgn_clamp_examples() {
        assert_eq!(sgn_clamp(2.0, 1.0), 1.0);
        assert_eq!(sgn_clamp(0.5, 1.0), 0.5);
        assert_eq!(sgn_clamp(-3.0, 0.1), -1.0);
    }

    #[test]
    fn local_time_examples() {
        let lt = discrete_local_time(&path_from(vec![0.0, 1.0, 0.0]), 0.0, Some(0.5));
        assert_eq!(lt.local_time, vec![0.0, 2.0, 2.0]);
        let lt = discrete_local_time(&path_from(vec![0.0, 1.0, 2.0, 1.5, 3.0]), -1.0, None);
        assert!(lt.local_time.iter().all(|l| l.abs() < 1e-15));
    }

    #[test]
    fn ito_sum_examples() {
        let p = path_from(vec![0.0, 0.5, -0.25, 1.0]);
        let ones = ito_sum(&[1.0; 3], &p).unwrap();
        for (a, b) in ones.iter().zip(&p.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(ito_sum(&[0.0; 3], &p).unwrap(), vec![0.0; 4]);
        assert!(ito_sum(&[1.0; 2], &p).is_err());
    }

    #[test]
    fn simulation_is_reproducible_and_checked() {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let p = TimePartition::uniform(1.0, 16).unwrap();
        let inc = Increments::rademacher();
        let a = simulate(&|_: usize, _: &[f64]| 1.0, band, &p, &inc, 7, 4).unwrap();
        let b = simulate(&|_: usize, _: &[f64]| 1.0, band, &p, &inc, 7, 4).unwrap();
        assert_eq!(a, b);
        for path in &a {
            for (d, dt) in path.increments().zip(p.times().windows(2)) {
                assert_abs_diff_eq!(d.abs(), (dt[1] - dt[0]).sqrt(), epsilon = 1e-14);
            }
        }
        assert!(simulate(&|_: usize, _: &[f64]| 1.2, band, &p, &inc, 7, 1).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = path_from(vec![0.0, 1.0, 0.0]);
        let mut buf = Vec::new();
        write_bundle_csv(&[p.clone(), p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,t,B,sigma,QV,L\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
