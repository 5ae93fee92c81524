//! Engines against oracles written independently of the library.

#![allow(clippy::type_complexity)]

mod common;

use approx::assert_abs_diff_eq;
use common::{brute_force, gauss_mean, reachable};
use sublin_gbm::gheat::{g_expectation, TestFunction};
use sublin_gbm::lattice::{
    conditional_expectation, Coordinate, DpModel, Increments, Retention, SigmaSet, TimePartition, TreeLattice,
};
use sublin_gbm::verify::KrylovG;
use sublin_gbm::{SublinearGenerator, VolatilityBand};

fn band() -> VolatilityBand {
    VolatilityBand::new(0.25, 1.0).unwrap()
}

fn payoffs() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("cos3", |x| (3.0 * x).cos()),
        ("abs", f64::abs),
        ("call", |x| (x - 0.2).max(0.0)),
        ("neg_square", |x| -x * x),
        ("wave", |x| (2.0 * x).sin() + 0.3 * x * x),
    ]
}

#[test]
fn grid_dp_matches_exhaustive_adapted_max() {
    let b = band();
    for n in 1..=4 {
        let dt = 1.0 / n as f64;
        let p = TimePartition::uniform(1.0, n).unwrap();
        for (name, phi) in payoffs() {
            for i in 0..n {
                let dp =
                    conditional_expectation(&phi, &p, &SigmaSet::endpoints(&b), &Increments::rademacher(), i).unwrap();
                for x in reachable(i, dt, 0.5, 1.0) {
                    let oracle = brute_force(&phi, x, n - i, dt, 0.5, 1.0);
                    let got = dp.value_at(i, &[x]).unwrap();
                    assert!(
                        (got - oracle).abs() <= 1e-12,
                        "{name} n={n} i={i} x={x}: {got} vs {oracle}"
                    );
                }
            }
        }
    }
}

#[test]
fn history_tree_matches_exhaustive_adapted_max() {
    let b = band();
    let p = TimePartition::uniform(1.0, 3).unwrap();
    let tree = TreeLattice::new(p, SigmaSet::endpoints(&b), Increments::rademacher()).unwrap();
    for (name, phi) in payoffs() {
        let v = tree.expectation(&|path: &[f64]| phi(path[path.len() - 1]));
        let oracle = brute_force(&phi, 0.0, 3, 1.0 / 3.0, 0.5, 1.0);
        assert!((v - oracle).abs() <= 1e-12, "{name}: {v} vs {oracle}");
    }
}

#[test]
fn degenerate_band_is_gaussian() {
    // σ̲ = σ̄: the PDE is the classical heat equation.
    let b = VolatilityBand::degenerate(0.64).unwrap();
    let g = SublinearGenerator::new(b);
    for phi in TestFunction::battery() {
        let pde = g_expectation(&g, &phi, 1.0, 0.0, 0.01).unwrap();
        let exact = gauss_mean(|x| phi.eval(x), 0.8, 1.0);
        assert!((pde - exact).abs() < 1e-3, "{phi}: {pde} vs {exact}");
    }
}

#[test]
fn convex_and_concave_payoffs_sit_at_the_band_edges() {
    let g = SublinearGenerator::new(band());
    let convex = g_expectation(&g, &TestFunction::clamped_abs(), 1.0, 0.0, 0.01).unwrap();
    assert_abs_diff_eq!(convex, gauss_mean(|x| x.abs().min(10.0), 1.0, 1.0), epsilon = 1e-3);
    let concave = g_expectation(&g, &TestFunction::neg_clamped_square(), 1.0, 0.0, 0.01).unwrap();
    assert_abs_diff_eq!(concave, gauss_mean(|x| -(x * x).min(100.0), 0.5, 1.0), epsilon = 1e-3);
}

#[test]
fn dp_of_running_max_is_reflected_gaussian_when_degenerate() {
    // P(S_1 ∈ dm) = 2 φ(m) dm for standard Brownian motion.
    let b = VolatilityBand::degenerate(1.0).unwrap();
    let p = TimePartition::uniform(1.0, 4096).unwrap();
    let dp = DpModel::new(
        p,
        SigmaSet::endpoints(&b),
        Increments::rademacher(),
        vec![Coordinate::Base, Coordinate::RunningMax],
    )
    .unwrap()
    .solve(&|x| x[1].min(1.0), Retention::Final)
    .unwrap();
    let exact = 2.0 * gauss_mean(|x| if x > 0.0 { x.min(1.0) } else { 0.0 }, 1.0, 1.0);
    // the discrete maximum lags the continuous one by about 0.5826·σ√dt
    assert!((dp.value - exact).abs() < 1.2e-2, "{} vs {exact}", dp.value);
}

#[test]
fn krylov_integrals_match_quadrature() {
    for g in [
        KrylovG::Indicator {
            half_width: 0.5,
            p: 2.0,
        },
        KrylovG::TruncatedPower {
            exponent: 0.25,
            cap: 10.0,
            support: 1.0,
            p: 2.0,
        },
        KrylovG::Cauchy { p: 2.0 },
    ] {
        let p = g.p();
        // substitution x = tan(u) for the whole line; the singular power term is
        // integrated in y = |x|^{1/4} coordinates instead.
        let numeric = match g {
            KrylovG::TruncatedPower { .. } => {
                let m = 200_000;
                let cap_at = 10f64.powi(-4);
                let h = 1.0 / m as f64;
                (0..m)
                    .map(|k| {
                        let y = (k as f64 + 0.5) * h;
                        let x = y.powi(4);
                        let v = if x < cap_at { 10.0 } else { x.powf(-0.25) };
                        2.0 * v.powf(p) * 4.0 * y.powi(3) * h
                    })
                    .sum::<f64>()
            }
            _ => {
                let m = 400_000;
                let h = std::f64::consts::PI / m as f64;
                (0..m)
                    .map(|k| {
                        let u = -std::f64::consts::FRAC_PI_2 + (k as f64 + 0.5) * h;
                        let x = u.tan();
                        g.eval(x).abs().powf(p) / u.cos().powi(2) * h
                    })
                    .sum::<f64>()
            }
        };
        let closed = g.lp_integral().unwrap();
        assert!(
            (numeric - closed).abs() < 2e-3 * closed.max(1.0),
            "{g}: {numeric} vs {closed}"
        );
    }
}
