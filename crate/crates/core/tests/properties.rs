//! Structural properties of the engines over randomly drawn inputs.

use proptest::prelude::*;
use sublin_gbm::config::RunConfig;
use sublin_gbm::generator::default_probe_pairs;
use sublin_gbm::gheat::{solve_with, PdeConfig, SpatialGrid};
use sublin_gbm::lattice::{Coordinate, DpModel, Increments, Retention, SigmaSet, TimePartition};
use sublin_gbm::pathspace::{discrete_local_time, quadratic_variation, simulate, skorokhod_map};
use sublin_gbm::{DominatedGenerator, Nonlinearity, SublinearGenerator, VolatilityBand};

/// Payoff `Σ c_k b_k(x)` over a fixed bounded basis.
fn payoff(c: &[f64]) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x: f64| {
        let basis = [
            x.abs().min(2.0),
            (2.0 * x).cos(),
            x.clamp(-1.0, 1.0),
            (x - 0.3).clamp(0.0, 1.5),
            (-x * x).exp(),
        ];
        c.iter().zip(basis).map(|(a, b)| a * b).sum()
    }
}

fn dp_value(band: VolatilityBand, f: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    DpModel::new(
        TimePartition::uniform(1.0, 8).unwrap(),
        SigmaSet::refined(&band, 3),
        Increments::gauss(4).unwrap(),
        vec![Coordinate::Base],
    )
    .unwrap()
    .solve(&|x| f(x[0]), Retention::Final)
    .unwrap()
    .value
}

fn band_strategy() -> impl Strategy<Value = VolatilityBand> {
    (0.0f64..1.0, 0.1f64..2.0).prop_map(|(r, hi)| VolatilityBand::new(r * hi, hi).unwrap())
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dp_is_sublinear(band in band_strategy(), a in coefs(), b in coefs(), lambda in 0.0f64..3.0, c in -5.0f64..5.0) {
        let f = payoff(&a);
        let g = payoff(&b);
        let ef = dp_value(band, &f);
        let eg = dp_value(band, &g);
        // sub-additivity
        prop_assert!(dp_value(band, &|x| f(x) + g(x)) <= ef + eg + 1e-12);
        // positive homogeneity
        prop_assert!((dp_value(band, &|x| lambda * f(x)) - lambda * ef).abs() <= 1e-12 * (1.0 + lambda * ef.abs()));
        // constants and translation
        prop_assert!((dp_value(band, &|_| c) - c).abs() <= 1e-12);
        prop_assert!((dp_value(band, &|x| f(x) + c) - ef - c).abs() <= 1e-12);
        // the lower expectation lies below the upper one
        prop_assert!(-dp_value(band, &|x| -f(x)) <= ef + 1e-12);
    }

    #[test]
    fn dp_is_monotone(band in band_strategy(), a in coefs(), bump in prop::collection::vec(0.0f64..1.0, 5)) {
        let f = payoff(&a);
        let g = |x: f64| f(x) + bump[0] * x.abs().min(1.0) + bump[1] * (x.sin() + 1.0) + bump[2];
        prop_assert!(dp_value(band, &f) <= dp_value(band, &g) + 1e-12);
    }

    #[test]
    fn generator_is_sublinear_and_bounded(band in band_strategy(), a in -10.0f64..10.0, b in -10.0f64..10.0, l in 0.0f64..5.0, eps in 0.0f64..1.0) {
        let g = SublinearGenerator::new(band);
        prop_assert!(g.eval_g(a + b) <= g.eval_g(a) + g.eval_g(b) + 1e-12);
        prop_assert!((g.eval_g(l * a) - l * g.eval_g(a)).abs() <= 1e-12 * (1.0 + l * a.abs()));
        prop_assert!(g.eval_g(a) >= 0.5 * band.sigma_lower_sq() * a - 1e-12);
        prop_assert!(g.eval_g(a) >= 0.5 * band.sigma_upper_sq() * a - 1e-12);
        prop_assert!((g.eval_epsilon(a, eps).unwrap() - g.eval_g(a) - 0.5 * eps * eps * a).abs() <= 1e-12);
    }

    #[test]
    fn three_segment_generator_is_dominated(band in band_strategy(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let gt = DominatedGenerator::default_three_segment(band).unwrap();
        let g = SublinearGenerator::new(band);
        prop_assert!(gt.eval_tilde(a) - gt.eval_tilde(b) <= g.eval_g(a - b) + 1e-12);
        prop_assert!(gt.check_domination(&default_probe_pairs()).unwrap().dominated);
        prop_assert!(gt.min_slope() >= 0.5 * band.sigma_lower_sq() - 1e-12);
        prop_assert!(gt.max_slope() <= 0.5 * band.sigma_upper_sq() + 1e-12);
    }

    #[test]
    fn pde_comparison_principle(a in coefs(), bump in 0.0f64..1.0) {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let g = SublinearGenerator::new(band);
        let grid = SpatialGrid::symmetric(6.0, 0.05).unwrap();
        let cfg = PdeConfig::new(0.5);
        let f = payoff(&a);
        let lo = solve_with(&g, &f, &cfg, &grid).unwrap();
        let hi = solve_with(&g, |x| f(x) + bump * (x.cos() + 1.0), &cfg, &grid).unwrap();
        prop_assert!(lo.values.iter().zip(&hi.values).all(|(l, h)| *l <= *h + 1e-12));
    }

    #[test]
    fn rademacher_paths_have_exact_quadratic_variation(band in band_strategy(), seed in any::<u64>(), n in 1usize..200) {
        let lo = band.sigma_lower();
        let hi = band.sigma_upper();
        // an adapted but erratic volatility choice
        let policy = move |i: usize, s: &[f64]| lo + (hi - lo) * (0.5 + 0.5 * (7.0 * s[0] + i as f64).sin());
        let p = TimePartition::uniform(1.0, n).unwrap();
        for path in simulate(&policy, band, &p, &Increments::rademacher(), seed, 4).unwrap() {
            let qv = quadratic_variation(&path);
            let t = qv[qv.len() - 1];
            prop_assert!(t >= band.sigma_lower_sq() - 1e-12 && t <= band.sigma_upper_sq() + 1e-12);
            let traced: f64 = path.policy_trace.iter().map(|s| s * s / n as f64).sum();
            prop_assert!((t - traced).abs() <= 1e-12);
        }
    }

    #[test]
    fn skorokhod_and_tanaka(seed in any::<u64>(), n in 2usize..300) {
        let band = VolatilityBand::new(0.25, 1.0).unwrap();
        let p = TimePartition::uniform(1.0, n).unwrap();
        let policy = |_: usize, _: &[f64]| 0.8;
        let path = simulate(&policy, band, &p, &Increments::gauss(6).unwrap(), seed, 1).unwrap().remove(0);
        let d = skorokhod_map(&path.values).unwrap();
        prop_assert!(d.satisfies_invariants(1e-12));
        // discrete Tanaka: |B_T| = Σ sgn(B_i)ΔB_i + L_T(0), with L nondecreasing
        let lt = discrete_local_time(&path, 0.0, None);
        let m: f64 = path.values.windows(2).map(|w| sublin_gbm::sgn(w[0]) * (w[1] - w[0])).sum();
        prop_assert!((path.terminal().abs() - m - lt.terminal()).abs() <= 1e-10);
        prop_assert!(lt.max_decrease() <= 1e-12);
    }

    #[test]
    fn config_round_trips(band in band_strategy(), dx in 0.005f64..0.1, seed in any::<u64>(), steps in 1usize..5000) {
        let mut cfg = RunConfig { band, ..RunConfig::default() };
        cfg.pde.dx = dx;
        cfg.mc.seed = seed;
        cfg.lattice.steps = steps;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
