//! Monte Carlo under explicit volatility policies is a lower bound for the
//! G-expectation; the policy extracted from the DP nearly attains it.

use sublin_gbm::envelope::{extract_policy, sup_over_policies, ControlPolicy};
use sublin_gbm::lattice::{Coordinate, DpModel, Increments, Retention, SigmaSet, TimePartition};
use sublin_gbm::pathspace::SamplePath;
use sublin_gbm::VolatilityBand;

fn main() -> sublin_gbm::Result<()> {
    let band = VolatilityBand::new(0.25, 1.0)?;
    let partition = TimePartition::uniform(1.0, 128)?;
    let inc = Increments::rademacher();
    // a payoff that is neither convex nor concave, so neither constant σ is optimal
    let phi = |x: f64| (x * 3.0).cos();
    let dp = DpModel::new(
        partition.clone(),
        SigmaSet::endpoints(&band),
        inc.clone(),
        vec![Coordinate::Base],
    )?
    .solve(&|x| phi(x[0]), Retention::Policy)?;
    let family = vec![
        (
            "sigma_lower".to_string(),
            ControlPolicy::Constant {
                sigma: band.sigma_lower(),
            },
        ),
        (
            "sigma_upper".to_string(),
            ControlPolicy::Constant {
                sigma: band.sigma_upper(),
            },
        ),
        ("extracted".to_string(), extract_policy(&dp)?),
    ];
    let report = sup_over_policies(
        &|p: &SamplePath| phi(p.terminal()),
        &family,
        band,
        &partition,
        &inc,
        50_000,
        3,
        Some(dp.value),
    )?;
    for row in &report.per_policy {
        println!(
            "{:<12} {:+.5} ± {:.5}",
            row.policy, row.estimate.value, row.estimate.stderr
        );
    }
    println!("dp value     {:+.5}", dp.value);
    println!("sandwich holds: {:?}", report.sandwich_holds(0.0));
    Ok(())
}
