//! Simulate paths under a bang-bang volatility policy and compute their
//! quadratic variation, Skorokhod reflection and local time at 0.

use sublin_gbm::envelope::ControlPolicy;
use sublin_gbm::lattice::{Increments, TimePartition};
use sublin_gbm::pathspace::{discrete_local_time, quadratic_variation, simulate, skorokhod_map};
use sublin_gbm::VolatilityBand;

fn main() -> sublin_gbm::Result<()> {
    let band = VolatilityBand::new(0.25, 1.0)?;
    let policy = ControlPolicy::parse("bangbang:0.3", &band)?;
    let partition = TimePartition::uniform(1.0, 1000)?;
    let bundle = simulate(&policy, band, &partition, &Increments::gauss(8)?, 42, 5)?;
    for (k, p) in bundle.iter().enumerate() {
        let qv = quadratic_variation(p);
        let neg: Vec<f64> = p.values.iter().map(|x| -x).collect();
        let refl = skorokhod_map(&neg)?;
        let lt = discrete_local_time(p, 0.0, None);
        println!(
            "path {k}: B_T {:+.4}  <B>_T {:.4}  S_T - B_T {:.4}  L_T(0) {:.4}",
            p.terminal(),
            qv[qv.len() - 1],
            refl.z[refl.z.len() - 1],
            lt.terminal()
        );
    }
    Ok(())
}
