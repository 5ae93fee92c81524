//! Nested G̃ expectations of |B_T| and of the drawdown S_T − B_T under the
//! default three-segment dominated generator.

use sublin_gbm::lattice::{Coordinate, Retention, TildeModel, TimePartition};
use sublin_gbm::{DominatedGenerator, VolatilityBand};

fn main() -> sublin_gbm::Result<()> {
    let band = VolatilityBand::new(0.25, 1.0)?;
    let g = DominatedGenerator::default_three_segment(band)?;
    println!("breakpoints {:?}, slopes {:?}", g.breakpoints(), g.slopes());
    let partition = TimePartition::uniform(1.0, 128)?;
    for (name, coord) in [("|B_T|", Coordinate::Reflected), ("S_T - B_T", Coordinate::Drawdown)] {
        let phi = |x: &[f64]| x[0].min(1.0);
        let v = TildeModel::new(partition.clone(), g.clone(), vec![coord])?.solve(&phi, Retention::Final)?;
        println!("E~[min({name}, 1)] = {:.6}", v.value);
    }
    Ok(())
}
