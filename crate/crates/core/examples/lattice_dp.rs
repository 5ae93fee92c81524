//! Grid dynamic programming for a terminal payoff and for the drawdown
//! S_T − B_T, with the exact history tree as a cross-check on a short horizon.

use sublin_gbm::lattice::{Coordinate, DpModel, Increments, Retention, SigmaSet, TimePartition, TreeLattice};
use sublin_gbm::VolatilityBand;

fn main() -> sublin_gbm::Result<()> {
    let band = VolatilityBand::new(0.25, 1.0)?;
    let sigmas = SigmaSet::refined(&band, 5);

    let partition = TimePartition::uniform(1.0, 512)?;
    let abs = DpModel::new(
        partition.clone(),
        sigmas.clone(),
        Increments::rademacher(),
        vec![Coordinate::Base],
    )?
    .solve(&|x| x[0].abs(), Retention::Final)?;
    let drawdown = DpModel::new(
        partition,
        sigmas.clone(),
        Increments::rademacher(),
        vec![Coordinate::Drawdown],
    )?
    .solve(&|x| x[0], Retention::Final)?;
    println!("E|B_1|       = {:.6}", abs.value);
    println!("E[S_1 - B_1] = {:.6}", drawdown.value);

    let short = TimePartition::uniform(1.0, 4)?;
    let tree = TreeLattice::new(short.clone(), sigmas.clone(), Increments::rademacher())?;
    let tree_value = tree.expectation(&|path| path.iter().fold(0.0f64, |m, &x| m.max(x)) - path[path.len() - 1]);
    let dp_value = DpModel::new(short, sigmas, Increments::rademacher(), vec![Coordinate::Drawdown])?
        .solve(&|x| x[0], Retention::Final)?
        .value;
    println!("4 steps: tree {tree_value:.12}  dp {dp_value:.12}");
    Ok(())
}
