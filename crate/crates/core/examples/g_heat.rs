//! Solve the G-heat equation for three payoffs next to the classical values
//! at each end of the band. Only the non-convex, non-concave cosine beats both.

use sublin_gbm::gheat::{g_expectation, TestFunction};
use sublin_gbm::quadrature::normal_expectation;
use sublin_gbm::{SublinearGenerator, VolatilityBand};

fn main() -> sublin_gbm::Result<()> {
    let band = VolatilityBand::new(0.25, 1.0)?;
    let g = SublinearGenerator::new(band);
    for phi in [
        TestFunction::clamped_abs(),
        TestFunction::neg_clamped_square(),
        "cosine:2".parse()?,
    ] {
        let v = g_expectation(&g, &phi, 1.0, 0.0, 0.01)?;
        let lo = normal_expectation(|x| phi.eval(x), band.sigma_lower(), 1.0);
        let hi = normal_expectation(|x| phi.eval(x), band.sigma_upper(), 1.0);
        println!("{phi:<22} G-heat {v:+.6}   at sigma_lower {lo:+.6}   at sigma_upper {hi:+.6}");
    }
    Ok(())
}
