//! Train on one simulated cohort, then score C-index and prediction error on
//! an independent cohort at several horizons.
//!
//! cargo run --example external_validation

use rmtl::evaluation::validate;
use rmtl::simulation::{CohortGenerator, SimulationScenario};
use rmtl::stacking::{build_time_grid, GridConfig};
use rmtl::{build_stacked, fit, FitOptions, Link, TimeBasis};

fn main() -> rmtl::Result<()> {
    let generator = CohortGenerator::new(&SimulationScenario::reference(2000, 0.1, 0.5))?;
    let (train, test) = (generator.generate(10)?, generator.generate(11)?);
    let grid = build_time_grid(&train, &GridConfig::default())?;
    let model = fit(&build_stacked(&train, &grid, &TimeBasis::full(2))?, Link::Identity, FitOptions::default())?;

    println!("{:>6} {:>9} {:>17}", "l", "C-index", "prediction error");
    for point in validate(&model, &test, &[0.5, 0.75, 1.0, 1.25])? {
        println!("{:>6} {:>9.4} {:>17.4}", point.l, point.c_index, point.prediction_error);
    }
    Ok(())
}
