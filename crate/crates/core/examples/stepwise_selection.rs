//! Backward stepwise screening of time-basis terms by Wald p-value.
//!
//! cargo run --example stepwise_selection

use rmtl::estimator::{backward_stepwise, wald_table, FitOptions};
use rmtl::simulation::{generate_cohort, SimulationScenario};
use rmtl::stacking::{build_time_grid, column_name, power_label, GridConfig};
use rmtl::{Link, TimeBasis};

fn main() -> rmtl::Result<()> {
    let cohort = generate_cohort(&SimulationScenario::reference(2000, 0.1, 0.5), 5)?;
    let grid = build_time_grid(&cohort, &GridConfig::default())?;
    let result = backward_stepwise(&cohort, &grid, &TimeBasis::full(2), Link::Identity, 0.05, FitOptions::default())?;

    for (term, p) in &result.removed {
        println!("removed {}:{} (p = {p:.3})", column_name(cohort.schema(), term.column), power_label(term.power));
    }
    println!("\nretained terms:");
    for row in wald_table(&result.model) {
        println!("  {:<12} {:<4} {:>8.4} (p = {:.4})", row.variable, row.time_function, row.coefficient, row.p);
    }
    Ok(())
}
