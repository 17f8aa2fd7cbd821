//! Build the horizon grid and the IPCW-weighted stacked dataset, and print the
//! rows of the first two subjects.
//!
//! cargo run --example stacked_dataset

use rmtl::simulation::{generate_cohort, SimulationScenario};
use rmtl::stacking::{build_time_grid, GridConfig};
use rmtl::{build_stacked, TimeBasis};

fn main() -> rmtl::Result<()> {
    let cohort = generate_cohort(&SimulationScenario::reference(500, 0.25, 0.5), 2)?;
    let grid = build_time_grid(&cohort, &GridConfig { points: 5, ..GridConfig::default() })?;
    println!("grid: {:.3?}", grid.points());

    let stacked = build_stacked(&cohort, &grid, &TimeBasis::full(cohort.schema().width()))?;
    println!("{} rows for {} subjects", stacked.rows.len(), stacked.n_subjects());
    for j in 0..grid.len() {
        let total: f64 = stacked.rows.iter().skip(j).step_by(grid.len()).map(|r| r.weight).sum();
        println!("  l = {:.3}: total weight {total:.1}", grid.points()[j]);
    }

    let mut preview = Vec::new();
    stacked.write_csv(&mut preview)?;
    let text = String::from_utf8(preview).expect("CSV is UTF-8");
    for line in text.lines().take(1 + 2 * grid.len()) {
        println!("{line}");
    }
    Ok(())
}
