//! Fit the dynamic-effect model on a simulated cohort and print the Wald
//! table next to the true cumulative effects.
//!
//! cargo run --example dynamic_fit

use rmtl::estimator::{wald_table, write_wald_csv};
use rmtl::evaluation::{evaluate_effect, RangePolicy};
use rmtl::simulation::{generate_cohort, true_coefficients, SimulationScenario};
use rmtl::{build_stacked, fit, FitOptions, HorizonGrid, Link, TimeBasis};

fn main() -> rmtl::Result<()> {
    let scenario = SimulationScenario::reference(4000, 0.1, 0.5);
    let cohort = generate_cohort(&scenario, 3)?;
    let grid = HorizonGrid::equally_spaced(0.25, 1.5, 20)?;
    let stacked = build_stacked(&cohort, &grid, &TimeBasis::full(2))?;
    let model = fit(&stacked, Link::Identity, FitOptions::default())?;

    write_wald_csv(&wald_table(&model), std::io::stdout())?;

    println!("\n{:>5} {:>28} {:>28} {:>28}", "l", "beta0 est (truth)", "beta1 est (truth)", "beta2 est (truth)");
    for l in [0.75, 1.0, 1.5] {
        let truth = true_coefficients(&scenario, l);
        let mut cells = Vec::new();
        for (name, t) in ["(Intercept)", "z1", "z2"].iter().zip(truth) {
            let e = evaluate_effect(&model, name, l, RangePolicy::Strict)?;
            cells.push(format!("{:.3} +/- {:.3} ({t:.3})", e.value, 1.96 * e.se));
        }
        println!("{l:>5} {:>28} {:>28} {:>28}", cells[0], cells[1], cells[2]);
    }
    Ok(())
}
