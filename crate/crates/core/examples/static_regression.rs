//! Static-effect RMTL regression at a single horizon tau, the one-point
//! special case of the dynamic model.
//!
//! cargo run --example static_regression

use rmtl::estimator::{fit_static, wald_table};
use rmtl::simulation::{generate_cohort, true_coefficients, SimulationScenario};
use rmtl::Link;

fn main() -> rmtl::Result<()> {
    let scenario = SimulationScenario::reference(3000, 0.1, 0.5);
    let cohort = generate_cohort(&scenario, 4)?;
    let tau = 1.0;
    let model = fit_static(&cohort, tau, Link::Identity)?;
    let truth = true_coefficients(&scenario, tau);
    println!("static regression at tau = {tau}");
    for (row, t) in wald_table(&model).iter().zip(truth) {
        println!(
            "{:<12} coef {:>8.4}  se {:.4}  z {:>7.2}  p {:.4}  (truth {t:.4})",
            row.variable, row.coefficient, row.se, row.z, row.p
        );
    }
    Ok(())
}
