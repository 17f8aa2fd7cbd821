//! Aalen-Johansen cumulative incidence and group RMTL for the two exposure
//! groups of a simulated cohort.
//!
//! cargo run --example nonparametric_cif

use rmtl::data::Cause;
use rmtl::nonparam::{aalen_johansen_cif, rmtl_group};
use rmtl::simulation::{generate_cohort, SimulationScenario};

fn main() -> rmtl::Result<()> {
    let cohort = generate_cohort(&SimulationScenario::reference(2000, 0.1, 0.5), 1)?;
    let (exposed, unexposed): (Vec<_>, Vec<_>) = cohort.records().iter().cloned().partition(|r| r.covariates[0] == 1.0);

    let cif_exposed = aalen_johansen_cif(&exposed, Cause::One)?;
    let cif_unexposed = aalen_johansen_cif(&unexposed, Cause::One)?;
    println!("{:>6} {:>12} {:>12}", "t", "F1(z1=1)", "F1(z1=0)");
    for t in [0.25, 0.5, 0.75, 1.0, 1.5] {
        println!("{t:>6} {:>12.4} {:>12.4}", cif_exposed.evaluate(t), cif_unexposed.evaluate(t));
    }

    let tau = 1.5;
    let (a, b) = (rmtl_group(&exposed, Cause::One, tau)?, rmtl_group(&unexposed, Cause::One, tau)?);
    println!("\nRMTL over [0, {tau}]: z1=1 {a:.4}, z1=0 {b:.4}, difference {:.4}", a - b);
    Ok(())
}
