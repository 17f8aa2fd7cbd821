//! Closed-form cumulative incidences, subdistribution hazard ratios and the
//! numerically integrated true RMTL coefficients of the reference scenario.
//!
//! cargo run --example true_values

use rmtl::simulation::{calibrate_censoring, cause1_probability, shr, SimulationScenario, TrueValues};

fn main() -> rmtl::Result<()> {
    let scenario = SimulationScenario::reference(500, 0.1, 0.5);
    let truth = TrueValues::new(&scenario);

    println!("P(eps=1 | z=(0,0)) = {:.4}", cause1_probability(2.88, -1.7));
    println!("F1(0.75 | z=(0,0)) = {:.4}", truth.cif1(0.75, false, false));

    println!("\n{:>5} {:>10} {:>10}", "t", "sHR(z1)", "sHR(z2)");
    for t in [0.0, 0.5, 1.0, 1.3, 2.0] {
        println!("{t:>5} {:>10.4} {:>10.4}", shr(&scenario, 1, t)?, shr(&scenario, 2, t)?);
    }

    println!("\n{:>5} {:>9} {:>9} {:>9}", "l", "beta0", "beta1", "beta2");
    for l in [0.75, 1.0, 1.5] {
        let b = truth.coefficients(l);
        println!("{l:>5} {:>9.4} {:>9.4} {:>9.4}", b[0], b[1], b[2]);
    }

    println!("\nuniform censoring bound for a 10% target: {:.4}", calibrate_censoring(&scenario)?);
    Ok(())
}
