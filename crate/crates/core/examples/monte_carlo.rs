//! A small Monte Carlo study of the dynamic-effect estimator. Pass the number
//! of replications as the first argument (default 100).
//!
//! cargo run --release --example monte_carlo -- 200

use rmtl::simulation::{run_monte_carlo, MonteCarloConfig, SimulationScenario};

fn main() -> rmtl::Result<()> {
    let replications = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let scenario = SimulationScenario::reference(500, 0.1, 0.5);
    let config = MonteCarloConfig::new(replications, vec![0.75, 1.0, 1.5], 2024);
    let table = run_monte_carlo(&scenario, &config)?;
    table.write_csv(std::io::stdout())?;
    eprintln!("{} replications, {} failed", table.replications, table.failures);
    Ok(())
}
