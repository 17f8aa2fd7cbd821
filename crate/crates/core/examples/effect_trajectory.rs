//! Cumulative-effect trajectory of one covariate with its slope, the
//! real-time effect, read from a fixed breast cancer coefficient table.
//!
//! cargo run --example effect_trajectory -- ER=positive

use rmtl::evaluation::{effect_trajectory, RangePolicy};
use rmtl::{FittedModel, HorizonGrid};

const MODEL: &str = include_str!("../fixtures/breast_cancer_model.json");

fn main() -> rmtl::Result<()> {
    let covariate = std::env::args().nth(1).unwrap_or_else(|| "ER=positive".to_string());
    let model = FittedModel::from_json(MODEL)?;
    let grid = HorizonGrid::equally_spaced(2.5, 10.5, 9)?;
    let trajectory = effect_trajectory(&model, &covariate, grid.points(), RangePolicy::Strict)?;
    println!("{covariate}");
    println!("{:>5} {:>8} {:>18} {:>8}", "l", "beta(l)", "95% CI", "|slope|");
    for p in &trajectory.points {
        println!("{:>5} {:>8.3} [{:>7.3}, {:>7.3}] {:>8.3}", p.l, p.value, p.ci_lower, p.ci_upper, p.slope.abs());
    }
    Ok(())
}
