//! Predicted RMTL trajectories for three example patients from a fixed
//! coefficient table, with 95% intervals.
//!
//! cargo run --example patient_prediction

use rmtl::data::load_profiles;
use rmtl::evaluation::{predict_trajectory, RangePolicy};
use rmtl::FittedModel;

const MODEL: &str = include_str!("../fixtures/breast_cancer_model.json");
const PROFILES: &str = include_str!("../fixtures/example_patients.json");

fn main() -> rmtl::Result<()> {
    let model = FittedModel::from_json(MODEL)?;
    let horizons = [2.5, 5.0, 7.5, 10.0];
    for (name, profile) in load_profiles(PROFILES)? {
        println!("patient {name}");
        for p in predict_trajectory(&model, &profile, &horizons, RangePolicy::Strict)? {
            println!("  RMTL({:>4}) = {:.3}  [{:.3}, {:.3}]", p.l, p.rmtl, p.ci_lower, p.ci_upper);
        }
    }
    Ok(())
}
