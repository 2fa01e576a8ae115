//! Analytic training-objective gradients against central differences for
//! every built-in model and both families.
//!
//! cargo run --release --example gradient_check

use saavi::cli::check_gradients_with;
use saavi::families::{FamilyKind, VariationalParams};
use saavi::models::{
    apply_transform_stack, exponential_model, funnel_model, logistic_regression_model, random_gaussian_target,
    synthetic_logistic, Bijector, LatentModel, Transform,
};
use saavi::objective::{training_gradient, NoiseBlock};

fn main() -> saavi::Result<()> {
    let models: Vec<Box<dyn LatentModel>> = vec![
        Box::new(random_gaussian_target(6, 0)?),
        Box::new(funnel_model(4)?),
        Box::new(apply_transform_stack(exponential_model(3, 2.0)?, &[Transform::new(Bijector::Exp, vec![0, 1, 2])])?),
        Box::new(logistic_regression_model(synthetic_logistic(100, 8, 1, true), 1.0)?),
    ];
    let grad = |m: &dyn LatentModel, p: &VariationalParams, n: &NoiseBlock| training_gradient(m, p, n);
    for model in &models {
        for kind in [FamilyKind::Diagonal, FamilyKind::Dense] {
            let report = check_gradients_with(model.as_ref(), kind, 20, 0, &grad)?;
            let blocks: Vec<String> = report.blocks.iter().map(|(b, e)| format!("{b} {e:.1e}")).collect();
            println!(
                "{:<20} {kind:>8}  {}  {}",
                model.name(),
                blocks.join("  "),
                if report.pass() { "ok" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
