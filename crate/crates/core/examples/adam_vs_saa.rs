//! Adam over a step-size grid against the SAA driver on a synthetic Bayesian
//! logistic regression, reported like a results table.
//!
//! cargo run --release --example adam_vs_saa -- [repetitions]

use saavi::baselines::{compare_methods, AdamRunConfig};
use saavi::driver::SaaConfig;
use saavi::families::FamilyKind;
use saavi::models::{logistic_regression_model, synthetic_logistic};

fn fmt(v: Option<f64>) -> String {
    v.map_or("---".into(), |x| format!("{x:.3}"))
}

fn main() -> saavi::Result<()> {
    let reps: usize = std::env::args().nth(1).map_or(5, |a| a.parse().expect("repetitions"));
    let data = synthetic_logistic(200, 5, 42, false);
    let model = logistic_regression_model(data, 1.0)?;

    let adam = AdamRunConfig { seed: 1, ..Default::default() };
    let saa = SaaConfig { seed: 1, ..Default::default() };
    let cmp = compare_methods(&model, FamilyKind::Diagonal, &[0.1, 0.01, 0.001], &adam, &saa, reps)?;

    println!("{:<12} {:>12} {:>12}", "method", "median ELBO", "median s");
    for row in &cmp.table.rows {
        println!("{:<12} {:>12} {:>12}", row.method, fmt(row.median_elbo), fmt(row.median_seconds));
    }
    println!("target (min of medians): {}", fmt(cmp.table.target));
    println!("difference (adam − saa): {}", fmt(cmp.table.difference));
    println!("time ratio (adam / saa): {}", fmt(cmp.table.time_ratio));
    Ok(())
}
