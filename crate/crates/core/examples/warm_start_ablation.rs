//! Warm-started rounds against rounds restarted from fresh draws, on the same
//! noise.
//!
//! cargo run --release --example warm_start_ablation -- [repetitions]

use saavi::driver::{run_ablation_warm_start, SaaConfig};
use saavi::families::FamilyKind;
use saavi::models::{logistic_regression_model, synthetic_logistic};

fn main() -> saavi::Result<()> {
    let reps: usize = std::env::args().nth(1).map_or(5, |a| a.parse().expect("repetitions"));
    let model = logistic_regression_model(synthetic_logistic(200, 5, 42, false), 1.0)?;
    let pairs = run_ablation_warm_start(&model, FamilyKind::Dense, &SaaConfig::default(), reps)?;

    println!("rep  seed   warm: iters rounds  ELBO        fresh: iters rounds  ELBO");
    for p in &pairs {
        let elbo = |r: &saavi::driver::RunResult<_>| r.trace.iter().rev().find_map(|x| x.check).map_or(f64::NAN, |c| c.elbo);
        println!(
            "{:3}  {:4}   {:11} {:6}  {:10.4}  {:12} {:6}  {:10.4}",
            p.repetition,
            p.seed,
            p.warm.total_iterations(),
            p.warm.trace.len(),
            elbo(&p.warm),
            p.fresh.total_iterations(),
            p.fresh.trace.len(),
            elbo(&p.fresh)
        );
    }
    let total = |f: fn(&saavi::driver::AblationPair) -> usize| pairs.iter().map(f).sum::<usize>();
    println!(
        "total L-BFGS iterations: warm {}, fresh {}",
        total(|p| p.warm.total_iterations()),
        total(|p| p.fresh.total_iterations())
    );
    Ok(())
}
