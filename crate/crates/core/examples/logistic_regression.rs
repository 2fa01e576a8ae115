//! Bayesian logistic regression with a dense Gaussian posterior approximation.
//!
//! With no argument the data are synthetic (200 rows, 5 features). Pass a
//! LIBSVM file to fit that instead; an intercept column is added.
//!
//! cargo run --release --example logistic_regression -- [file.libsvm]

use saavi::driver::{run_saa, SaaConfig};
use saavi::families::FamilyKind;
use saavi::models::{load_libsvm, logistic_regression_model, synthetic_logistic, LibsvmOptions};
use saavi::numerics::{SeededStream, Substream};
use saavi::objective::elbo_estimate;

fn main() -> saavi::Result<()> {
    let data = match std::env::args().nth(1) {
        Some(path) => load_libsvm(&path, &LibsvmOptions { num_features: None, add_intercept: true })?,
        None => synthetic_logistic(200, 5, 42, false),
    };
    println!("{} rows, {} features", data.len(), data.num_features());
    let model = logistic_regression_model(data, 1.0)?;

    for kind in [FamilyKind::Diagonal, FamilyKind::Dense] {
        let run = run_saa(&model, kind, &SaaConfig::default())?;
        let q = &run.theta_star;
        let elbo = elbo_estimate(&model, q, 10_000, &mut SeededStream::new(0, Substream::Eval, 0))?;
        println!(
            "{kind:>8}: ELBO {:.3} ± {:.3}  final n {}  {} iterations  {}  {:.2}s",
            elbo.mean,
            elbo.std_error,
            run.final_n(),
            run.total_iterations(),
            run.stop_reason.as_str(),
            run.total_seconds
        );
        let sd = q.scale_diag();
        let cov = q.covariance();
        for (j, m) in q.mean().iter().enumerate() {
            println!("    w[{j}] = {m:+.3}  (sd {:.3}, factor diag {:.3})", cov[(j, j)].sqrt(), sd[j]);
        }
    }
    Ok(())
}
