//! The L-BFGS maximizer on its own, on the negated Rosenbrock function in
//! several dimensions. Every accepted step carries a strong Wolfe certificate.
//!
//! cargo run --release --example lbfgs_rosenbrock -- [d]

use saavi::lbfgs::{lbfgs_maximize, LbfgsConfig};

fn neg_rosenbrock(x: &[f64]) -> saavi::Result<(f64, Vec<f64>)> {
    let mut f = 0.0;
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() - 1 {
        let a = x[i + 1] - x[i] * x[i];
        let b = 1.0 - x[i];
        f += 100.0 * a * a + b * b;
        g[i] += -400.0 * x[i] * a - 2.0 * b;
        g[i + 1] += 200.0 * a;
    }
    Ok((-f, g.iter().map(|v| -v).collect()))
}

fn main() -> saavi::Result<()> {
    let d: usize = std::env::args().nth(1).map_or(10, |a| a.parse().expect("d"));
    let x0: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
    let config = LbfgsConfig {
        g_tol: 1e-8,
        f_tol: 0.0,
        ..Default::default()
    };
    let report = lbfgs_maximize(neg_rosenbrock, x0, 10_000, &config)?;
    let certified = report.certificates.iter().filter(|c| c.satisfies_strong_wolfe()).count();
    println!(
        "{:?} after {} iterations, {} evaluations",
        report.status, report.iterations_used, report.evaluations
    );
    println!("f = {:.3e}, ‖∇f‖∞ = {:.3e}", -report.final_objective, report.final_grad_norm);
    println!("{certified}/{} steps satisfy both Wolfe conditions", report.certificates.len());
    let worst = report.theta_star.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    println!("max |x_i − 1| = {worst:.2e}");
    Ok(())
}
