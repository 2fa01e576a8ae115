//! With fewer noise rows than dimensions the dense-family training objective
//! has no maximum: along an explicit path it grows like c + ln λ.
//!
//! cargo run --release --example unboundedness -- [d] [n]

use saavi::models::random_gaussian_target;
use saavi::numerics::Substream;
use saavi::objective::{training_objective, unbounded_direction, NoiseBlock};

fn main() -> saavi::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map_or(5, |a| a.parse().expect("d"));
    let n: usize = args.next().map_or(d - 1, |a| a.parse().expect("n"));
    assert!(n < d, "needs n < d");

    let model = random_gaussian_target(d, 0)?;
    let noise = NoiseBlock::draw(0, Substream::Train, 1, n, d);
    let path = unbounded_direction(&noise)?;
    println!("direction c with c·ε_i = 0 for all rows (residual {:.1e}), pivot {}", path.residual, path.pivot);
    println!("{:>10} {:>14} {:>14}", "lambda", "objective", "obj - ln λ");
    for k in 0..8 {
        let lambda = (2.0 * k as f64).exp();
        let obj = training_objective(&model, &path.make_theta(lambda)?, &noise)?;
        println!("{lambda:10.3e} {obj:14.6} {:14.9}", obj - lambda.ln());
    }
    Ok(())
}
