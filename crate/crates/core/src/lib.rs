//! Black-box variational inference by sample average approximation.
//!
//! A fixed block of standard-normal noise turns the reparameterized ELBO into
//! a deterministic function of the variational parameters, which is then
//! maximized with L-BFGS and a strong Wolfe line search. A sequence of such
//! problems with doubling sample sizes, warm-started from the previous
//! solution, is run until a train/test comparison of the log-weights says the
//! solution no longer overfits the noise.
//!
//! Layout:
//!
//! - [`numerics`]: seeded streams, softplus, reductions, triangular algebra, Welch t-test
//! - [`models`]: the [`models::LatentModel`] contract, built-in targets, transforms, data loaders
//! - [`families`]: diagonal and dense Gaussian families with reparameterization gradients
//! - [`objective`]: log-weights, training objective and gradient, ELBO estimates, unboundedness construction
//! - [`lbfgs`]: two-loop L-BFGS with strong Wolfe line search (maximization form)
//! - [`driver`]: the outer sample-size loop and its convergence check
//! - [`baselines`]: Adam baseline and the method comparison protocol
//! - [`cli`]: configuration, output files and the `saavi` subcommands

pub mod baselines;
pub mod cli;
pub mod driver;
pub mod error;
pub mod families;
pub mod lbfgs;
pub mod objective;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
