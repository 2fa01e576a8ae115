//! Target models: the log joint density `ln p(z, x)` and its gradient on an
//! unconstrained latent space.

mod data;
mod funnel;
mod gaussian;
mod logistic;
mod transform;

use std::sync::Arc;

pub use data::{
    load_csv, load_libsvm, parse_csv, parse_libsvm, synthetic_logistic, write_csv, write_libsvm,
    CsvOptions, Dataset, LibsvmOptions,
};
pub use funnel::{funnel_model, Funnel};
pub use gaussian::{gaussian_conjugate_model, random_gaussian_target, GaussianConjugate};
pub use logistic::{logistic_regression_model, LogisticRegression};
pub use transform::{apply_transform_stack, exponential_model, Bijector, Exponential, Transform, TransformedModel};

/// A differentiable log joint density over `Rᵈ`.
///
/// Implementations must be pure: the objective evaluates them concurrently
/// across noise rows.
pub trait LatentModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `ln p(z, x)`. May return `-∞` or NaN outside the support; callers treat
    /// that as an evaluation failure.
    fn log_joint(&self, z: &[f64]) -> f64;

    /// Writes `∇_z ln p(z, x)` into `grad` and returns `ln p(z, x)`.
    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;

    /// `ln p(x)` when known in closed form.
    fn known_log_evidence(&self) -> Option<f64> {
        None
    }
}

impl<M: LatentModel + ?Sized> LatentModel for &M {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_joint(&self, z: &[f64]) -> f64 {
        (**self).log_joint(z)
    }
    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_joint_grad(z, grad)
    }
    fn known_log_evidence(&self) -> Option<f64> {
        (**self).known_log_evidence()
    }
}

impl<M: LatentModel + ?Sized> LatentModel for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_joint(&self, z: &[f64]) -> f64 {
        (**self).log_joint(z)
    }
    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_joint_grad(z, grad)
    }
    fn known_log_evidence(&self) -> Option<f64> {
        (**self).known_log_evidence()
    }
}

impl<M: LatentModel + ?Sized> LatentModel for Arc<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_joint(&self, z: &[f64]) -> f64 {
        (**self).log_joint(z)
    }
    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_joint_grad(z, grad)
    }
    fn known_log_evidence(&self) -> Option<f64> {
        (**self).known_log_evidence()
    }
}

/// Central-difference gradient with step `1e-5 · max(1, |xᵢ|)`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `maxᵢ |aᵢ − bᵢ| / max(1, |bᵢ|)`: relative error, absolute near zero.
pub fn max_relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}
