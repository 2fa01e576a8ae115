use serde::{Deserialize, Serialize};

use super::LatentModel;
use crate::error::{Error, Result};

/// Elementwise bijection from an unconstrained coordinate `ζ` to the model's
/// constrained coordinate `x = T(ζ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bijector {
    Identity,
    /// `x = e^ζ`, mapping `R` onto `(0, ∞)`.
    Exp,
}

impl Bijector {
    #[inline]
    pub fn forward(self, zeta: f64) -> f64 {
        match self {
            Bijector::Identity => zeta,
            Bijector::Exp => zeta.exp(),
        }
    }

    pub fn inverse(self, x: f64) -> Result<f64> {
        match self {
            Bijector::Identity => Ok(x),
            Bijector::Exp if x > 0.0 => Ok(x.ln()),
            Bijector::Exp => Err(Error::Domain(format!(
                "exp transform inverse needs x > 0, got {x}"
            ))),
        }
    }

    /// `ln |dT/dζ|`.
    #[inline]
    pub fn log_abs_det_jacobian(self, zeta: f64) -> f64 {
        match self {
            Bijector::Identity => 0.0,
            Bijector::Exp => zeta,
        }
    }

    #[inline]
    fn derivative(self, zeta: f64) -> f64 {
        match self {
            Bijector::Identity => 1.0,
            Bijector::Exp => zeta.exp(),
        }
    }

    /// `d/dζ ln |dT/dζ|`.
    #[inline]
    fn log_abs_det_jacobian_derivative(self) -> f64 {
        match self {
            Bijector::Identity => 0.0,
            Bijector::Exp => 1.0,
        }
    }
}

/// A bijector applied to a set of latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub bijector: Bijector,
    pub indices: Vec<usize>,
}

impl Transform {
    pub fn new(bijector: Bijector, indices: impl Into<Vec<usize>>) -> Self {
        Self {
            bijector,
            indices: indices.into(),
        }
    }
}

/// A model re-expressed on unconstrained coordinates, including the
/// change-of-variables correction.
#[derive(Debug, Clone)]
pub struct TransformedModel<M> {
    inner: M,
    name: String,
    per_coordinate: Vec<Bijector>,
}

/// Wraps `model` so that `log_joint(ζ) = model.log_joint(T(ζ)) + Σ ln |T'(ζᵢ)|`.
///
/// Coordinates not named by any transform keep the identity map. Overlapping
/// or out-of-range index sets are rejected.
pub fn apply_transform_stack<M: LatentModel>(
    model: M,
    transforms: &[Transform],
) -> Result<TransformedModel<M>> {
    let d = model.dim();
    let mut per_coordinate = vec![Bijector::Identity; d];
    let mut claimed = vec![false; d];
    for (k, t) in transforms.iter().enumerate() {
        for &i in &t.indices {
            if i >= d {
                return Err(Error::Config(format!(
                    "transform {k} names coordinate {i} but the model has dimension {d}"
                )));
            }
            if claimed[i] {
                return Err(Error::Config(format!(
                    "coordinate {i} is covered by more than one transform"
                )));
            }
            claimed[i] = true;
            per_coordinate[i] = t.bijector;
        }
    }
    Ok(TransformedModel {
        name: model.name().to_string(),
        inner: model,
        per_coordinate,
    })
}

impl<M: LatentModel> TransformedModel<M> {
    pub fn inner(&self) -> &M {
        &self.inner
    }

    /// Maps an unconstrained point to the model's native coordinates.
    pub fn constrain(&self, zeta: &[f64]) -> Vec<f64> {
        zeta.iter()
            .zip(&self.per_coordinate)
            .map(|(&z, b)| b.forward(z))
            .collect()
    }

    pub fn unconstrain(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.iter()
            .zip(&self.per_coordinate)
            .map(|(&v, b)| b.inverse(v))
            .collect()
    }

    fn log_det(&self, zeta: &[f64]) -> f64 {
        zeta.iter()
            .zip(&self.per_coordinate)
            .map(|(&z, b)| b.log_abs_det_jacobian(z))
            .sum()
    }
}

impl<M: LatentModel> LatentModel for TransformedModel<M> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_joint(&self, zeta: &[f64]) -> f64 {
        self.inner.log_joint(&self.constrain(zeta)) + self.log_det(zeta)
    }

    fn log_joint_grad(&self, zeta: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.constrain(zeta);
        let lp = self.inner.log_joint_grad(&x, grad);
        for ((g, &z), b) in grad.iter_mut().zip(zeta).zip(&self.per_coordinate) {
            *g = *g * b.derivative(z) + b.log_abs_det_jacobian_derivative();
        }
        lp + self.log_det(zeta)
    }

    fn known_log_evidence(&self) -> Option<f64> {
        self.inner.known_log_evidence()
    }
}

/// Independent `Exponential(rate)` coordinates on `(0, ∞)ᵈ`.
///
/// Its log joint is `-∞` off the positive orthant; pair it with a
/// [`Bijector::Exp`] transform before fitting.
#[derive(Debug, Clone)]
pub struct Exponential {
    name: String,
    dim: usize,
    rate: f64,
}

pub fn exponential_model(dim: usize, rate: f64) -> Result<Exponential> {
    if dim == 0 || !(rate > 0.0) {
        return Err(Error::Input(format!(
            "exponential model needs dim >= 1 and rate > 0, got dim {dim}, rate {rate}"
        )));
    }
    Ok(Exponential {
        name: format!("exponential-{dim}d"),
        dim,
        rate,
    })
}

impl LatentModel for Exponential {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        if z.iter().any(|&x| x <= 0.0) {
            return f64::NEG_INFINITY;
        }
        z.iter().map(|x| self.rate.ln() - self.rate * x).sum()
    }

    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(-self.rate);
        self.log_joint(z)
    }

    /// The density is normalized and carries no data.
    fn known_log_evidence(&self) -> Option<f64> {
        Some(0.0)
    }
}
