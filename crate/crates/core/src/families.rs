//! Gaussian variational families and their reparameterization.
//!
//! Parameters live in one flat unconstrained vector:
//!
//! - diagonal: `[μ₁…μ_d, ρ₁…ρ_d]`, `σᵢ = softplus(ρᵢ)`, `z = μ + σ ⊙ ε`
//! - dense: `[μ₁…μ_d, ρ₁…ρ_d, L₂₁, L₃₁, L₃₂, …]` (strictly-lower entries of
//!   `L`, row-major), `Lᵢᵢ = softplus(ρᵢ)`, `z = μ + L ε`
//!
//! The base distribution is the standard normal on `Rᵈ`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    sigmoid, softplus, softplus_inverse, LowerTriangular, Matrix, SeededStream, LN_2PI,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Diagonal,
    Dense,
}

impl FamilyKind {
    /// Length of the flat parameter vector for latent dimension `d`.
    pub fn param_len(self, d: usize) -> usize {
        match self {
            FamilyKind::Diagonal => 2 * d,
            FamilyKind::Dense => 2 * d + d * d.saturating_sub(1) / 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Diagonal => "diagonal",
            FamilyKind::Dense => "dense",
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(FamilyKind::Diagonal),
            "dense" => Ok(FamilyKind::Dense),
            other => Err(Error::Config(format!(
                "unknown family '{other}'; expected one of {{diagonal, dense}}"
            ))),
        }
    }
}

/// Variational parameters in the documented flat layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    kind: FamilyKind,
    dim: usize,
    theta: Vec<f64>,
}

/// Borrowed view of the three parameter blocks. `lower` is empty for the diagonal family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamsView<'a> {
    pub mu: &'a [f64],
    pub raw_diag: &'a [f64],
    pub lower: &'a [f64],
}

impl VariationalParams {
    pub fn new(kind: FamilyKind, dim: usize, theta: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("latent dimension must be at least 1".into()));
        }
        check_dim(kind.param_len(dim), theta.len(), "variational parameter vector")?;
        Ok(Self { kind, dim, theta })
    }

    pub fn pack_diagonal(mu: &[f64], raw_diag: &[f64]) -> Result<Self> {
        check_dim(mu.len(), raw_diag.len(), "raw scales")?;
        Self::new(FamilyKind::Diagonal, mu.len(), [mu, raw_diag].concat())
    }

    pub fn pack_dense(mu: &[f64], raw_diag: &[f64], lower: &[f64]) -> Result<Self> {
        check_dim(mu.len(), raw_diag.len(), "raw scales")?;
        Self::new(FamilyKind::Dense, mu.len(), [mu, raw_diag, lower].concat())
    }

    /// Dense parameters whose scale factor is exactly `scale` (diagonal must be positive).
    pub fn from_mean_and_factor(mu: &[f64], scale: &LowerTriangular) -> Result<Self> {
        let raw: Vec<f64> = scale.diag().into_iter().map(softplus_inverse).collect::<Result<_>>()?;
        Self::pack_dense(mu, &raw, &scale.strict_lower())
    }

    /// Diagonal parameters with standard deviations `sd`.
    pub fn from_mean_and_sd(mu: &[f64], sd: &[f64]) -> Result<Self> {
        let raw: Vec<f64> = sd.iter().copied().map(softplus_inverse).collect::<Result<_>>()?;
        Self::pack_diagonal(mu, &raw)
    }

    /// Every entry of the flat vector drawn from `N(0, 1)`.
    pub fn standard_normal_init(kind: FamilyKind, dim: usize, stream: &mut SeededStream) -> Self {
        let mut theta = vec![0.0; kind.param_len(dim)];
        stream.fill_standard_normal(&mut theta);
        Self { kind, dim, theta }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Same family and dimension, new flat values.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.dim, theta)
    }

    pub fn unpack(&self) -> ParamsView<'_> {
        let d = self.dim;
        ParamsView {
            mu: &self.theta[..d],
            raw_diag: &self.theta[d..2 * d],
            lower: &self.theta[2 * d..],
        }
    }

    pub fn mean(&self) -> &[f64] {
        self.unpack().mu
    }

    /// `σᵢ` (diagonal) or `Lᵢᵢ` (dense).
    pub fn scale_diag(&self) -> Vec<f64> {
        self.unpack().raw_diag.iter().map(|&r| softplus(r)).collect()
    }

    /// The scale factor `L` (a diagonal matrix for the diagonal family).
    pub fn scale_factor(&self) -> LowerTriangular {
        let diag = self.scale_diag();
        match self.kind {
            FamilyKind::Diagonal => {
                let zeros = vec![0.0; self.dim * (self.dim - 1) / 2];
                LowerTriangular::from_parts(&diag, &zeros).expect("sized by dim")
            }
            FamilyKind::Dense => {
                LowerTriangular::from_parts(&diag, self.unpack().lower).expect("sized by dim")
            }
        }
    }

    /// `Σ = L Lᵀ`.
    pub fn covariance(&self) -> Matrix {
        self.scale_factor().gram()
    }

    /// `Σ ln Lᵢᵢ`.
    pub fn log_det_scale(&self) -> f64 {
        self.unpack().raw_diag.iter().map(|&r| softplus(r).ln()).sum()
    }

    /// `z = μ + L ε`.
    pub fn reparameterize(&self, eps: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, eps.len(), "noise vector")?;
        let prepared = self.prepare();
        let mut z = vec![0.0; self.dim];
        prepared.reparameterize_into(eps, &mut z);
        Ok(z)
    }

    /// `ln q_θ(z)`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim, z.len(), "latent point")?;
        let d = self.dim as f64;
        let r: Vec<f64> = z.iter().zip(self.mean()).map(|(a, b)| a - b).collect();
        let u = match self.kind {
            FamilyKind::Diagonal => r.iter().zip(self.scale_diag()).map(|(x, s)| x / s).collect(),
            FamilyKind::Dense => self.scale_factor().solve(&r)?,
        };
        let sq: f64 = u.iter().map(|x| x * x).sum();
        Ok(-0.5 * d * LN_2PI - 0.5 * sq - self.log_det_scale())
    }

    /// Closed-form entropy `d/2 · ln(2πe) + Σ ln Lᵢᵢ`.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim as f64 * (LN_2PI + 1.0) + self.log_det_scale()
    }

    /// Gradient of [`entropy`](Self::entropy) in the flat layout. Only the ρ block is non-zero.
    pub fn entropy_gradient(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        let d = self.dim;
        for (gi, &r) in g[d..2 * d].iter_mut().zip(self.unpack().raw_diag) {
            *gi = sigmoid(r) / softplus(r);
        }
        g
    }

    /// `(∂z/∂θ)ᵀ ḡ` for `z = z_θ(ε)`, in the flat layout.
    pub fn backprop_reparam(&self, eps: &[f64], gbar_z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, eps.len(), "noise vector")?;
        check_dim(self.dim, gbar_z.len(), "upstream gradient")?;
        let prepared = self.prepare();
        let mut acc = vec![0.0; self.len()];
        prepared.accumulate_backprop(eps, gbar_z, &mut acc);
        prepared.finish_backprop(&mut acc, 1.0);
        Ok(acc)
    }

    pub(crate) fn prepare(&self) -> PreparedFamily<'_> {
        let v = self.unpack();
        PreparedFamily {
            kind: self.kind,
            dim: self.dim,
            mu: v.mu,
            lower: v.lower,
            diag: v.raw_diag.iter().map(|&r| softplus(r)).collect(),
            diag_slope: v.raw_diag.iter().map(|&r| sigmoid(r)).collect(),
        }
    }
}

/// Parameters with the softplus scales evaluated once, for tight loops over noise rows.
pub(crate) struct PreparedFamily<'a> {
    kind: FamilyKind,
    dim: usize,
    mu: &'a [f64],
    lower: &'a [f64],
    diag: Vec<f64>,
    diag_slope: Vec<f64>,
}

impl PreparedFamily<'_> {
    #[inline]
    pub(crate) fn reparameterize_into(&self, eps: &[f64], z: &mut [f64]) {
        match self.kind {
            FamilyKind::Diagonal => {
                for i in 0..self.dim {
                    z[i] = self.mu[i] + self.diag[i] * eps[i];
                }
            }
            FamilyKind::Dense => {
                let mut off = 0;
                for i in 0..self.dim {
                    let mut acc = self.mu[i] + self.diag[i] * eps[i];
                    for j in 0..i {
                        acc += self.lower[off + j] * eps[j];
                    }
                    off += i;
                    z[i] = acc;
                }
            }
        }
    }

    pub(crate) fn log_det_scale(&self) -> f64 {
        self.diag.iter().map(|s| s.ln()).sum()
    }

    /// Adds the chain-rule terms that do not depend on the softplus slope:
    /// `acc_μ += ḡ`, `acc_ρᵢ += ḡᵢ εᵢ`, `acc_Lᵢⱼ += ḡᵢ εⱼ`.
    #[inline]
    pub(crate) fn accumulate_backprop(&self, eps: &[f64], gbar: &[f64], acc: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            acc[i] += gbar[i];
            acc[d + i] += gbar[i] * eps[i];
        }
        if self.kind == FamilyKind::Dense {
            let lower = &mut acc[2 * d..];
            let mut off = 0;
            for i in 1..d {
                let gi = gbar[i];
                for j in 0..i {
                    lower[off + j] += gi * eps[j];
                }
                off += i;
            }
        }
    }

    /// Scales an accumulator by `weight` and applies `softplus′(ρᵢ)` to the ρ block.
    pub(crate) fn finish_backprop(&self, acc: &mut [f64], weight: f64) {
        let d = self.dim;
        for x in acc.iter_mut() {
            *x *= weight;
        }
        for i in 0..d {
            acc[d + i] *= self.diag_slope[i];
        }
    }
}
