//! The deterministic training objective over a fixed noise block.
//!
//! For noise rows `ε₁…εₙ` the log-weights are
//! `vᵢ = ln p(z_θ(εᵢ), x) − ln q_θ(z_θ(εᵢ))` and the training objective is
//! their mean. Because `ln q_θ(z_θ(ε)) = −d/2·ln 2π − ½‖ε‖² − Σ ln Lᵢᵢ`, the
//! `q` term is evaluated through that identity rather than a triangular solve.
//!
//! Rows are evaluated in parallel; reductions always run in row order over
//! fixed-size chunks, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::families::{FamilyKind, VariationalParams};
use crate::models::LatentModel;
use crate::numerics::{
    dot, softplus_inverse, stable_mean, stable_sd, standard_normal_matrix, Matrix, SeededStream,
    Substream, LN_2PI,
};

const CHUNK_ROWS: usize = 64;

/// Where a noise block came from, enough to regenerate it bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseOrigin {
    pub seed: u64,
    pub substream: Substream,
    pub index: u64,
    pub counter: u128,
}

/// A fixed `n × d` block of standard-normal draws.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    eps: Matrix,
    origin: Option<NoiseOrigin>,
}

impl NoiseBlock {
    /// Draws `n` rows from the start of the `(seed, substream, index)` stream.
    pub fn draw(seed: u64, substream: Substream, index: u64, n: usize, d: usize) -> Self {
        Self::from_stream(&mut SeededStream::new(seed, substream, index), n, d)
    }

    /// Draws `n` rows from the current position of `stream`, advancing it.
    pub fn from_stream(stream: &mut SeededStream, n: usize, d: usize) -> Self {
        let origin = NoiseOrigin {
            seed: stream.seed(),
            substream: stream.substream(),
            index: stream.index(),
            counter: stream.counter(),
        };
        Self {
            eps: standard_normal_matrix(stream, n, d),
            origin: Some(origin),
        }
    }

    /// Wraps explicit noise (no provenance).
    pub fn from_matrix(eps: Matrix) -> Result<Self> {
        if eps.rows() == 0 || eps.cols() == 0 {
            return Err(Error::Contract("noise block must have n >= 1 and d >= 1".into()));
        }
        Ok(Self { eps, origin: None })
    }

    /// Regenerates the block from its origin record.
    pub fn recreate(&self) -> Option<Self> {
        let o = self.origin?;
        let mut s = SeededStream::at(o.seed, o.substream, o.index, o.counter);
        Some(Self::from_stream(&mut s, self.n(), self.dim()))
    }

    pub fn n(&self) -> usize {
        self.eps.rows()
    }

    pub fn dim(&self) -> usize {
        self.eps.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.eps.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.eps
    }

    pub fn origin(&self) -> Option<NoiseOrigin> {
        self.origin
    }
}

/// Log-weights `v_θ(εᵢ)`, in noise-row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWeights(pub Vec<f64>);

impl LogWeights {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        stable_mean(&self.0)
    }
}

/// Monte Carlo ELBO estimate from `m` fresh draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub m: usize,
}

impl ElboEstimate {
    pub fn from_weights(w: &[f64]) -> Self {
        let m = w.len();
        Self {
            mean: stable_mean(w),
            std_error: stable_sd(w) / (m as f64).sqrt(),
            m,
        }
    }
}

fn check_shapes(model: &dyn LatentModel, params: &VariationalParams, noise: &NoiseBlock) -> Result<()> {
    check_dim(model.dim(), params.dim(), "family dimension vs model")?;
    check_dim(model.dim(), noise.dim(), "noise dimension vs model")
}

fn chunk_ranges(n: usize) -> impl IndexedParallelIterator<Item = std::ops::Range<usize>> {
    let chunks = n.div_ceil(CHUNK_ROWS);
    (0..chunks)
        .into_par_iter()
        .map(move |c| c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n))
}

/// Log-weights of `q_θ` against `model` on every noise row.
pub fn log_weights(
    model: &dyn LatentModel,
    params: &VariationalParams,
    noise: &NoiseBlock,
) -> Result<LogWeights> {
    check_shapes(model, params, noise)?;
    let prepared = params.prepare();
    let d = params.dim();
    let q_const = -0.5 * d as f64 * LN_2PI - prepared.log_det_scale();
    let chunks: Vec<Vec<f64>> = chunk_ranges(noise.n())
        .map(|range| {
            let mut z = vec![0.0; d];
            range
                .map(|i| {
                    let eps = noise.row(i);
                    prepared.reparameterize_into(eps, &mut z);
                    model.log_joint(&z) - (q_const - 0.5 * dot(eps, eps))
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "log joint",
        });
    }
    Ok(LogWeights(values))
}

/// Mean log-weight over the fixed noise block.
pub fn training_objective(
    model: &dyn LatentModel,
    params: &VariationalParams,
    noise: &NoiseBlock,
) -> Result<f64> {
    Ok(log_weights(model, params, noise)?.mean())
}

/// Exact gradient of [`training_objective`] with respect to the flat parameters.
pub fn training_gradient(
    model: &dyn LatentModel,
    params: &VariationalParams,
    noise: &NoiseBlock,
) -> Result<Vec<f64>> {
    Ok(objective_and_gradient(model, params, noise)?.1)
}

/// Training objective and its gradient in one pass over the noise.
pub fn objective_and_gradient(
    model: &dyn LatentModel,
    params: &VariationalParams,
    noise: &NoiseBlock,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(model, params, noise)?;
    let prepared = params.prepare();
    let d = params.dim();
    let p = params.len();
    let q_const = -0.5 * d as f64 * LN_2PI - prepared.log_det_scale();

    let partials: Vec<(Vec<f64>, Vec<f64>)> = chunk_ranges(noise.n())
        .map(|range| {
            let mut z = vec![0.0; d];
            let mut gz = vec![0.0; d];
            let mut acc = vec![0.0; p];
            let mut values = Vec::with_capacity(range.len());
            for i in range {
                let eps = noise.row(i);
                prepared.reparameterize_into(eps, &mut z);
                let lp = model.log_joint_grad(&z, &mut gz);
                values.push(lp - (q_const - 0.5 * dot(eps, eps)));
                prepared.accumulate_backprop(eps, &gz, &mut acc);
            }
            (values, acc)
        })
        .collect();

    let mut values = Vec::with_capacity(noise.n());
    let mut grad = vec![0.0; p];
    for (v, acc) in partials {
        values.extend(v);
        for (g, a) in grad.iter_mut().zip(acc) {
            *g += a;
        }
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "log joint",
        });
    }
    prepared.finish_backprop(&mut grad, 1.0 / noise.n() as f64);
    for (g, e) in grad.iter_mut().zip(params.entropy_gradient()) {
        *g += e;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            index: 0,
            what: "gradient",
        });
    }
    Ok((stable_mean(&values), grad))
}

/// Log-weights on `m` fresh draws from `stream`.
pub fn elbo_weights(
    model: &dyn LatentModel,
    params: &VariationalParams,
    m: usize,
    stream: &mut SeededStream,
) -> Result<LogWeights> {
    if m < 2 {
        return Err(Error::Contract(format!("ELBO estimate needs m >= 2, got {m}")));
    }
    let noise = NoiseBlock::from_stream(stream, m, params.dim());
    log_weights(model, params, &noise)
}

/// Mean and standard error of the log-weights on `m` fresh draws.
pub fn elbo_estimate(
    model: &dyn LatentModel,
    params: &VariationalParams,
    m: usize,
    stream: &mut SeededStream,
) -> Result<ElboEstimate> {
    Ok(ElboEstimate::from_weights(elbo_weights(model, params, m, stream)?.values()))
}

/// A path of dense-family parameters along which the training objective grows
/// like `c + ln λ` when the noise block has fewer rows than dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedConstruction {
    /// Non-zero `v` with `⟨v, εᵢ⟩ = 0` for every row, scaled so `v[pivot] = 1`.
    pub direction: Vec<f64>,
    /// Zero-based index of the last non-zero entry of `direction`.
    pub pivot: usize,
    /// `maxᵢ |⟨v, εᵢ⟩|`.
    pub residual: f64,
}

const PIVOT_ZERO_THRESHOLD: f64 = 1e-12;

/// Builds the null-space direction of the noise rows.
pub fn unbounded_direction(noise: &NoiseBlock) -> Result<UnboundedConstruction> {
    let (n, d) = (noise.n(), noise.dim());
    if n >= d {
        return Err(Error::Contract(format!(
            "the objective is only unbounded for n < d; got n = {n}, d = {d}"
        )));
    }
    // orthonormal basis of the row space (modified Gram-Schmidt, two passes)
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut q = noise.row(i).to_vec();
        let norm0 = dot(&q, &q).sqrt();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&q, b);
                for (x, y) in q.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&q, &q).sqrt();
        if norm > 1e-10 * norm0.max(1.0) {
            basis.push(q.into_iter().map(|x| x / norm).collect());
        }
    }
    // complement of the best-conditioned coordinate axis
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for k in (0..d).rev() {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > best_norm {
            best_norm = norm;
            best = Some(v);
        }
    }
    let v = best.ok_or_else(|| Error::Contract("empty null space".into()))?;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pivot = (0..d)
        .rev()
        .find(|&j| v[j].abs() > PIVOT_ZERO_THRESHOLD * scale)
        .ok_or_else(|| Error::Contract("null-space vector is numerically zero".into()))?;
    let mut direction: Vec<f64> = v.iter().map(|x| x / v[pivot]).collect();
    for x in &mut direction[pivot + 1..] {
        *x = 0.0;
    }
    let residual = (0..n)
        .map(|i| dot(&direction, noise.row(i)).abs())
        .fold(0.0, f64::max);
    Ok(UnboundedConstruction {
        direction,
        pivot,
        residual,
    })
}

impl UnboundedConstruction {
    /// `μ = 0` and `L_λ` equal to the identity with row `pivot` replaced by `λ vᵀ`.
    pub fn make_theta(&self, lambda: f64) -> Result<VariationalParams> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
        }
        let d = self.direction.len();
        let one = softplus_inverse(1.0)?;
        let mut raw = vec![one; d];
        raw[self.pivot] = softplus_inverse(lambda)?;
        let mut lower = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in 0..i {
                lower.push(if i == self.pivot {
                    lambda * self.direction[j]
                } else {
                    0.0
                });
            }
        }
        let theta = VariationalParams::pack_dense(&vec![0.0; d], &raw, &lower)?;
        debug_assert_eq!(theta.kind(), FamilyKind::Dense);
        Ok(theta)
    }
}
