//! Limited-memory BFGS for maximizing a smooth deterministic function.

mod history;
mod line_search;

pub use history::{two_loop_direction, LbfgsHistory};
pub use line_search::{
    wolfe_line_search, LineSearchConfig, LineSearchOutcome, LinePoint, StepCertificate,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub history: usize,
    /// Stop when `‖∇f‖∞` falls to this.
    pub g_tol: f64,
    /// Stop after two consecutive steps with relative change in `f` at most this.
    pub f_tol: f64,
    pub line_search: LineSearchConfig,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            g_tol: 1e-5,
            f_tol: 1e-9,
            line_search: LineSearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptReport {
    pub theta_star: Vec<f64>,
    pub iterations_used: usize,
    pub status: OptStatus,
    pub final_objective: f64,
    /// `‖∇f(θ*)‖∞`.
    pub final_grad_norm: f64,
    pub evaluations: usize,
    pub certificates: Vec<StepCertificate>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn finite_eval<F>(f: &mut F, theta: &[f64]) -> Result<Option<(f64, Vec<f64>)>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match f(theta) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => Ok(Some((v, g))),
        Ok(_) | Err(Error::NonFinite { .. }) | Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Maximizes `f` from `theta0` using at most `tau` iterations.
///
/// `f_and_grad` returns `(f(θ), ∇f(θ))`. Non-finite results (or
/// [`Error::NonFinite`]) during a line search shrink the step; at `theta0`
/// they are an input error. The first step along an empty history is scaled to
/// `min(1, 1/‖∇f‖∞)`, later trials start at 1.
///
/// The report's `theta_star` is always the last accepted iterate, so a
/// line-search failure still returns the best point reached.
pub fn lbfgs_maximize<F>(
    mut f_and_grad: F,
    theta0: Vec<f64>,
    tau: usize,
    config: &LbfgsConfig,
) -> Result<OptReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.line_search.validate()?;
    let (mut value, mut grad) = finite_eval(&mut f_and_grad, &theta0)?
        .ok_or_else(|| Error::Input("objective is not finite at the starting point".into()))?;
    if grad.len() != theta0.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            actual: grad.len(),
            context: "gradient length",
        });
    }
    let mut theta = theta0;
    let mut history = LbfgsHistory::new(config.history);
    let mut certificates = Vec::new();
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut flat_steps = 0;
    let n = theta.len();

    let status = loop {
        if inf_norm(&grad) <= config.g_tol {
            break OptStatus::Converged;
        }
        if iterations >= tau {
            break OptStatus::IterationCap;
        }
        let mut dir = two_loop_direction(&grad, &history)?;
        let mut slope0 = dot(&grad, &dir);
        if !(slope0 > 0.0) || !slope0.is_finite() {
            history.clear();
            dir = grad.clone();
            slope0 = dot(&grad, &grad);
        }
        let initial = if history.is_empty() {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };

        let mut trials: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
        let mut fatal: Option<Error> = None;
        let outcome = wolfe_line_search(
            |step| {
                if fatal.is_some() {
                    return None;
                }
                let x: Vec<f64> = theta.iter().zip(&dir).map(|(t, r)| t + step * r).collect();
                match finite_eval(&mut f_and_grad, &x) {
                    Ok(Some((v, g))) => {
                        let s = dot(&g, &dir);
                        trials.push((step, x, g));
                        Some((v, s))
                    }
                    Ok(None) => None,
                    Err(e) => {
                        fatal = Some(e);
                        None
                    }
                }
            },
            value,
            slope0,
            initial,
            &config.line_search,
        )?;
        if let Some(e) = fatal {
            return Err(e);
        }
        match outcome {
            LineSearchOutcome::Accepted {
                point,
                certificate,
                evals,
            } => {
                evaluations += evals;
                let (_, x, g) = trials
                    .into_iter()
                    .rev()
                    .find(|(s, _, _)| *s == point.step)
                    .expect("accepted step was evaluated");
                let s: Vec<f64> = (0..n).map(|i| x[i] - theta[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| -(g[i] - grad[i])).collect();
                history.push(s, y);
                let scale = value.abs().max(point.value.abs()).max(1.0);
                if (point.value - value).abs() <= config.f_tol * scale {
                    flat_steps += 1;
                } else {
                    flat_steps = 0;
                }
                theta = x;
                grad = g;
                value = point.value;
                certificates.push(certificate);
                iterations += 1;
                if flat_steps >= 2 {
                    break OptStatus::Converged;
                }
            }
            LineSearchOutcome::Failed { evals, .. } => {
                evaluations += evals;
                break OptStatus::LineSearchFailure;
            }
        }
    };

    Ok(OptReport {
        final_grad_norm: inf_norm(&grad),
        theta_star: theta,
        iterations_used: iterations,
        status,
        final_objective: value,
        evaluations,
        certificates,
    })
}
