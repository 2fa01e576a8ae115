//! Adam on the stochastic reparameterization gradient, and the protocol that
//! compares it against the SAA driver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::{run_saa, RoundRecord, SaaConfig, StopReason};
use crate::error::{Error, Result};
use crate::families::{FamilyKind, VariationalParams};
use crate::models::LatentModel;
use crate::numerics::{median, SeededStream, Substream};
use crate::objective::{elbo_estimate, training_gradient, NoiseBlock};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    /// Zero moments with `β₁ = 0.9`, `β₂ = 0.999`, `ε̂ = 1e-8`.
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update for ascent; returns `γ·m̂/(√v̂ + ε̂)`.
pub fn adam_step(state: &mut AdamState, grad: &[f64], gamma: f64) -> Result<Vec<f64>> {
    crate::error::check_dim(state.m.len(), grad.len(), "Adam gradient length")?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut delta = Vec::with_capacity(grad.len());
    for ((m, v), g) in state.m.iter_mut().zip(state.v.iter_mut()).zip(grad) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        delta.push(gamma * m_hat / (v_hat.sqrt() + state.eps_hat));
    }
    Ok(delta)
}

/// Reparameterization gradient on `mc_samples` fresh draws from `stream`.
pub fn stochastic_elbo_gradient(
    model: &dyn LatentModel,
    params: &VariationalParams,
    mc_samples: usize,
    stream: &mut SeededStream,
) -> Result<Vec<f64>> {
    if mc_samples < 1 {
        return Err(Error::Contract("mc_samples must be >= 1".into()));
    }
    let noise = NoiseBlock::from_stream(stream, mc_samples, params.dim());
    training_gradient(model, params, &noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamRunConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub mc_samples: usize,
    pub eval_every: usize,
    pub eval_m: usize,
    pub seed: u64,
    /// Stop at the first failed evaluation instead of recording it and continuing.
    pub halt_on_divergence: bool,
}

impl Default for AdamRunConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            iterations: 5000,
            mc_samples: 16,
            eval_every: 100,
            eval_m: 10_000,
            seed: 0,
            halt_on_divergence: false,
        }
    }
}

impl AdamRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.mc_samples < 1 {
            return Err(Error::Config("mc_samples must be >= 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.eval_m < 2 {
            return Err(Error::Config("eval_m must be >= 2".into()));
        }
        Ok(())
    }
}

/// One periodic ELBO evaluation; `elbo` is `None` when it diverged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdamEvalRecord {
    pub iteration: usize,
    pub elbo: Option<f64>,
    pub std_error: Option<f64>,
    /// Gradient steps skipped so far because the gradient was not finite.
    pub skipped_steps: usize,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdamRun {
    pub config: AdamRunConfig,
    pub trace: Vec<AdamEvalRecord>,
    pub best_elbo: Option<f64>,
    pub diverged: bool,
    pub final_params: VariationalParams,
    #[serde(skip)]
    pub total_seconds: f64,
}

/// Adam from a standard-normal start, with an ELBO estimate every
/// `eval_every` iterations.
///
/// Gradient draws come from the adam substream; the evaluation at iteration
/// `k` uses eval substream index `k`. A non-finite gradient skips the update;
/// a non-finite ELBO is recorded as diverged.
pub fn run_adam_vi(model: &dyn LatentModel, kind: FamilyKind, config: &AdamRunConfig) -> Result<AdamRun> {
    run_adam_vi_observed(model, kind, config, &mut |_| {})
}

/// [`run_adam_vi`], calling `observer` with each evaluation record.
pub fn run_adam_vi_observed(
    model: &dyn LatentModel,
    kind: FamilyKind,
    config: &AdamRunConfig,
    observer: &mut dyn FnMut(&AdamEvalRecord),
) -> Result<AdamRun> {
    config.validate()?;
    let started = Instant::now();
    let d = model.dim();
    let mut params =
        VariationalParams::standard_normal_init(kind, d, &mut SeededStream::new(config.seed, Substream::Init, 0));
    let mut state = AdamState::new(params.len());
    let mut grad_stream = SeededStream::new(config.seed, Substream::Adam, 0);
    let mut trace = Vec::with_capacity(config.iterations / config.eval_every);
    let mut skipped = 0;
    let mut diverged = false;

    for it in 1..=config.iterations {
        match stochastic_elbo_gradient(model, &params, config.mc_samples, &mut grad_stream) {
            Ok(g) => {
                let delta = adam_step(&mut state, &g, config.step_size)?;
                let theta: Vec<f64> = params.as_slice().iter().zip(&delta).map(|(t, dt)| t + dt).collect();
                params = params.with_theta(theta)?;
            }
            Err(Error::NonFinite { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
        if it % config.eval_every == 0 {
            let mut eval_stream = SeededStream::new(config.seed, Substream::Eval, it as u64);
            let est = match elbo_estimate(model, &params, config.eval_m, &mut eval_stream) {
                Ok(e) if e.mean.is_finite() => Some(e),
                Ok(_) | Err(Error::NonFinite { .. }) => None,
                Err(e) => return Err(e),
            };
            trace.push(AdamEvalRecord {
                iteration: it,
                elbo: est.map(|e| e.mean),
                std_error: est.map(|e| e.std_error),
                skipped_steps: skipped,
                seconds: started.elapsed().as_secs_f64(),
            });
            observer(trace.last().expect("just pushed"));
            if est.is_none() {
                diverged = true;
                if config.halt_on_divergence {
                    break;
                }
            }
        }
    }
    let best_elbo = trace.iter().filter_map(|r| r.elbo).reduce(f64::max);
    Ok(AdamRun {
        config: *config,
        trace,
        best_elbo,
        diverged,
        final_params: params,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// ELBO reached by some elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub seconds: f64,
    pub elbo: f64,
}

/// What a comparison needs from one repetition of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub elbo: Option<f64>,
    pub progress: Vec<Progress>,
}

impl RepOutcome {
    /// First time the ELBO came within 1 nat of `target`.
    pub fn time_to(&self, target: f64) -> Option<f64> {
        self.progress
            .iter()
            .find(|p| p.elbo >= target - 1.0)
            .map(|p| p.seconds)
    }
}

impl From<&AdamRun> for RepOutcome {
    fn from(run: &AdamRun) -> Self {
        Self {
            elbo: run.best_elbo,
            progress: run
                .trace
                .iter()
                .filter_map(|r| r.elbo.map(|elbo| Progress { seconds: r.seconds, elbo }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub step_size: Option<f64>,
    pub median_elbo: Option<f64>,
    pub elbos: Vec<Option<f64>>,
    pub median_seconds: Option<f64>,
    pub seconds: Vec<Option<f64>>,
}

/// Medians per method, with Adam's best grid point compared to SAA.
///
/// `difference = adam_median − saa_median`, so negative values mean SAA
/// reached the higher ELBO. Times are to within 1 nat of
/// `target = min(best Adam median, SAA median)`, and
/// `time_ratio = adam_seconds / saa_seconds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    /// Adam grid points in order, then SAA last.
    pub rows: Vec<MethodRow>,
    pub best_adam: Option<usize>,
    pub target: Option<f64>,
    pub difference: Option<f64>,
    pub time_ratio: Option<f64>,
}

/// Median of the present values, or `None` if a majority is missing
/// (missing values rank below every present one, like a diverged run).
fn median_with_missing(values: &[Option<f64>], missing_low: bool) -> Option<f64> {
    let fill = if missing_low { f64::NEG_INFINITY } else { f64::INFINITY };
    let all: Vec<f64> = values.iter().map(|v| v.unwrap_or(fill)).collect();
    if all.is_empty() {
        return None;
    }
    Some(median(&all)).filter(|m| m.is_finite())
}

/// Builds the comparison from per-repetition outcomes.
pub fn summarize_comparison(adam: &[(f64, Vec<RepOutcome>)], saa: &[RepOutcome]) -> ComparisonTable {
    let adam_medians: Vec<Option<f64>> = adam
        .iter()
        .map(|(_, reps)| median_with_missing(&reps.iter().map(|r| r.elbo).collect::<Vec<_>>(), true))
        .collect();
    let saa_median = median_with_missing(&saa.iter().map(|r| r.elbo).collect::<Vec<_>>(), true);
    let best_adam = adam_medians
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m)))
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, b)) if b >= m => best,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i);
    let best_median = best_adam.and_then(|i| adam_medians[i]);
    let target = match (best_median, saa_median) {
        (Some(a), Some(s)) => Some(a.min(s)),
        (a, s) => a.or(s),
    };
    let times = |reps: &[RepOutcome]| -> Vec<Option<f64>> {
        reps.iter().map(|r| target.and_then(|t| r.time_to(t))).collect()
    };

    let mut rows: Vec<MethodRow> = adam
        .iter()
        .zip(&adam_medians)
        .map(|((gamma, reps), med)| {
            let seconds = times(reps);
            MethodRow {
                method: format!("adam({gamma})"),
                step_size: Some(*gamma),
                median_elbo: *med,
                elbos: reps.iter().map(|r| r.elbo).collect(),
                median_seconds: median_with_missing(&seconds, false),
                seconds,
            }
        })
        .collect();
    let saa_seconds = times(saa);
    rows.push(MethodRow {
        method: "saa".into(),
        step_size: None,
        median_elbo: saa_median,
        elbos: saa.iter().map(|r| r.elbo).collect(),
        median_seconds: median_with_missing(&saa_seconds, false),
        seconds: saa_seconds,
    });
    let saa_row = rows.len() - 1;
    let difference = best_median.zip(saa_median).map(|(a, s)| a - s);
    let time_ratio = best_adam
        .and_then(|i| rows[i].median_seconds)
        .zip(rows[saa_row].median_seconds)
        .map(|(a, s)| a / s);
    ComparisonTable {
        rows,
        best_adam,
        target,
        difference,
        time_ratio,
    }
}

/// One SAA repetition reduced to its final fresh-sample ELBO and the per-round
/// checks as progress points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaaRep {
    pub seed: u64,
    pub stop_reason: StopReason,
    pub final_n: usize,
    pub final_elbo: f64,
    pub final_std_error: f64,
    pub trace: Vec<RoundRecord>,
    #[serde(skip)]
    pub total_seconds: f64,
    #[serde(skip)]
    pub outcome: RepOutcome,
}

/// Runs [`run_saa`] and evaluates the result on `eval_m` fresh draws
/// (eval substream index 0).
pub fn saa_repetition(model: &dyn LatentModel, kind: FamilyKind, config: &SaaConfig) -> Result<(SaaRep, VariationalParams)> {
    let run = run_saa(model, kind, config)?;
    let est = elbo_estimate(
        model,
        &run.theta_star,
        config.eval_m,
        &mut SeededStream::new(config.seed, Substream::Eval, 0),
    )?;
    let mut elapsed = 0.0;
    let mut progress = Vec::new();
    for r in &run.trace {
        elapsed += r.seconds;
        if let Some(c) = r.check {
            progress.push(Progress { seconds: elapsed, elbo: c.elbo });
        }
    }
    progress.push(Progress {
        seconds: run.total_seconds,
        elbo: est.mean,
    });
    let rep = SaaRep {
        seed: config.seed,
        stop_reason: run.stop_reason,
        final_n: run.final_n(),
        final_elbo: est.mean,
        final_std_error: est.std_error,
        trace: run.trace.clone(),
        total_seconds: run.total_seconds,
        outcome: RepOutcome {
            elbo: Some(est.mean),
            progress,
        },
    };
    Ok((rep, run.theta_star))
}

/// Full output of [`compare_methods`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub table: ComparisonTable,
    pub adam_runs: Vec<AdamRun>,
    pub saa_runs: Vec<SaaRep>,
}

/// Adam over `grid × repetitions` and SAA over `repetitions`, repetition `r`
/// using seed `base + r` for both methods.
pub fn compare_methods(
    model: &dyn LatentModel,
    kind: FamilyKind,
    grid: &[f64],
    adam: &AdamRunConfig,
    saa: &SaaConfig,
    repetitions: usize,
) -> Result<Comparison> {
    if repetitions < 1 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    let mut adam_runs = Vec::new();
    let mut per_grid = Vec::new();
    for &gamma in grid {
        let mut reps = Vec::new();
        for r in 0..repetitions {
            let cfg = AdamRunConfig {
                step_size: gamma,
                seed: adam.seed.wrapping_add(r as u64),
                ..*adam
            };
            let run = run_adam_vi(model, kind, &cfg)?;
            reps.push(RepOutcome::from(&run));
            adam_runs.push(run);
        }
        per_grid.push((gamma, reps));
    }
    let mut saa_runs = Vec::new();
    for r in 0..repetitions {
        let cfg = SaaConfig {
            seed: saa.seed.wrapping_add(r as u64),
            ..*saa
        };
        saa_runs.push(saa_repetition(model, kind, &cfg)?.0);
    }
    let saa_outcomes: Vec<RepOutcome> = saa_runs.iter().map(|r| r.outcome.clone()).collect();
    Ok(Comparison {
        table: summarize_comparison(&per_grid, &saa_outcomes),
        adam_runs,
        saa_runs,
    })
}
