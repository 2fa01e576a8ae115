//! The outer loop: a sequence of SAA problems with growing sample sizes, each
//! solved by L-BFGS and warm-started from the previous solution, stopped by a
//! train/test comparison of log-weights.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilyKind, VariationalParams};
use crate::lbfgs::{lbfgs_maximize, LbfgsConfig, OptStatus, StepCertificate};
use crate::models::LatentModel;
use crate::numerics::{stable_mean, welch_t_test, SeededStream, Substream};
use crate::objective::{self, ElboEstimate, NoiseBlock};

/// Settings of the outer loop. Defaults: `n0 = 32`, `tau0 = 300`,
/// `n_max = 2^18`, `delta = 0.01`, `p_threshold = 0.01`,
/// `very_small_iter = 2`, `eval_m = 10_000`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaaConfig {
    pub n0: usize,
    pub tau0: usize,
    pub n_max: usize,
    pub delta: f64,
    pub p_threshold: f64,
    pub very_small_iter: usize,
    pub eval_m: usize,
    pub warm_start: bool,
    pub dense_min_n_rule: bool,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self {
            n0: 32,
            tau0: 300,
            n_max: 1 << 18,
            delta: 0.01,
            p_threshold: 0.01,
            very_small_iter: 2,
            eval_m: 10_000,
            warm_start: true,
            dense_min_n_rule: true,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl SaaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 1 || !self.n0.is_power_of_two() {
            return Err(Error::Config(format!("n0 must be a power of two >= 1, got {}", self.n0)));
        }
        if self.n_max < self.n0 {
            return Err(Error::Config(format!(
                "n_max must be >= n0, got n_max = {} < n0 = {}",
                self.n_max, self.n0
            )));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::Config(format!(
                "p_threshold must be in (0, 1), got {}",
                self.p_threshold
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.tau0 < 1 {
            return Err(Error::Config("tau0 must be >= 1".into()));
        }
        if self.eval_m < 2 {
            return Err(Error::Config(format!("eval_m must be >= 2, got {}", self.eval_m)));
        }
        self.lbfgs.line_search.validate()
    }
}

/// Sample size of the first round. Dense families need `n > 2d` rows to keep
/// the objective bounded with margin, so with the rule enabled they start at
/// `max(n0, smallest power of two > 2d)`.
pub fn initial_sample_size(kind: FamilyKind, d: usize, config: &SaaConfig) -> usize {
    match kind {
        FamilyKind::Dense if config.dense_min_n_rule => {
            let floor = (2 * d + 1).next_power_of_two();
            config.n0.max(floor)
        }
        _ => config.n0,
    }
}

/// Number of rounds after which `n` has reached `n_max` (doubling from `n1`).
pub fn max_t(n1: usize, n_max: usize) -> usize {
    if n1 >= n_max {
        return 1;
    }
    let ratio = n_max / n1;
    ratio.ilog2() as usize + 1
}

/// Sample size of round `t` (1-based).
pub fn round_sample_size(n1: usize, t: usize, n_max: usize) -> usize {
    let shift = (t.max(1) - 1).min(63) as u32;
    n1.checked_shl(shift)
        .filter(|n| n >> shift == n1)
        .map_or(n_max, |n| n.min(n_max))
        .max(n1.min(n_max))
}

/// A deterministic objective family indexed by noise blocks.
pub trait SaaProblem: Sync {
    /// Columns of each noise row.
    fn noise_dim(&self) -> usize;
    fn initial_sample_size(&self, config: &SaaConfig) -> usize;
    /// Starting point drawn from `stream`.
    fn initial_theta(&self, stream: &mut SeededStream) -> Vec<f64>;
    fn objective_and_gradient(&self, theta: &[f64], noise: &NoiseBlock) -> Result<(f64, Vec<f64>)>;
    /// Per-row log-weights; their mean is the objective.
    fn log_weights(&self, theta: &[f64], noise: &NoiseBlock) -> Result<Vec<f64>>;
}

/// Variational inference for `model` with a Gaussian family.
pub struct VariationalProblem<'a> {
    model: &'a dyn LatentModel,
    kind: FamilyKind,
}

impl<'a> VariationalProblem<'a> {
    pub fn new(model: &'a dyn LatentModel, kind: FamilyKind) -> Self {
        Self { model, kind }
    }

    pub fn params(&self, theta: &[f64]) -> Result<VariationalParams> {
        VariationalParams::new(self.kind, self.model.dim(), theta.to_vec())
    }
}

impl SaaProblem for VariationalProblem<'_> {
    fn noise_dim(&self) -> usize {
        self.model.dim()
    }

    fn initial_sample_size(&self, config: &SaaConfig) -> usize {
        initial_sample_size(self.kind, self.model.dim(), config)
    }

    fn initial_theta(&self, stream: &mut SeededStream) -> Vec<f64> {
        VariationalParams::standard_normal_init(self.kind, self.model.dim(), stream).into_vec()
    }

    fn objective_and_gradient(&self, theta: &[f64], noise: &NoiseBlock) -> Result<(f64, Vec<f64>)> {
        objective::objective_and_gradient(self.model, &self.params(theta)?, noise)
    }

    fn log_weights(&self, theta: &[f64], noise: &NoiseBlock) -> Result<Vec<f64>> {
        Ok(objective::log_weights(self.model, &self.params(theta)?, noise)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TTestConverged,
    GapBelowDelta,
    MaxRounds,
    SmallIterationCount,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TTestConverged => "t_test_converged",
            StopReason::GapBelowDelta => "gap_below_delta",
            StopReason::MaxRounds => "max_rounds",
            StopReason::SmallIterationCount => "small_iteration_count",
        }
    }
}

/// Outcome of one train/test comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceCheck {
    pub converged: bool,
    pub reason: Option<StopReason>,
    /// Mean training log-weight.
    pub objective: f64,
    /// Mean log-weight on fresh noise.
    pub elbo: f64,
    pub elbo_std_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

/// The stopping rule applied to given train and test log-weights at round `t`.
///
/// Converged when the Welch test does not separate the two samples
/// (`p > p_threshold`), when the means differ by less than `delta`, or when
/// `t ≥ max_t`, checked in that order.
pub fn convergence_decision(
    train: &[f64],
    test: &[f64],
    t: usize,
    max_t: usize,
    config: &SaaConfig,
) -> Result<ConvergenceCheck> {
    let test_stats = ElboEstimate::from_weights(test);
    let objective = stable_mean(train);
    let tt = welch_t_test(train, test)?;
    let reason = if tt.p_value > config.p_threshold {
        Some(StopReason::TTestConverged)
    } else if (objective - test_stats.mean).abs() < config.delta {
        Some(StopReason::GapBelowDelta)
    } else if t >= max_t {
        Some(StopReason::MaxRounds)
    } else {
        None
    };
    Ok(ConvergenceCheck {
        converged: reason.is_some(),
        reason,
        objective,
        elbo: test_stats.mean,
        elbo_std_error: test_stats.std_error,
        t_statistic: tt.t_statistic,
        p_value: tt.p_value,
    })
}

/// Compares the training log-weights on `noise` with `eval_m` fresh draws from
/// the test substream of round `t`.
pub fn converged<P: SaaProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    noise: &NoiseBlock,
    t: usize,
    max_t: usize,
    config: &SaaConfig,
) -> Result<ConvergenceCheck> {
    let train = problem.log_weights(theta, noise)?;
    let test_noise = NoiseBlock::draw(config.seed, Substream::Test, t as u64, config.eval_m, problem.noise_dim());
    let test = problem.log_weights(theta, &test_noise)?;
    convergence_decision(&train, &test, t, max_t, config)
}

/// One round of the outer loop. Wall-clock fields are not serialized so that
/// serialized traces are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub n: usize,
    /// Iteration cap used in this round.
    pub tau: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: OptStatus,
    pub training_objective: f64,
    pub count: usize,
    pub check: Option<ConvergenceCheck>,
    pub wolfe_violations: usize,
    #[serde(skip)]
    pub certificates: Vec<StepCertificate>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult<T = Vec<f64>> {
    pub theta_star: T,
    pub stop_reason: StopReason,
    pub trace: Vec<RoundRecord>,
    #[serde(skip)]
    pub total_seconds: f64,
}

impl<T> RunResult<T> {
    pub fn final_n(&self) -> usize {
        self.trace.last().map_or(0, |r| r.n)
    }

    pub fn total_iterations(&self) -> usize {
        self.trace.iter().map(|r| r.iterations).sum()
    }

    pub fn certificates(&self) -> impl Iterator<Item = &StepCertificate> {
        self.trace.iter().flat_map(|r| r.certificates.iter())
    }

    pub fn wolfe_violations(&self) -> usize {
        self.trace.iter().map(|r| r.wolfe_violations).sum()
    }

    fn map<U>(self, f: impl FnOnce(T) -> U) -> RunResult<U> {
        RunResult {
            theta_star: f(self.theta_star),
            stop_reason: self.stop_reason,
            trace: self.trace,
            total_seconds: self.total_seconds,
        }
    }
}

/// The outer loop for an arbitrary [`SaaProblem`].
///
/// Round `t` draws `n_t = min(n₁·2^{t−1}, n_max)` rows from the train
/// substream (index `t`), optimizes with cap `τ`, doubles `τ` when the cap was
/// hit and counts rounds with fewer than `very_small_iter` iterations. The
/// convergence check runs only when that count is zero; the loop ends when it
/// passes or the count reaches 3.
pub fn run_problem<P: SaaProblem + ?Sized>(problem: &P, config: &SaaConfig) -> Result<RunResult> {
    run_problem_observed(problem, config, &mut |_| {})
}

/// [`run_problem`], calling `observer` with each round record as it completes.
pub fn run_problem_observed<P: SaaProblem + ?Sized>(
    problem: &P,
    config: &SaaConfig,
    observer: &mut dyn FnMut(&RoundRecord),
) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let n1 = problem.initial_sample_size(config);
    let max_rounds = max_t(n1, config.n_max);
    let d = problem.noise_dim();
    let mut theta = problem.initial_theta(&mut SeededStream::new(config.seed, Substream::Init, 0));
    let mut tau = config.tau0;
    let mut count = 0;
    let mut failures = 0;
    let mut trace = Vec::new();
    let mut t = 0;

    let stop_reason = loop {
        t += 1;
        let round_start = Instant::now();
        let n = round_sample_size(n1, t, config.n_max);
        let noise = NoiseBlock::draw(config.seed, Substream::Train, t as u64, n, d);
        if !config.warm_start && t > 1 {
            theta = problem.initial_theta(&mut SeededStream::new(
                config.seed,
                Substream::Init,
                (t - 1) as u64,
            ));
        }
        let report = lbfgs_maximize(
            |th| problem.objective_and_gradient(th, &noise),
            theta,
            tau,
            &config.lbfgs,
        )?;
        theta = report.theta_star;
        let eta = report.iterations_used;

        if report.status == OptStatus::LineSearchFailure {
            failures += 1;
            if failures >= 3 {
                return Err(Error::RepeatedLineSearchFailure { rounds: failures });
            }
        } else {
            failures = 0;
        }
        let round_tau = tau;
        if eta == tau {
            tau = tau.saturating_mul(2);
        }
        if eta < config.very_small_iter {
            count += 1;
        } else {
            count = 0;
        }
        let check = if count == 0 {
            Some(converged(problem, &theta, &noise, t, max_rounds, config)?)
        } else {
            None
        };
        let wolfe_violations = report
            .certificates
            .iter()
            .filter(|c| !c.satisfies_strong_wolfe())
            .count();
        trace.push(RoundRecord {
            round: t,
            n,
            tau: round_tau,
            iterations: eta,
            evaluations: report.evaluations,
            status: report.status,
            training_objective: report.final_objective,
            count,
            check,
            wolfe_violations,
            certificates: report.certificates,
            seconds: round_start.elapsed().as_secs_f64(),
        });
        observer(trace.last().expect("just pushed"));
        if let Some(reason) = check.and_then(|c| c.reason) {
            break reason;
        }
        if count >= 3 {
            break StopReason::SmallIterationCount;
        }
    };

    Ok(RunResult {
        theta_star: theta,
        stop_reason,
        trace,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Fits a Gaussian family of the given kind to `model`.
pub fn run_saa(
    model: &dyn LatentModel,
    kind: FamilyKind,
    config: &SaaConfig,
) -> Result<RunResult<VariationalParams>> {
    run_saa_observed(model, kind, config, &mut |_| {})
}

/// [`run_saa`] with a per-round observer.
pub fn run_saa_observed(
    model: &dyn LatentModel,
    kind: FamilyKind,
    config: &SaaConfig,
    observer: &mut dyn FnMut(&RoundRecord),
) -> Result<RunResult<VariationalParams>> {
    let problem = VariationalProblem::new(model, kind);
    let result = run_problem_observed(&problem, config, observer)?;
    let params = problem.params(&result.theta_star)?;
    Ok(result.map(|_| params))
}

/// Solves a single SAA problem on fixed `noise` from `theta0`.
pub fn solve_fixed(
    model: &dyn LatentModel,
    kind: FamilyKind,
    noise: &NoiseBlock,
    theta0: VariationalParams,
    tau: usize,
    lbfgs: &LbfgsConfig,
) -> Result<(VariationalParams, crate::lbfgs::OptReport)> {
    let problem = VariationalProblem::new(model, kind);
    let report = lbfgs_maximize(
        |th| problem.objective_and_gradient(th, noise),
        theta0.into_vec(),
        tau,
        lbfgs,
    )?;
    Ok((problem.params(&report.theta_star)?, report))
}

/// Warm-started and freshly started runs on the same seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationPair {
    pub repetition: usize,
    pub seed: u64,
    pub warm: RunResult<VariationalParams>,
    pub fresh: RunResult<VariationalParams>,
}

/// Runs [`run_saa`] with and without warm starts for `repetitions` seeds
/// (`config.seed + r`).
pub fn run_ablation_warm_start(
    model: &dyn LatentModel,
    kind: FamilyKind,
    config: &SaaConfig,
    repetitions: usize,
) -> Result<Vec<AblationPair>> {
    if repetitions < 1 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    (0..repetitions)
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            let arm = |warm_start| {
                run_saa(
                    model,
                    kind,
                    &SaaConfig {
                        seed,
                        warm_start,
                        ..*config
                    },
                )
            };
            Ok(AblationPair {
                repetition: r,
                seed,
                warm: arm(true)?,
                fresh: arm(false)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SaaConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!((c.n0, c.tau0, c.n_max, c.delta), (32, 300, 262_144, 0.01));
    }

    #[test]
    fn rejects_bad_config() {
        for c in [
            SaaConfig { n0: 24, ..Default::default() },
            SaaConfig { n_max: 16, ..Default::default() },
            SaaConfig { p_threshold: 1.0, ..Default::default() },
            SaaConfig { delta: 0.0, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn min_n_rule() {
        let c = SaaConfig::default();
        assert_eq!(initial_sample_size(FamilyKind::Dense, 105, &c), 256);
        assert_eq!(initial_sample_size(FamilyKind::Dense, 500, &c), 1024);
        assert_eq!(initial_sample_size(FamilyKind::Dense, 2, &c), 32);
        assert_eq!(initial_sample_size(FamilyKind::Dense, 16, &c), 64);
        assert_eq!(initial_sample_size(FamilyKind::Diagonal, 500, &c), 32);
        let off = SaaConfig { dense_min_n_rule: false, ..c };
        assert_eq!(initial_sample_size(FamilyKind::Dense, 500, &off), 32);
    }

    #[test]
    fn schedule_reaches_n_max_at_max_t() {
        let mt = max_t(32, 1 << 18);
        assert_eq!(mt, 14);
        assert_eq!(round_sample_size(32, 1, 1 << 18), 32);
        assert_eq!(round_sample_size(32, 2, 1 << 18), 64);
        assert_eq!(round_sample_size(32, mt, 1 << 18), 1 << 18);
        assert_eq!(round_sample_size(32, mt + 5, 1 << 18), 1 << 18);
        assert_eq!(round_sample_size(32, 200, 1 << 18), 1 << 18);
        assert_eq!(max_t(1024, 512), 1);
    }

    #[test]
    fn identical_weights_converge() {
        let w = vec![1.0, 2.0, 3.0, 4.0];
        let c = convergence_decision(&w, &w, 1, 10, &SaaConfig::default()).unwrap();
        assert!(c.converged);
        assert_eq!(c.reason, Some(StopReason::TTestConverged));
    }

    #[test]
    fn cap_forces_convergence() {
        let train: Vec<f64> = (0..8).map(|i| 100.0 + i as f64 * 0.01).collect();
        let test: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let c = convergence_decision(&train, &test, 14, 14, &SaaConfig::default()).unwrap();
        assert!(c.p_value < 1e-10);
        assert_eq!(c.reason, Some(StopReason::MaxRounds));
        let c = convergence_decision(&train, &test, 13, 14, &SaaConfig::default()).unwrap();
        assert!(!c.converged);
    }
}
