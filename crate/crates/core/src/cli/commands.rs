use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::baselines::{compare_methods, run_adam_vi_observed, AdamEvalRecord, AdamRunConfig, Comparison};
use crate::driver::{run_saa_observed, RoundRecord, SaaConfig};
use crate::error::{Error, Result};
use crate::families::{FamilyKind, VariationalParams};
use crate::lbfgs::OptStatus;
use crate::models::{finite_difference_gradient, max_relative_error, random_gaussian_target, LatentModel};
use crate::numerics::{SeededStream, Substream};
use crate::objective::{elbo_estimate, training_gradient, training_objective, unbounded_direction, NoiseBlock};

/// One line of `trace.jsonl`. Wall-clock times live in `timing.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub method: String,
    pub repetition: usize,
    pub seed: u64,
    /// Round (SAA) or iteration (Adam).
    pub index: usize,
    pub n: Option<usize>,
    pub tau: Option<usize>,
    pub iterations: Option<usize>,
    pub status: Option<OptStatus>,
    pub step_size: Option<f64>,
    pub training_objective: Option<f64>,
    pub elbo: Option<f64>,
    pub elbo_std_error: Option<f64>,
    pub p_value: Option<f64>,
}

impl TraceRecord {
    pub fn from_round(run_id: &str, repetition: usize, seed: u64, r: &RoundRecord) -> Self {
        Self {
            run_id: run_id.into(),
            method: "saa".into(),
            repetition,
            seed,
            index: r.round,
            n: Some(r.n),
            tau: Some(r.tau),
            iterations: Some(r.iterations),
            status: Some(r.status),
            step_size: None,
            training_objective: Some(r.training_objective),
            elbo: r.check.map(|c| c.elbo),
            elbo_std_error: r.check.map(|c| c.elbo_std_error),
            p_value: r.check.map(|c| c.p_value),
        }
    }

    pub fn from_adam(run_id: &str, repetition: usize, seed: u64, step_size: f64, r: &AdamEvalRecord) -> Self {
        Self {
            run_id: run_id.into(),
            method: "adam".into(),
            repetition,
            seed,
            index: r.iteration,
            n: None,
            tau: None,
            iterations: None,
            status: None,
            step_size: Some(step_size),
            training_objective: None,
            elbo: r.elbo,
            elbo_std_error: r.std_error,
            p_value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub run_id: String,
    pub index: usize,
    pub elapsed_seconds: f64,
}

struct Shard<T> {
    trace: Vec<TraceRecord>,
    timing: Vec<TimingRecord>,
    result: Result<T>,
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("saavi-out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the trace and timing shards in repetition order and returns the
/// successful results, or the first error after the partial trace is saved.
fn merge_shards<T>(dir: &Path, shards: Vec<Shard<T>>) -> Result<Vec<T>> {
    let mut trace = Vec::new();
    let mut timing = Vec::new();
    let mut ok = Vec::new();
    let mut first_err = None;
    for s in shards {
        trace.extend(s.trace);
        timing.extend(s.timing);
        match s.result {
            Ok(v) => ok.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    write_jsonl(&dir.join("trace.jsonl"), &trace)?;
    write_jsonl(&dir.join("timing.jsonl"), &timing)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(ok),
    }
}

#[derive(Debug, Clone, Serialize)]
struct ParamsRun {
    repetition: usize,
    seed: u64,
    theta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ParamsFile<'a> {
    model: &'a str,
    family: FamilyKind,
    dim: usize,
    layout: &'static str,
    runs: Vec<ParamsRun>,
}

fn layout(kind: FamilyKind) -> &'static str {
    match kind {
        FamilyKind::Diagonal => "mu[0..d], rho[0..d]; sd = softplus(rho)",
        FamilyKind::Dense => {
            "mu[0..d], rho[0..d], strict lower triangle of L row-major; diag(L) = softplus(rho); covariance = L L^T"
        }
    }
}

fn write_params(dir: &Path, cfg: &ExperimentConfig, model: &dyn LatentModel, runs: Vec<ParamsRun>) -> Result<()> {
    write_json(
        &dir.join("params.json"),
        &ParamsFile {
            model: model.name(),
            family: cfg.family,
            dim: model.dim(),
            layout: layout(cfg.family),
            runs,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
struct SaaSummaryRow {
    repetition: usize,
    seed: u64,
    final_elbo: f64,
    final_elbo_std_error: f64,
    stop_reason: &'static str,
    final_n: usize,
    rounds: usize,
    total_iterations: usize,
}

/// `run`: the SAA driver for each repetition. Writes `trace.jsonl`,
/// `timing.jsonl`, `summary.csv` and `params.json`.
pub fn cmd_run(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<i32> {
    let model = cfg.build_model()?;
    let model: &dyn LatentModel = model.as_ref();
    let dir = out_dir(cfg)?;
    let shards: Vec<Shard<(SaaSummaryRow, ParamsRun)>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let run_id = format!("saa-{r}");
            let saa = SaaConfig { seed, ..cfg.saa };
            let mut trace = Vec::new();
            let mut timing = Vec::new();
            let mut elapsed = 0.0;
            let result = run_saa_observed(model, cfg.family, &saa, &mut |rec| {
                elapsed += rec.seconds;
                trace.push(TraceRecord::from_round(&run_id, r, seed, rec));
                timing.push(TimingRecord {
                    run_id: run_id.clone(),
                    index: rec.round,
                    elapsed_seconds: elapsed,
                });
            })
            .and_then(|run| {
                let est = elbo_estimate(
                    model,
                    &run.theta_star,
                    saa.eval_m,
                    &mut SeededStream::new(seed, Substream::Eval, 0),
                )?;
                Ok((
                    SaaSummaryRow {
                        repetition: r,
                        seed,
                        final_elbo: est.mean,
                        final_elbo_std_error: est.std_error,
                        stop_reason: run.stop_reason.as_str(),
                        final_n: run.final_n(),
                        rounds: run.trace.len(),
                        total_iterations: run.total_iterations(),
                    },
                    ParamsRun {
                        repetition: r,
                        seed,
                        theta: run.theta_star.into_vec(),
                    },
                ))
            });
            Shard { trace, timing, result }
        })
        .collect();
    let done = merge_shards(&dir, shards)?;
    let (rows, params): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    write_csv_rows(&dir.join("summary.csv"), &rows)?;
    write_params(&dir, cfg, model, params)?;
    for r in &rows {
        writeln!(
            stdout,
            "rep {}: ELBO {:.4} ± {:.4}, stop {}, final n {}",
            r.repetition, r.final_elbo, r.final_elbo_std_error, r.stop_reason, r.final_n
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
struct AdamSummaryRow {
    repetition: usize,
    seed: u64,
    step_size: f64,
    best_elbo: Option<f64>,
    final_elbo: Option<f64>,
    diverged: bool,
}

/// `adam`: the Adam baseline at `adam.step_size` for each repetition.
pub fn cmd_adam(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<i32> {
    let model = cfg.build_model()?;
    let model: &dyn LatentModel = model.as_ref();
    let dir = out_dir(cfg)?;
    let shards: Vec<Shard<(AdamSummaryRow, ParamsRun)>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let run_id = format!("adam-{r}");
            let adam = AdamRunConfig { seed, ..cfg.adam };
            let mut trace = Vec::new();
            let mut timing = Vec::new();
            let result = run_adam_vi_observed(model, cfg.family, &adam, &mut |rec| {
                trace.push(TraceRecord::from_adam(&run_id, r, seed, adam.step_size, rec));
                timing.push(TimingRecord {
                    run_id: run_id.clone(),
                    index: rec.iteration,
                    elapsed_seconds: rec.seconds,
                });
            })
            .map(|run| {
                (
                    AdamSummaryRow {
                        repetition: r,
                        seed,
                        step_size: adam.step_size,
                        best_elbo: run.best_elbo,
                        final_elbo: run.trace.last().and_then(|t| t.elbo),
                        diverged: run.diverged,
                    },
                    ParamsRun {
                        repetition: r,
                        seed,
                        theta: run.final_params.into_vec(),
                    },
                )
            });
            Shard { trace, timing, result }
        })
        .collect();
    let done = merge_shards(&dir, shards)?;
    let (rows, params): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    write_csv_rows(&dir.join("summary.csv"), &rows)?;
    write_params(&dir, cfg, model, params)?;
    for r in &rows {
        let f = |v: Option<f64>| v.map_or("---".to_string(), |x| format!("{x:.4}"));
        writeln!(stdout, "rep {}: best ELBO {}, diverged {}", r.repetition, f(r.best_elbo), r.diverged)
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(0)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("---".to_string(), |x| format!("{x:.digits$}"))
}

/// Markdown rendering of a comparison: one row per method, then the
/// difference and time ratio of the best Adam step size against SAA.
pub fn comparison_markdown(cmp: &Comparison) -> String {
    let t = &cmp.table;
    let mut s = String::from("| method | median ELBO | median time to target (s) |\n|---|---:|---:|\n");
    for (i, row) in t.rows.iter().enumerate() {
        let mark = if Some(i) == t.best_adam { " (best)" } else { "" };
        s.push_str(&format!(
            "| {}{} | {} | {} |\n",
            row.method,
            mark,
            fmt_opt(row.median_elbo, 3),
            fmt_opt(row.median_seconds, 3)
        ));
    }
    s.push_str(&format!(
        "\ntarget: {}\ndifference (adam - saa): {}\ntime ratio (adam / saa): {}\n",
        fmt_opt(t.target, 3),
        fmt_opt(t.difference, 3),
        fmt_opt(t.time_ratio, 2)
    ));
    s
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonSummaryRow {
    target: Option<f64>,
    best_adam_step_size: Option<f64>,
    adam_median_elbo: Option<f64>,
    saa_median_elbo: Option<f64>,
    difference: Option<f64>,
    time_ratio: Option<f64>,
}

/// `compare`: Adam over `adam_grid` and SAA, `repetitions` each. Writes
/// `comparison.csv` (one row per method), `summary.csv` (difference and time
/// ratio), `comparison.md` and the traces.
pub fn cmd_compare(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<i32> {
    let model = cfg.build_model()?;
    let model: &dyn LatentModel = model.as_ref();
    let dir = out_dir(cfg)?;
    let cmp = compare_methods(model, cfg.family, &cfg.adam_grid, &cfg.adam, &cfg.saa, cfg.repetitions)?;

    let mut trace = Vec::new();
    let mut timing = Vec::new();
    let reps = cfg.repetitions;
    for (k, run) in cmp.adam_runs.iter().enumerate() {
        let r = k % reps;
        let run_id = format!("adam({})-{r}", run.config.step_size);
        for rec in &run.trace {
            trace.push(TraceRecord::from_adam(&run_id, r, run.config.seed, run.config.step_size, rec));
            timing.push(TimingRecord {
                run_id: run_id.clone(),
                index: rec.iteration,
                elapsed_seconds: rec.seconds,
            });
        }
    }
    for (r, rep) in cmp.saa_runs.iter().enumerate() {
        let run_id = format!("saa-{r}");
        let mut elapsed = 0.0;
        for rec in &rep.trace {
            elapsed += rec.seconds;
            trace.push(TraceRecord::from_round(&run_id, r, rep.seed, rec));
            timing.push(TimingRecord {
                run_id: run_id.clone(),
                index: rec.round,
                elapsed_seconds: elapsed,
            });
        }
    }
    write_jsonl(&dir.join("trace.jsonl"), &trace)?;
    write_jsonl(&dir.join("timing.jsonl"), &timing)?;

    let t = &cmp.table;
    let mut w = csv::Writer::from_path(dir.join("comparison.csv"))?;
    let mut header = vec!["method".to_string(), "step_size".into(), "median_elbo".into(), "median_seconds".into()];
    header.extend((0..reps).map(|r| format!("elbo_{r}")));
    header.extend((0..reps).map(|r| format!("seconds_{r}")));
    w.write_record(&header)?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in &t.rows {
        let mut rec = vec![row.method.clone(), cell(row.step_size), cell(row.median_elbo), cell(row.median_seconds)];
        rec.extend(row.elbos.iter().map(|v| cell(*v)));
        rec.extend(row.seconds.iter().map(|v| cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(dir.join("comparison.csv"), e))?;

    let saa_row = t.rows.last().expect("saa row");
    write_csv_rows(
        &dir.join("summary.csv"),
        &[ComparisonSummaryRow {
            target: t.target,
            best_adam_step_size: t.best_adam.and_then(|i| t.rows[i].step_size),
            adam_median_elbo: t.best_adam.and_then(|i| t.rows[i].median_elbo),
            saa_median_elbo: saa_row.median_elbo,
            difference: t.difference,
            time_ratio: t.time_ratio,
        }],
    )?;
    let md = comparison_markdown(&cmp);
    fs::write(dir.join("comparison.md"), &md).map_err(|e| Error::io(dir.join("comparison.md"), e))?;
    write_json(&dir.join("comparison.json"), t)?;
    stdout.write_all(md.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(0)
}

/// Rows of `(λ, objective, objective − ln λ)` along the unbounded path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnboundedReport {
    pub dim: usize,
    pub n: usize,
    pub rows: Vec<(f64, f64, f64)>,
    /// Largest spread of the last column.
    pub spread: f64,
    pub pass: bool,
}

/// Evaluates the training objective along the unbounded path for a dense
/// family with `n < d` noise rows against a random Gaussian target.
pub fn diagnose_unbounded(dim: usize, n: usize, seed: u64) -> Result<UnboundedReport> {
    if n >= dim {
        return Err(Error::Config(format!(
            "diagnose-unbounded requires n < d (the objective is unbounded only with fewer noise rows than dimensions), got n = {n}, d = {dim}"
        )));
    }
    let model = random_gaussian_target(dim, seed)?;
    let noise = NoiseBlock::draw(seed, Substream::Train, 1, n, dim);
    let construction = unbounded_direction(&noise)?;
    let mut rows = Vec::new();
    for k in 0..5 {
        let lambda = (k as f64).exp();
        let params = construction.make_theta(lambda)?;
        let obj = training_objective(&model, &params, &noise)?;
        rows.push((lambda, obj, obj - lambda.ln()));
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    let spread = hi - lo;
    Ok(UnboundedReport {
        dim,
        n,
        rows,
        spread,
        pass: spread <= 1e-6,
    })
}

/// `diagnose-unbounded`: CSV table on stdout, verdict on stderr.
pub fn cmd_diagnose_unbounded(
    dim: usize,
    n: usize,
    seed: u64,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let report = diagnose_unbounded(dim, n, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "objective", "objective_minus_ln_lambda"])?;
    for (l, o, c) in &report.rows {
        w.write_record([l.to_string(), o.to_string(), c.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    stdout.write_all(&bytes).map_err(|e| Error::io("<stdout>", e))?;
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    writeln!(stderr, "{verdict}: spread of objective - ln(lambda) is {:.3e} (d = {dim}, n = {n})", report.spread)
        .map_err(|e| Error::io("<stderr>", e))?;
    Ok(if report.pass { 0 } else { 1 })
}

/// Largest finite-difference discrepancy per parameter block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub model: String,
    pub family: FamilyKind,
    pub points: usize,
    /// `(block name, max relative error)`: `mu`, `rho`, and `lower` for dense.
    pub blocks: Vec<(String, f64)>,
    pub threshold: f64,
}

impl GradientReport {
    pub fn pass(&self) -> bool {
        self.blocks.iter().all(|(_, e)| *e <= self.threshold)
    }
}

/// Gradient under test: `(model, params, noise) ↦ ∇θ objective`.
pub type GradientFn<'a> = dyn Fn(&dyn LatentModel, &VariationalParams, &NoiseBlock) -> Result<Vec<f64>> + 'a;

/// Compares `grad` with central differences of the training objective at
/// `points` random `(θ, noise)` pairs (8 noise rows each, draws from the aux
/// substream). Relative error is `|a − b| / max(1, |b|)`.
pub fn check_gradients_with(
    model: &dyn LatentModel,
    kind: FamilyKind,
    points: usize,
    seed: u64,
    grad: &GradientFn<'_>,
) -> Result<GradientReport> {
    let d = model.dim();
    let mut worst = [0.0f64; 3];
    for k in 0..points {
        let mut s = SeededStream::new(seed, Substream::Aux, 10_000 + k as u64);
        let theta: Vec<f64> = (0..kind.param_len(d)).map(|_| 0.5 * s.standard_normal()).collect();
        let params = VariationalParams::new(kind, d, theta.clone())?;
        let noise = NoiseBlock::from_stream(&mut s, 8, d);
        let analytic = grad(model, &params, &noise)?;
        let fd = finite_difference_gradient(
            |t| {
                params
                    .with_theta(t.to_vec())
                    .and_then(|p| training_objective(model, &p, &noise))
                    .unwrap_or(f64::NAN)
            },
            &theta,
        );
        let blocks = [0..d, d..2 * d, 2 * d..theta.len()];
        for (b, range) in blocks.into_iter().enumerate() {
            if !range.is_empty() {
                let e = max_relative_error(&analytic[range.clone()], &fd[range]);
                worst[b] = if e.is_nan() { f64::INFINITY } else { worst[b].max(e) };
            }
        }
    }
    let names = ["mu", "rho", "lower"];
    let nblocks = if kind == FamilyKind::Dense && d > 1 { 3 } else { 2 };
    Ok(GradientReport {
        model: model.name().to_string(),
        family: kind,
        points,
        blocks: (0..nblocks).map(|b| (names[b].to_string(), worst[b])).collect(),
        threshold: 1e-5,
    })
}

/// `check-gradients`: exit 0 iff every block is within `1e-5`.
pub fn cmd_check_gradients(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<i32> {
    let model = cfg.build_model()?;
    let grad = |m: &dyn LatentModel, p: &VariationalParams, n: &NoiseBlock| training_gradient(m, p, n);
    let report = check_gradients_with(model.as_ref(), cfg.family, cfg.gradient_points, cfg.seed, &grad)?;
    write_gradient_report(&report, stdout)?;
    Ok(if report.pass() { 0 } else { 1 })
}

pub fn write_gradient_report(report: &GradientReport, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "model {} family {} points {}", report.model, report.family, report.points).map_err(io)?;
    writeln!(out, "block,max_relative_error").map_err(io)?;
    for (name, e) in &report.blocks {
        writeln!(out, "{name},{e:.3e}").map_err(io)?;
    }
    writeln!(out, "{}", if report.pass() { "PASS" } else { "FAIL" }).map_err(io)
}
