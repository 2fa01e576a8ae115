use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strong Wolfe line search settings (ascent form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchConfig {
    pub c1: f64,
    pub c2: f64,
    /// Cap on function evaluations per search.
    pub max_evals: usize,
    /// Steps beyond this are not tried while bracketing.
    pub max_step: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 30,
            max_step: 1e10,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "line search needs 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.max_evals == 0 || !(self.max_step > 0.0) {
            return Err(Error::Config("line search needs max_evals > 0 and max_step > 0".into()));
        }
        Ok(())
    }
}

/// One evaluation of `φ(γ) = f(θ + γ r)` and its slope `φ'(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinePoint {
    pub step: f64,
    pub value: f64,
    pub slope: f64,
}

/// Evidence that an accepted step satisfies both strong Wolfe inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCertificate {
    pub step: f64,
    pub value0: f64,
    pub slope0: f64,
    pub value: f64,
    pub slope: f64,
    pub c1: f64,
    pub c2: f64,
}

impl StepCertificate {
    pub fn sufficient_increase(&self) -> bool {
        self.value >= self.value0 + self.c1 * self.step * self.slope0
    }

    pub fn curvature(&self) -> bool {
        self.slope.abs() <= self.c2 * self.slope0.abs()
    }

    pub fn satisfies_strong_wolfe(&self) -> bool {
        self.sufficient_increase() && self.curvature()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSearchOutcome {
    Accepted {
        point: LinePoint,
        certificate: StepCertificate,
        evals: usize,
    },
    /// No acceptable step within the budget; `best` is the highest finite
    /// trial, if any improved on `φ(0)`.
    Failed { best: Option<LinePoint>, evals: usize },
}

struct Search<'a, F> {
    phi: F,
    cfg: &'a LineSearchConfig,
    value0: f64,
    slope0: f64,
    evals: usize,
    best: Option<LinePoint>,
}

impl<F: FnMut(f64) -> Option<(f64, f64)>> Search<'_, F> {
    fn eval(&mut self, step: f64) -> Option<LinePoint> {
        self.evals += 1;
        let (value, slope) = (self.phi)(step)?;
        if !value.is_finite() || !slope.is_finite() {
            return None;
        }
        let p = LinePoint { step, value, slope };
        if value > self.value0 && self.best.is_none_or(|b| value > b.value) {
            self.best = Some(p);
        }
        Some(p)
    }

    fn armijo(&self, p: &LinePoint) -> bool {
        p.value >= self.value0 + self.cfg.c1 * p.step * self.slope0
    }

    fn curvature(&self, p: &LinePoint) -> bool {
        p.slope.abs() <= self.cfg.c2 * self.slope0.abs()
    }

    fn budget_left(&self) -> bool {
        self.evals < self.cfg.max_evals
    }

    fn accept(&self, point: LinePoint) -> LineSearchOutcome {
        let certificate = StepCertificate {
            step: point.step,
            value0: self.value0,
            slope0: self.slope0,
            value: point.value,
            slope: point.slope,
            c1: self.cfg.c1,
            c2: self.cfg.c2,
        };
        debug_assert!(certificate.sufficient_increase());
        debug_assert!(certificate.curvature());
        LineSearchOutcome::Accepted {
            point,
            certificate,
            evals: self.evals,
        }
    }

    fn fail(&self) -> LineSearchOutcome {
        LineSearchOutcome::Failed {
            best: self.best,
            evals: self.evals,
        }
    }

    /// `lo` satisfies sufficient increase and has the best value seen in the
    /// bracket; `hi` is the other end (possibly a failed evaluation).
    fn zoom(&mut self, mut lo: LinePoint, mut hi_step: f64, mut hi: Option<LinePoint>) -> LineSearchOutcome {
        while self.budget_left() {
            let width = (hi_step - lo.step).abs();
            if width <= 1e-16 * lo.step.abs().max(1.0) {
                break;
            }
            let trial = match hi {
                Some(h) => interpolate(&lo, &h),
                None => 0.5 * (lo.step + hi_step),
            };
            match self.eval(trial) {
                None => {
                    hi_step = trial;
                    hi = None;
                }
                Some(p) => {
                    if !self.armijo(&p) || p.value <= lo.value {
                        hi_step = trial;
                        hi = Some(p);
                    } else {
                        if self.curvature(&p) {
                            return self.accept(p);
                        }
                        if p.slope * (hi_step - lo.step) <= 0.0 {
                            hi_step = lo.step;
                            hi = Some(lo);
                        }
                        lo = p;
                    }
                }
            }
        }
        self.fail()
    }
}

/// Cubic interpolation of the maximizer between two points, safeguarded to
/// the interior of the bracket; falls back to bisection.
fn interpolate(a: &LinePoint, b: &LinePoint) -> f64 {
    let (lo, hi) = if a.step < b.step { (a.step, b.step) } else { (b.step, a.step) };
    let mid = 0.5 * (lo + hi);
    let margin = 0.1 * (hi - lo);
    // minimize ψ = −φ
    let (fa, fb, da, db) = (-a.value, -b.value, -a.slope, -b.slope);
    let d1 = da + db - 3.0 * (fa - fb) / (a.step - b.step);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b.step - a.step).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let x = b.step - (b.step - a.step) * (db + d2 - d1) / denom;
    if x.is_finite() && x >= lo + margin && x <= hi - margin {
        x
    } else {
        mid
    }
}

/// Strong Wolfe line search for maximizing `φ(γ) = f(θ + γ r)` along an
/// ascent direction (`slope0 > 0`).
///
/// `phi(γ)` returns `(φ(γ), φ'(γ))`, or `None` when the objective cannot be
/// evaluated there; such trials and non-finite values are treated as too long
/// a step. Uses bracketing followed by cubic zoom.
pub fn wolfe_line_search<F>(
    phi: F,
    value0: f64,
    slope0: f64,
    initial_step: f64,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Option<(f64, f64)>,
{
    cfg.validate()?;
    if !(slope0 > 0.0) || !slope0.is_finite() || !value0.is_finite() {
        return Err(Error::Contract(format!(
            "line search needs a finite start and an ascent direction, got slope {slope0}"
        )));
    }
    if !(initial_step > 0.0) || !initial_step.is_finite() {
        return Err(Error::Contract(format!("initial step must be positive, got {initial_step}")));
    }
    let mut s = Search {
        phi,
        cfg,
        value0,
        slope0,
        evals: 0,
        best: None,
    };
    let origin = LinePoint {
        step: 0.0,
        value: value0,
        slope: slope0,
    };
    let mut prev = origin;
    let mut step = initial_step.min(cfg.max_step);
    let mut first = true;
    while s.budget_left() {
        let Some(p) = s.eval(step) else {
            return Ok(s.zoom(prev, step, None));
        };
        if !s.armijo(&p) || (!first && p.value <= prev.value) {
            return Ok(s.zoom(prev, step, Some(p)));
        }
        if s.curvature(&p) {
            return Ok(s.accept(p));
        }
        if p.slope <= 0.0 {
            return Ok(s.zoom(p, prev.step, Some(prev)));
        }
        if step >= cfg.max_step {
            break;
        }
        prev = p;
        step = (2.0 * step).min(cfg.max_step);
        first = false;
    }
    Ok(s.fail())
}
