use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::dot;

#[derive(Debug, Clone, PartialEq)]
struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Ring buffer of `(s, y)` pairs for the two-loop recursion.
///
/// Pairs are stored in minimization form: for the maximized `f`,
/// `y = ∇(−f)(θₖ₊₁) − ∇(−f)(θₖ)`, so curvature of a concave problem shows up
/// as `⟨s, y⟩ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<CurvaturePair>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            pairs: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` if `⟨s, y⟩ > 1e-10·‖s‖‖y‖`; returns whether it was kept.
    /// The oldest pair is evicted when full.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let bound = 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > bound) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
        true
    }

    /// Stores a pair given the change in the gradient of the maximized function.
    pub fn push_ascent(&mut self, s: Vec<f64>, ascent_grad_change: &[f64]) -> bool {
        let y = ascent_grad_change.iter().map(|g| -g).collect();
        self.push(s, y)
    }

    /// `γ = ⟨s, y⟩ / ⟨y, y⟩` of the newest pair, or 1 when empty.
    pub fn initial_scaling(&self) -> f64 {
        self.pairs
            .back()
            .map_or(1.0, |p| 1.0 / (p.rho * dot(&p.y, &p.y)))
    }
}

/// Ascent direction `r = H ∇f` from the two-loop recursion, where `H` is the
/// L-BFGS inverse-Hessian approximation of `−f`. Returns `grad` unchanged for
/// an empty history.
pub fn two_loop_direction(grad: &[f64], history: &LbfgsHistory) -> Result<Vec<f64>> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Contract("two_loop_direction needs a finite gradient".into()));
    }
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = history.initial_scaling();
    for qi in &mut q {
        *qi *= gamma;
    }
    for (p, a) in history.pairs.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_returns_gradient() {
        let h = LbfgsHistory::new(5);
        assert_eq!(two_loop_direction(&[1.0, -2.0], &h).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let h = LbfgsHistory::new(5);
        assert!(two_loop_direction(&[f64::NAN], &h).is_err());
    }

    #[test]
    fn skips_non_positive_curvature() {
        let mut h = LbfgsHistory::new(3);
        assert!(!h.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!h.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(h.is_empty());
        assert!(h.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn evicts_oldest() {
        let mut h = LbfgsHistory::new(2);
        for k in 1..=3 {
            assert!(h.push(vec![k as f64], vec![1.0]));
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.pairs.front().unwrap().s, vec![2.0]);
    }

    #[test]
    fn secant_condition_after_one_pair() {
        // maximize f(θ) = −½θᵀAθ + bᵀθ: y (min form) = A s
        let a = [[3.0, 1.0], [1.0, 2.0]];
        let s = vec![0.5, -0.25];
        let y: Vec<f64> = (0..2).map(|i| a[i][0] * s[0] + a[i][1] * s[1]).collect();
        let mut h = LbfgsHistory::new(10);
        assert!(h.push(s.clone(), y.clone()));
        let hy = two_loop_direction(&y, &h).unwrap();
        for i in 0..2 {
            assert!((hy[i] - s[i]).abs() < 1e-14);
        }
    }
}
