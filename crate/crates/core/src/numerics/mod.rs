//! Scalar transforms, reproducible reductions, small dense linear algebra,
//! seeded sampling and the two-sample t-test.

mod linalg;
mod rng;
mod ttest;

pub use linalg::{cholesky, dot, tri_matvec, LowerTriangular, Matrix};
pub use rng::{standard_normal_matrix, SeededStream, Substream};
pub use ttest::{
    ln_gamma, regularized_incomplete_beta, student_t_cdf, welch_t_test, TTestResult,
};

use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(1 + eˣ)` without overflow for large `x` or precision loss for very negative `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: `ln(eʸ − 1)` for `y > 0`.
pub fn softplus_inverse(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!(
            "softplus_inverse requires a finite y > 0, got {y}"
        )));
    }
    if y > 20.0 {
        Ok(y + (-(-y).exp()).ln_1p())
    } else {
        Ok(y.exp_m1().ln())
    }
}

/// Derivative of softplus, i.e. the logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = −softplus(−x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is bit-identical for a given input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for x in v {
            acc += x;
        }
        acc
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Mean by pairwise summation. Returns NaN for an empty slice.
pub fn stable_mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample standard deviation (two-pass). Returns NaN when `v.len() < 2`.
pub fn stable_sd(v: &[f64]) -> f64 {
    stable_variance(v).sqrt()
}

pub(crate) fn stable_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = stable_mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (v.len() - 1) as f64
}

/// Median of a slice (average of the two middle values for even lengths).
/// NaN entries sort last.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(100.0) - 100.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(800.0).is_finite());
    }

    #[test]
    fn softplus_inverse_rejects_non_positive() {
        assert!(matches!(softplus_inverse(0.0), Err(Error::Domain(_))));
        assert!(matches!(softplus_inverse(-1.0), Err(Error::Domain(_))));
        assert!(softplus_inverse(f64::NAN).is_err());
    }

    #[test]
    fn softplus_round_trip_grid() {
        for i in 0..=600 {
            let x = -30.0 + 0.1 * i as f64;
            let back = softplus_inverse(softplus(x)).unwrap();
            assert!((back - x).abs() < 1e-10, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn sigmoid_is_softplus_derivative() {
        for &x in &[-5.0, -0.3, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(stable_mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((stable_sd(&[2.0, 4.0]) - 2f64.sqrt()).abs() < 1e-15);
        let v = vec![0.1; 1 << 20];
        assert!((stable_mean(&v) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    proptest! {
        #[test]
        fn softplus_strictly_increasing_and_above_hinge(x in -30.0f64..30.0, dx in 1e-3f64..5.0) {
            prop_assert!(softplus(x + dx) > softplus(x));
            prop_assert!(softplus(x) > x.max(0.0));
        }

        #[test]
        fn softplus_round_trip(x in -30.0f64..30.0) {
            prop_assert!((softplus_inverse(softplus(x)).unwrap() - x).abs() < 1e-10);
        }
    }
}
