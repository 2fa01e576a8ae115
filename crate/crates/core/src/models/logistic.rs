use super::{Dataset, LatentModel};
use crate::error::{Error, Result};
use crate::numerics::{dot, log_sigmoid, sigmoid, LN_2PI};

/// Bayesian logistic regression with an isotropic Gaussian prior on the weights.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    name: String,
    data: Dataset,
    prior_variance: f64,
}

/// Builds the logistic-regression posterior target. One weight per feature
/// column; add a constant column to the data for an intercept.
pub fn logistic_regression_model(data: Dataset, prior_variance: f64) -> Result<LogisticRegression> {
    if !(prior_variance > 0.0) || !prior_variance.is_finite() {
        return Err(Error::Input(format!(
            "prior_variance must be positive, got {prior_variance}"
        )));
    }
    if let Some((i, y)) = data
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &y)| y != 0.0 && y != 1.0)
    {
        return Err(Error::Input(format!(
            "logistic regression labels must be 0 or 1; record {i} has {y}"
        )));
    }
    Ok(LogisticRegression {
        name: format!("logistic-{}x{}", data.len(), data.num_features()),
        data,
        prior_variance,
    })
}

impl LogisticRegression {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    fn log_prior(&self, w: &[f64]) -> f64 {
        let d = w.len() as f64;
        -0.5 * d * (LN_2PI + self.prior_variance.ln()) - 0.5 * dot(w, w) / self.prior_variance
    }
}

impl LatentModel for LogisticRegression {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.data.num_features()
    }

    fn log_joint(&self, w: &[f64]) -> f64 {
        let x = self.data.features();
        let mut ll = 0.0;
        for (row, &y) in x.iter_rows().zip(self.data.labels()) {
            let eta = dot(row, w);
            ll += if y == 1.0 {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            };
        }
        ll + self.log_prior(w)
    }

    fn log_joint_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let x = self.data.features();
        for (g, wi) in grad.iter_mut().zip(w) {
            *g = -wi / self.prior_variance;
        }
        let mut ll = 0.0;
        for (row, &y) in x.iter_rows().zip(self.data.labels()) {
            let eta = dot(row, w);
            ll += if y == 1.0 {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            };
            let r = y - sigmoid(eta);
            for (g, xi) in grad.iter_mut().zip(row) {
                *g += r * xi;
            }
        }
        ll + self.log_prior(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{finite_difference_gradient, max_relative_error, synthetic_logistic};
    use crate::numerics::{Matrix, SeededStream, Substream};

    #[test]
    fn value_at_origin() {
        let data = synthetic_logistic(17, 3, 4, false);
        let m = logistic_regression_model(data, 1.0).unwrap();
        let expected = 17.0 * 0.5f64.ln() - 1.5 * LN_2PI;
        assert!((m.log_joint(&[0.0; 3]) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_record_gradient() {
        let data = Dataset::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![1.0], None).unwrap();
        let m = logistic_regression_model(data, 1.0).unwrap();
        let mut g = [0.0];
        m.log_joint_grad(&[0.0], &mut g);
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_labels_and_prior() {
        let data = Dataset::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![2.0], None).unwrap();
        assert!(matches!(logistic_regression_model(data.clone(), 1.0), Err(Error::Input(_))));
        let ok = Dataset::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![1.0], None).unwrap();
        assert!(logistic_regression_model(ok, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = logistic_regression_model(synthetic_logistic(60, 4, 2, true), 2.0).unwrap();
        let mut s = SeededStream::new(8, Substream::Aux, 1);
        for _ in 0..20 {
            let w: Vec<f64> = (0..m.dim()).map(|_| s.standard_normal()).collect();
            let mut g = vec![0.0; m.dim()];
            let v = m.log_joint_grad(&w, &mut g);
            assert_eq!(v, m.log_joint(&w));
            let fd = finite_difference_gradient(|z| m.log_joint(z), &w);
            assert!(max_relative_error(&g, &fd) < 1e-6);
        }
    }
}
