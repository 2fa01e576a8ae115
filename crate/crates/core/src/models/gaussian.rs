use super::LatentModel;
use crate::error::{check_dim, Result};
use crate::numerics::{cholesky, dot, LowerTriangular, Matrix, SeededStream, Substream, LN_2PI};

/// `p(z, x) = exp(log_evidence) · N(z; μ*, Σ*)`.
///
/// The posterior is exactly `N(μ*, Σ*)`, so a dense Gaussian family contains
/// it and the optimal ELBO equals `log_evidence`.
#[derive(Debug, Clone)]
pub struct GaussianConjugate {
    name: String,
    mean: Vec<f64>,
    covariance: Matrix,
    chol: LowerTriangular,
    log_evidence: f64,
    log_norm: f64,
}

pub fn gaussian_conjugate_model(
    mu_star: Vec<f64>,
    sigma_star: Matrix,
    log_evidence: f64,
) -> Result<GaussianConjugate> {
    check_dim(mu_star.len(), sigma_star.rows(), "Σ* rows")?;
    let chol = cholesky(&sigma_star)?;
    let d = mu_star.len();
    let log_norm = log_evidence - 0.5 * d as f64 * LN_2PI - chol.log_det();
    Ok(GaussianConjugate {
        name: format!("gaussian-{d}d"),
        mean: mu_star,
        covariance: sigma_star,
        chol,
        log_evidence,
        log_norm,
    })
}

/// A seeded random instance: `μ* ~ N(0, I)`, `Σ* = AAᵀ/d + ½I` with standard
/// normal `A`, and `log_evidence` uniform on `[−10, 10]`. Draws come from the
/// aux substream at index `d`.
pub fn random_gaussian_target(d: usize, seed: u64) -> Result<GaussianConjugate> {
    if d == 0 {
        return Err(crate::Error::Input("dimension must be >= 1".into()));
    }
    let mut s = SeededStream::new(seed, Substream::Aux, d as u64);
    let mu: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = s.standard_normal();
        }
    }
    let mut sigma = a.matmul(&a.transpose())?;
    for i in 0..d {
        for j in 0..d {
            sigma[(i, j)] /= d as f64;
        }
        sigma[(i, i)] += 0.5;
    }
    // exact symmetry for the Cholesky check
    for i in 0..d {
        for j in 0..i {
            sigma[(j, i)] = sigma[(i, j)];
        }
    }
    let log_evidence = -10.0 + 20.0 * s.uniform();
    gaussian_conjugate_model(mu, sigma, log_evidence)
}

impl GaussianConjugate {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &LowerTriangular {
        &self.chol
    }

    fn whitened(&self, z: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.chol.solve(&r).expect("dimension checked by caller")
    }
}

impl LatentModel for GaussianConjugate {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        let u = self.whitened(z);
        self.log_norm - 0.5 * dot(&u, &u)
    }

    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let u = self.whitened(z);
        let g = self.chol.solve_transpose(&u).expect("dimension checked by caller");
        for (o, gi) in grad.iter_mut().zip(g) {
            *o = -gi;
        }
        self.log_norm - 0.5 * dot(&u, &u)
    }

    fn known_log_evidence(&self) -> Option<f64> {
        Some(self.log_evidence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{finite_difference_gradient, max_relative_error};
    use crate::numerics::{SeededStream, Substream};

    #[test]
    fn standard_normal_at_origin() {
        let m = gaussian_conjugate_model(vec![0.0], Matrix::identity(1), 0.0).unwrap();
        assert!((m.log_joint(&[0.0]) + 0.5 * LN_2PI).abs() < 1e-15);
        assert_eq!(m.known_log_evidence(), Some(0.0));
    }

    #[test]
    fn gradient_zero_at_mean() {
        let sigma = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let m = gaussian_conjugate_model(vec![1.0, -2.0], sigma, 3.0).unwrap();
        let mut g = [1.0; 2];
        m.log_joint_grad(&[1.0, -2.0], &mut g);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn rejects_non_spd() {
        let bad = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert!(gaussian_conjugate_model(vec![0.0, 0.0], bad, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut s = SeededStream::new(21, Substream::Aux, 0);
        let d = 4;
        let a = Matrix::from_vec(d, d, (0..d * d).map(|_| s.standard_normal()).collect()).unwrap();
        let mut sigma = a.matmul(&a.transpose()).unwrap();
        for i in 0..d {
            sigma[(i, i)] += 0.5;
        }
        let mu: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
        let m = gaussian_conjugate_model(mu, sigma, -1.5).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..d).map(|_| 2.0 * s.standard_normal()).collect();
            let mut g = vec![0.0; d];
            m.log_joint_grad(&z, &mut g);
            let fd = finite_difference_gradient(|z| m.log_joint(z), &z);
            assert!(max_relative_error(&g, &fd) < 1e-6);
        }
    }
}
