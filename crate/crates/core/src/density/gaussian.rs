use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::density::Density;
use crate::error::{Error, Result};

/// Multivariate Gaussian with general positive-definite covariance.
///
/// The covariance factorization is computed once at construction; evaluation
/// of the log-density and its derivatives reuses it. The Hessian of the
/// log-density is the constant matrix `-cov^{-1}`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    chol_l: DMatrix<f64>,
    neg_precision: DMatrix<f64>,
    log_norm: f64,
    laplacian: f64,
    coord_sd: DVector<f64>,
}

impl Gaussian {
    /// Builds a Gaussian from a mean vector and covariance matrix.
    ///
    /// The covariance must be symmetric and positive definite; a failed
    /// Cholesky factorization is reported with the smallest eigenvalue of
    /// the symmetrized input.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        let scale = cov.amax().max(1.0);
        let max_asymmetry = (&cov - cov.transpose()).amax();
        if max_asymmetry > 1e-12 * scale {
            return Err(Error::CovarianceNotSymmetric { max_asymmetry });
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            let min_eigenvalue = cov
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            Error::CovarianceNotPositiveDefinite { min_eigenvalue }
        })?;
        let chol_l = chol.l();
        // log det Σ from the Cholesky diagonal
        let log_det: f64 = chol_l.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let neg_precision = -chol.inverse();
        let laplacian = neg_precision.trace();
        let coord_sd = DVector::from_iterator(d, (0..d).map(|i| cov[(i, i)].sqrt()));
        Ok(Self {
            mean,
            chol,
            chol_l,
            neg_precision,
            log_norm,
            laplacian,
            coord_sd,
        })
    }

    /// Gaussian with covariance `var * I`.
    pub fn isotropic(mean: DVector<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::from_diagonal_element(d, d, var))
    }

    /// Standard normal on `R^dim`.
    pub fn standard(dim: usize) -> Self {
        Self::isotropic(DVector::zeros(dim), 1.0).expect("identity covariance is positive definite")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let centered = x - &self.mean;
        // (x-μ)ᵀ Σ⁻¹ (x-μ) via the stored factorization
        let solved = self.chol.solve(&centered);
        self.log_norm - 0.5 * centered.dot(&solved)
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let centered = x - &self.mean;
        -self.chol.solve(&centered)
    }

    fn hess_log_density(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.neg_precision.clone()
    }

    fn laplacian_log_density(&self, _x: &DVector<f64>) -> f64 {
        self.laplacian
    }

    fn family_name(&self) -> &'static str {
        "gaussian"
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        Ok(&self.mean + &self.chol_l * z)
    }

    fn integration_box(&self, sd_factor: f64) -> Option<Vec<(f64, f64)>> {
        Some(
            self.mean
                .iter()
                .zip(self.coord_sd.iter())
                .map(|(&m, &s)| (m - sd_factor * s, m + sd_factor * s))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fd::{fd_gradient, fd_hessian};
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_point(dim: usize, seed: u64) -> DVector<f64> {
        let mut rng = substream(seed, 0);
        DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-3.0..3.0)))
    }

    #[test]
    fn standard_normal_score_at_two() {
        let p = Gaussian::standard(1);
        let x = DVector::from_element(1, 2.0);
        assert_relative_eq!(p.grad_log_density(&x)[0], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn log_density_matches_closed_form_in_one_dim() {
        let p = Gaussian::standard(1);
        let x = DVector::from_element(1, 0.7);
        let expected = -0.5 * 0.7f64.powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(p.log_density(&x), expected, epsilon = 1e-14);
    }

    #[test]
    fn hessian_is_constant_negative_precision() {
        let p = Gaussian::isotropic(DVector::from_element(1, 3.0), 1.0).unwrap();
        for t in [-5.0, 0.0, 4.2] {
            let x = DVector::from_element(1, t);
            assert_relative_eq!(p.hess_log_density(&x)[(0, 0)], -1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn general_covariance_derivatives_match_finite_differences() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let p = Gaussian::new(DVector::from_vec(vec![0.5, -1.0]), cov).unwrap();
        for k in 0..20 {
            let x = random_point(2, 100 + k);
            let g = p.grad_log_density(&x);
            let g_fd = fd_gradient(|y| p.log_density(y), &x).unwrap();
            assert_relative_eq!(g, g_fd, epsilon = 1e-7, max_relative = 1e-5);
            let h = p.hess_log_density(&x);
            let h_fd = fd_hessian(|y| p.log_density(y), &x).unwrap();
            assert_relative_eq!(h, h_fd, epsilon = 1e-6, max_relative = 1e-4);
        }
    }

    #[test]
    fn rejects_non_positive_definite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = Gaussian::new(DVector::zeros(2), cov).unwrap_err();
        match err {
            Error::CovarianceNotPositiveDefinite { min_eigenvalue } => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-10);
            }
            other => panic!("expected positive-definiteness error, got {other}"),
        }
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(matches!(
            Gaussian::new(DVector::zeros(2), cov),
            Err(Error::CovarianceNotSymmetric { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_centered() {
        let p = Gaussian::standard(2);
        let a = p.sample(1000, 7).unwrap();
        let b = p.sample(1000, 7).unwrap();
        assert_eq!(a, b);
        let c = p.sample(1000, 8).unwrap();
        assert_ne!(a, c);

        let n = 100_000;
        let samples = p.sample(n, 42).unwrap();
        for j in 0..2 {
            let mean = samples.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() <= 5.0 * (var / n as f64).sqrt());
            assert_relative_eq!(var, 1.0, max_relative = 0.05);
        }
    }
}
