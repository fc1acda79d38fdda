//! Stein unbiased risk estimation in the Gaussian shift model.
//!
//! Observation model: `x ~ N(θ, I_d)` with unknown `θ` — identity noise
//! covariance only, which is what makes the constants below correct.
//! For an estimator `T(x) = x + g(x)` with weakly differentiable `g`,
//!
//! ```text
//! R̂(x) = 2·div g(x) + |g(x)|² + d
//! ```
//!
//! satisfies `E_θ R̂ = E_θ|T − θ|²` for every θ: the risk is estimable
//! without knowing θ. When `g = ∇log f` (the posterior mean under prior
//! π, with `f` the marginal density of `x`), `R̂` becomes
//! `2Δlog f + |∇log f|² + d` — the Hyvärinen score of `f` plus `d` — and
//! the risk itself equals the Hyvärinen divergence between `f` and the
//! sampling density `N(θ, I_d)`. The experiment runner in this module
//! verifies both facts by paired Monte Carlo against quadrature.

use std::sync::Arc;

use nalgebra::DVector;

use crate::density::{Density, Gaussian};
use crate::divergences::{hyvarinen_divergence, DivergenceResult};
use crate::error::{Error, Result};
use crate::numerics::fd::fd_divergence;
use crate::numerics::{
    expect_mc, fmt_point, EngineConfig, ExpectationResult, MonteCarloConfig, QuadratureConfig,
};
use crate::scores::hyvarinen_score;

type ShiftFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type DivFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// An estimator `T(x) = x + g(x)` of the mean of `N(θ, I_d)`.
///
/// Carries `g` and its divergence; when no analytic divergence is
/// supplied, a central finite difference stands in and the estimator is
/// flagged approximate.
#[derive(Clone)]
pub struct ShiftEstimator {
    dim: usize,
    shift: ShiftFn,
    shift_divergence: Option<DivFn>,
}

impl ShiftEstimator {
    /// Builds an estimator from `g` and, if available, its divergence.
    pub fn new(dim: usize, shift: ShiftFn, shift_divergence: Option<DivFn>) -> Self {
        Self {
            dim,
            shift,
            shift_divergence,
        }
    }

    /// The unbiased baseline `T(x) = x`.
    pub fn identity(dim: usize) -> Self {
        Self::new(
            dim,
            Arc::new(|x: &DVector<f64>| DVector::zeros(x.len())),
            Some(Arc::new(|_: &DVector<f64>| 0.0)),
        )
    }

    /// Posterior mean under the prior whose marginal data density is `f`:
    /// `T(x) = x + ∇log f(x)`, with `div g = Δlog f` taken analytically
    /// from the density interface.
    pub fn posterior_mean(f: Arc<dyn Density>) -> Self {
        let dim = f.dim();
        let g = f.clone();
        let div = f;
        Self::new(
            dim,
            Arc::new(move |x: &DVector<f64>| g.grad_log_density(x)),
            Some(Arc::new(move |x: &DVector<f64>| {
                div.laplacian_log_density(x)
            })),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `g(x)`.
    pub fn shift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.shift)(x)
    }

    /// `div g(x)`: analytic when supplied, else central finite
    /// differences of `g`.
    pub fn shift_divergence(&self, x: &DVector<f64>) -> Result<f64> {
        match &self.shift_divergence {
            Some(div) => Ok(div(x)),
            None => fd_divergence(|y| (self.shift)(y), x),
        }
    }

    /// `true` when the divergence falls back to finite differences.
    pub fn divergence_is_approximate(&self) -> bool {
        self.shift_divergence.is_none()
    }

    /// `T(x) = x + g(x)`.
    pub fn estimate(&self, x: &DVector<f64>) -> DVector<f64> {
        x + self.shift(x)
    }
}

/// The unbiased risk estimate `R̂(x) = 2·div g(x) + |g(x)|² + d`.
pub fn sure_estimate(estimator: &ShiftEstimator, x: &DVector<f64>) -> Result<f64> {
    if x.len() != estimator.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimator.dim(),
            got: x.len(),
        });
    }
    let g = estimator.shift(x);
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "estimator shift".to_string(),
            point: fmt_point(x),
        });
    }
    let div = estimator.shift_divergence(x)?;
    if !div.is_finite() {
        return Err(Error::NonFiniteValue {
            what: "shift divergence".to_string(),
            point: fmt_point(x),
        });
    }
    Ok(2.0 * div + g.norm_squared() + estimator.dim() as f64)
}

/// The risk estimate for the posterior mean written through `f`:
/// `2Δlog f(x) + |∇log f(x)|² + d`, computed as the score `2Δlog f +
/// |∇log f|²` plus `d` so the identity with the scores module is exact.
pub fn sure_log_form(f: &dyn Density, x: &DVector<f64>) -> Result<f64> {
    Ok(hyvarinen_score(f, x)? + f.dim() as f64)
}

/// Monte Carlo estimate of the quadratic risk `E_θ|T(x) − θ|²`,
/// `x ~ N(θ, I_d)`.
pub fn quadratic_risk_mc(
    estimator: &ShiftEstimator,
    theta: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<ExpectationResult> {
    if theta.len() != estimator.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimator.dim(),
            got: theta.len(),
        });
    }
    if samples < 2 {
        return Err(Error::TooFewSamples {
            got: samples,
            need: 2,
        });
    }
    let sampling = Gaussian::isotropic(theta.clone(), 1.0)
        .expect("identity covariance is positive definite");
    expect_mc(
        |x| (estimator.estimate(x) - theta).norm_squared(),
        &sampling,
        &MonteCarloConfig::new(samples, seed),
    )
}

/// Outcome of a paired risk/estimate comparison at one θ.
#[derive(Debug, Clone)]
pub struct UnbiasednessReport {
    pub theta: DVector<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Mean and standard error of `R̂(x_i)`.
    pub sure_mean: f64,
    pub sure_stderr: f64,
    /// Mean and standard error of `|T(x_i) − θ|²` on the same draws.
    pub risk_mean: f64,
    pub risk_stderr: f64,
    /// Paired difference `R̂ − |T−θ|²`: mean and standard error.
    pub mean_difference: f64,
    pub difference_stderr: f64,
    /// Quadrature value of the divergence the risk should equal, when
    /// the estimator came from a density `f` with `dim ≤ 2`.
    pub reference: Option<DivergenceResult>,
    /// `|mean difference| ≤ 5·stderr` (plus a machine-precision floor:
    /// for linear shrinkage the two statistics coincide pointwise and
    /// the paired difference is pure rounding, with a systematic sign
    /// that a bare stderr test would flag), and both means within
    /// `5·stderr + quadrature error` of the reference when present.
    pub unbiased_within_tolerance: bool,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    (mean, stderr)
}

fn run_paired_experiment(
    estimator: &ShiftEstimator,
    theta: &DVector<f64>,
    samples: usize,
    seed: u64,
    reference: Option<DivergenceResult>,
) -> Result<UnbiasednessReport> {
    if theta.len() != estimator.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimator.dim(),
            got: theta.len(),
        });
    }
    if samples < 2 {
        return Err(Error::TooFewSamples {
            got: samples,
            need: 2,
        });
    }
    let sampling = Gaussian::isotropic(theta.clone(), 1.0)
        .expect("identity covariance is positive definite");

    // common random numbers: both statistics from the same draw x_i
    use rayon::prelude::*;
    let pairs: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let x = sampling.sample_one(&mut crate::rng::substream(seed, i as u64))?;
            let sure = sure_estimate(estimator, &x)?;
            let risk = (estimator.estimate(&x) - theta).norm_squared();
            Ok((sure, risk))
        })
        .collect::<Result<Vec<_>>>()?;

    let sure_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let risk_values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff_values: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let (sure_mean, sure_stderr) = mean_and_stderr(&sure_values);
    let (risk_mean, risk_stderr) = mean_and_stderr(&risk_values);
    let (mean_difference, difference_stderr) = mean_and_stderr(&diff_values);

    let difference_floor = 1e-12 * (1.0 + sure_mean.abs() + risk_mean.abs());
    let mut ok = mean_difference.abs() <= 5.0 * difference_stderr + difference_floor;
    if let Some(reference) = &reference {
        ok = ok
            && (sure_mean - reference.value).abs()
                <= 5.0 * sure_stderr + reference.error_estimate
            && (risk_mean - reference.value).abs()
                <= 5.0 * risk_stderr + reference.error_estimate;
    }
    Ok(UnbiasednessReport {
        theta: theta.clone(),
        samples,
        seed,
        sure_mean,
        sure_stderr,
        risk_mean,
        risk_stderr,
        mean_difference,
        difference_stderr,
        reference,
        unbiased_within_tolerance: ok,
    })
}

/// Paired Monte Carlo check that `E_θ R̂ = E_θ|T − θ|²` for an arbitrary
/// shift estimator: per draw both values are recorded, and the mean of
/// their difference must sit within 5 standard errors of zero.
pub fn unbiasedness_experiment(
    estimator: &ShiftEstimator,
    theta: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    run_paired_experiment(estimator, theta, samples, seed, None)
}

/// The posterior-mean version: the estimator is `x + ∇log f(x)` and both
/// means are additionally compared against the quadrature value of the
/// divergence `E_{N(θ,I)}|∇log f − ∇log p_θ|²` the risk must equal
/// (computed when `dim ≤ 2`).
pub fn unbiasedness_experiment_with_density(
    f: Arc<dyn Density>,
    theta: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    let estimator = ShiftEstimator::posterior_mean(f.clone());
    let reference = if f.dim() <= 2 {
        let sampling = Gaussian::isotropic(theta.clone(), 1.0)
            .expect("identity covariance is positive definite");
        Some(hyvarinen_divergence(
            f.as_ref(),
            &sampling,
            &EngineConfig::Quadrature(QuadratureConfig::default()),
        )?)
    } else {
        None
    };
    run_paired_experiment(&estimator, theta, samples, seed, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::gaussian_mixture;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn marginal_n02() -> Arc<dyn Density> {
        Arc::new(Gaussian::isotropic(DVector::zeros(1), 2.0).unwrap())
    }

    #[test]
    fn identity_estimator_has_constant_sure_d() {
        for d in [1usize, 2, 3] {
            let est = ShiftEstimator::identity(d);
            let mut rng = substream(61, 0);
            for _ in 0..10 {
                let x = DVector::from_iterator(d, (0..d).map(|_| rng.gen_range(-5.0..5.0)));
                assert_eq!(sure_estimate(&est, &x).unwrap(), d as f64);
            }
        }
    }

    #[test]
    fn constant_estimator_at_origin() {
        // g(x) = −x collapses T to 0; R̂(x) = x² − 1 in one dimension
        let est = ShiftEstimator::new(
            1,
            Arc::new(|x: &DVector<f64>| -x),
            Some(Arc::new(|_: &DVector<f64>| -1.0)),
        );
        for t in [-2.0, 0.0, 0.7] {
            let x = DVector::from_element(1, t);
            assert_relative_eq!(sure_estimate(&est, &x).unwrap(), t * t - 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn posterior_mean_under_unit_prior() {
        // prior N(0,1): marginal f = N(0,2), g(x) = −x/2, R̂(x) = x²/4
        let est = ShiftEstimator::posterior_mean(marginal_n02());
        assert!(!est.divergence_is_approximate());
        for t in [-3.0, 0.0, 1.3] {
            let x = DVector::from_element(1, t);
            assert_relative_eq!(est.shift(&x)[0], -t / 2.0, epsilon = 1e-14);
            assert_relative_eq!(
                sure_estimate(&est, &x).unwrap(),
                t * t / 4.0,
                epsilon = 1e-12
            );
        }
        // x = 0: 2·(−1/2) + 0 + 1 = 0
        assert_relative_eq!(
            sure_log_form(marginal_n02().as_ref(), &DVector::zeros(1)).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_form_is_exactly_score_plus_dim_and_matches_the_estimator_form() {
        let f = marginal_n02();
        let est = ShiftEstimator::posterior_mean(f.clone());
        let mut rng = substream(62, 0);
        for _ in 0..50 {
            let x = DVector::from_element(1, rng.gen_range(-6.0..6.0));
            let log_form = sure_log_form(f.as_ref(), &x).unwrap();
            let score_plus_d = hyvarinen_score(f.as_ref(), &x).unwrap() + 1.0;
            assert_eq!(log_form.to_bits(), score_plus_d.to_bits());
            let estimator_form = sure_estimate(&est, &x).unwrap();
            assert_relative_eq!(log_form, estimator_form, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_divergence_matches_finite_differences() {
        let f: Arc<dyn Density> = Arc::new(
            gaussian_mixture(
                vec![0.5, 0.5],
                vec![DVector::from_vec(vec![-1.0, 0.5]), DVector::from_vec(vec![1.0, -0.5])],
                vec![
                    DMatrix::from_diagonal_element(2, 2, 2.0),
                    DMatrix::from_diagonal_element(2, 2, 1.5),
                ],
            )
            .unwrap(),
        );
        let est = ShiftEstimator::posterior_mean(f);
        let mut rng = substream(63, 0);
        for _ in 0..100 {
            let x = DVector::from_iterator(2, (0..2).map(|_| rng.gen_range(-3.0..3.0)));
            let analytic = est.shift_divergence(&x).unwrap();
            let fd = fd_divergence(|y| est.shift(y), &x).unwrap();
            assert_relative_eq!(analytic, fd, epsilon = 1e-5, max_relative = 1e-4);
        }
    }

    #[test]
    fn finite_difference_fallback_tracks_the_analytic_twin() {
        let f = marginal_n02();
        let with_analytic = ShiftEstimator::posterior_mean(f.clone());
        let g = f.clone();
        let without = ShiftEstimator::new(
            1,
            Arc::new(move |x: &DVector<f64>| g.grad_log_density(x)),
            None,
        );
        assert!(without.divergence_is_approximate());
        let x = DVector::from_element(1, 0.8);
        assert_relative_eq!(
            sure_estimate(&without, &x).unwrap(),
            sure_estimate(&with_analytic, &x).unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn risk_of_identity_estimator_is_the_dimension() {
        for d in [1usize, 2] {
            let est = ShiftEstimator::identity(d);
            let theta = DVector::from_element(d, 0.4);
            let r = quadratic_risk_mc(&est, &theta, 100_000, 3).unwrap();
            assert!((r.value - d as f64).abs() <= 5.0 * r.error_estimate);
        }
    }

    #[test]
    fn risk_of_constant_estimator_at_the_truth_is_zero() {
        let est = ShiftEstimator::new(
            1,
            Arc::new(|x: &DVector<f64>| -x),
            Some(Arc::new(|_: &DVector<f64>| -1.0)),
        );
        let r = quadratic_risk_mc(&est, &DVector::zeros(1), 10_000, 4).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.error_estimate, 0.0);
    }

    #[test]
    fn posterior_mean_risk_is_a_quarter_at_the_origin() {
        let est = ShiftEstimator::posterior_mean(marginal_n02());
        let r = quadratic_risk_mc(&est, &DVector::zeros(1), 200_000, 5).unwrap();
        assert!(
            (r.value - 0.25).abs() <= 5.0 * r.error_estimate,
            "risk {} ± {}",
            r.value,
            r.error_estimate
        );
    }

    #[test]
    fn identity_estimator_is_unbiased_in_the_paired_test() {
        let est = ShiftEstimator::identity(2);
        let theta = DVector::from_vec(vec![1.0, -0.5]);
        let report = unbiasedness_experiment(&est, &theta, 50_000, 6).unwrap();
        assert!(report.unbiased_within_tolerance);
        assert!(report.mean_difference.abs() <= 5.0 * report.difference_stderr);
        assert!(report.reference.is_none());
        // R̂ ≡ d for the identity estimator
        assert_eq!(report.sure_mean, 2.0);
    }

    #[test]
    fn posterior_mean_matches_divergence_reference() {
        let report = unbiasedness_experiment_with_density(
            marginal_n02(),
            &DVector::zeros(1),
            200_000,
            7,
        )
        .unwrap();
        assert!(report.unbiased_within_tolerance);
        let reference = report.reference.as_ref().unwrap();
        assert_relative_eq!(reference.value, 0.25, epsilon = 1e-9);
        assert!((report.sure_mean - 0.25).abs() <= 5.0 * report.sure_stderr);
        assert!((report.risk_mean - 0.25).abs() <= 5.0 * report.risk_stderr);
    }

    #[test]
    fn dimension_and_sample_count_validation() {
        let est = ShiftEstimator::identity(2);
        let theta = DVector::zeros(1);
        assert!(matches!(
            quadratic_risk_mc(&est, &theta, 100, 0),
            Err(Error::DimensionMismatch { .. })
        ));
        let theta = DVector::zeros(2);
        assert!(matches!(
            quadratic_risk_mc(&est, &theta, 1, 0),
            Err(Error::TooFewSamples { need: 2, .. })
        ));
    }
}
