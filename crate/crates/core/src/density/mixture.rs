use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Standard};

use crate::density::{Density, Gaussian};
use crate::error::{Error, Result};

/// Finite mixture of component densities.
///
/// Log-density evaluation uses log-sum-exp with max subtraction, so
/// components may underflow individually without poisoning the result.
/// Gradient and Hessian come from the responsibility identities
///
/// ```text
/// ∇ log p   = Σ_i r_i s_i
/// ∇² log p  = Σ_i r_i (H_i + s_i s_iᵀ) − (∇ log p)(∇ log p)ᵀ
/// ```
///
/// with `r_i` the posterior component probabilities at the point and
/// `s_i`, `H_i` the component score and log-density Hessian.
///
/// Zero weights are allowed; those components are skipped during
/// evaluation and never selected when sampling. This supports
/// leave-one-out reweighting without rebuilding component lists.
#[derive(Clone)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Arc<dyn Density>>,
    dim: usize,
}

impl Mixture {
    /// Builds a mixture from nonnegative weights summing to one.
    pub fn new(weights: Vec<f64>, components: Vec<Arc<dyn Density>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        for (index, &value) in weights.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightsNotNormalized { sum });
        }
        let dim = components[0].dim();
        for c in &components[1..] {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        Ok(Self {
            weights,
            components,
            dim,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Arc<dyn Density>] {
        &self.components
    }

    /// Same components with a different weight vector.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, self.components.clone())
    }

    /// Active (positive-weight) component indices with `ln w_i + log p_i(x)`.
    fn weighted_log_terms(&self, x: &DVector<f64>) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (i, w.ln() + self.components[i].log_density(x)))
            .collect()
    }

    /// Log-density together with the posterior component probabilities.
    fn log_density_and_responsibilities(&self, x: &DVector<f64>) -> (f64, Vec<(usize, f64)>) {
        let terms = self.weighted_log_terms(x);
        let max = terms.iter().fold(f64::NEG_INFINITY, |a, &(_, t)| a.max(t));
        let sum: f64 = terms.iter().map(|&(_, t)| (t - max).exp()).sum();
        let log_p = max + sum.ln();
        let resp = terms
            .into_iter()
            .map(|(i, t)| (i, ((t - max).exp()) / sum))
            .collect();
        (log_p, resp)
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let terms = self.weighted_log_terms(x);
        let max = terms.iter().fold(f64::NEG_INFINITY, |a, &(_, t)| a.max(t));
        max + terms
            .iter()
            .map(|&(_, t)| (t - max).exp())
            .sum::<f64>()
            .ln()
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, resp) = self.log_density_and_responsibilities(x);
        let mut g = DVector::zeros(self.dim);
        for (i, r) in resp {
            if r > 0.0 {
                g += self.components[i].grad_log_density(x) * r;
            }
        }
        g
    }

    fn hess_log_density(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (_, resp) = self.log_density_and_responsibilities(x);
        let mut g = DVector::zeros(self.dim);
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (i, r) in resp {
            if r > 0.0 {
                let s = self.components[i].grad_log_density(x);
                h += (self.components[i].hess_log_density(x) + &s * s.transpose()) * r;
                g += s * r;
            }
        }
        h - &g * g.transpose()
    }

    fn family_name(&self) -> &'static str {
        "mixture"
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        let u: f64 = Standard.sample(rng);
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                cumulative += w;
                chosen = Some(i);
                if u < cumulative {
                    break;
                }
            }
        }
        let i = chosen.expect("mixture has at least one positive weight");
        self.components[i].sample_one(rng)
    }

    fn integration_box(&self, sd_factor: f64) -> Option<Vec<(f64, f64)>> {
        let mut bounds: Option<Vec<(f64, f64)>> = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let cb = self.components[i].integration_box(sd_factor)?;
            bounds = Some(match bounds {
                None => cb,
                Some(acc) => acc
                    .into_iter()
                    .zip(cb)
                    .map(|((lo_a, hi_a), (lo_b, hi_b))| (lo_a.min(lo_b), hi_a.max(hi_b)))
                    .collect(),
            });
        }
        bounds
    }
}

/// Gaussian mixture from parallel lists of weights, means, and covariances.
pub fn gaussian_mixture(
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
) -> Result<Mixture> {
    if means.len() != covariances.len() {
        return Err(Error::DimensionMismatch {
            expected: means.len(),
            got: covariances.len(),
        });
    }
    let components = means
        .into_iter()
        .zip(covariances)
        .map(|(m, c)| Gaussian::new(m, c).map(|g| Arc::new(g) as Arc<dyn Density>))
        .collect::<Result<Vec<_>>>()?;
    Mixture::new(weights, components)
}

/// Gaussian kernel density estimate: an equal-weight mixture of isotropic
/// Gaussians with variance `bandwidth²` centered at the data points.
pub fn kde(points: &[DVector<f64>], bandwidth: f64) -> Result<Mixture> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    let n = points.len();
    let components = points
        .iter()
        .map(|p| {
            Gaussian::isotropic(p.clone(), bandwidth * bandwidth)
                .map(|g| Arc::new(g) as Arc<dyn Density>)
        })
        .collect::<Result<Vec<_>>>()?;
    Mixture::new(vec![1.0 / n as f64; n], components)
}

/// Two-point mixture path `(1−t)·q + t·p` for `t ∈ [0, 1]`.
pub fn mixture_path(q: Arc<dyn Density>, p: Arc<dyn Density>, t: f64) -> Result<Mixture> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::PathParameterOutOfRange(t));
    }
    Mixture::new(vec![1.0 - t, t], vec![q, p])
}
