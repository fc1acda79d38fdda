use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Open01};

use crate::density::Density;
use crate::error::{Error, Result};

/// Product of independent logistic densities, one per coordinate.
///
/// Coordinate `j` has location `loc[j]` and scale `s[j] > 0`; with
/// `z = (x_j - loc_j) / s_j` the coordinate log-density is
/// `-ln s_j - z - 2 ln(1 + e^{-z})`. A heavy-tailed non-Gaussian test bed:
/// the log-density Hessian is diagonal and state-dependent.
#[derive(Debug, Clone)]
pub struct LogisticProduct {
    locations: DVector<f64>,
    scales: DVector<f64>,
}

/// Numerically stable `ln(1 + e^t)`.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LogisticProduct {
    pub fn new(locations: DVector<f64>, scales: DVector<f64>) -> Result<Self> {
        if locations.len() != scales.len() {
            return Err(Error::DimensionMismatch {
                expected: locations.len(),
                got: scales.len(),
            });
        }
        for (index, &value) in scales.iter().enumerate() {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::NonPositiveScale { index, value });
            }
        }
        Ok(Self { locations, scales })
    }

    /// Standard logistic product: all locations 0, all scales 1.
    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DVector::from_element(dim, 1.0))
            .expect("unit scales are positive")
    }

    fn standardized(&self, x: &DVector<f64>, j: usize) -> f64 {
        (x[j] - self.locations[j]) / self.scales[j]
    }
}

impl Density for LogisticProduct {
    fn dim(&self) -> usize {
        self.locations.len()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        (0..self.dim())
            .map(|j| {
                let z = self.standardized(x, j);
                -self.scales[j].ln() - z - 2.0 * softplus(-z)
            })
            .sum()
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|j| {
                let z = self.standardized(x, j);
                -(z / 2.0).tanh() / self.scales[j]
            }),
        )
    }

    fn hess_log_density(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for j in 0..d {
            let t = (self.standardized(x, j) / 2.0).tanh();
            h[(j, j)] = -(1.0 - t * t) / (2.0 * self.scales[j] * self.scales[j]);
        }
        h
    }

    fn laplacian_log_density(&self, x: &DVector<f64>) -> f64 {
        (0..self.dim())
            .map(|j| {
                let t = (self.standardized(x, j) / 2.0).tanh();
                -(1.0 - t * t) / (2.0 * self.scales[j] * self.scales[j])
            })
            .sum()
    }

    fn family_name(&self) -> &'static str {
        "logistic"
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        // Inverse-CDF sampling: z = ln(u / (1 - u)) with u in the open unit interval.
        Ok(DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|j| {
                let u: f64 = Open01.sample(rng);
                self.locations[j] + self.scales[j] * (u / (1.0 - u)).ln()
            }),
        ))
    }

    fn integration_box(&self, sd_factor: f64) -> Option<Vec<(f64, f64)>> {
        // Logistic standard deviation is s·π/√3.
        let sd_unit = std::f64::consts::PI / 3f64.sqrt();
        Some(
            self.locations
                .iter()
                .zip(self.scales.iter())
                .map(|(&m, &s)| {
                    let half = sd_factor * s * sd_unit;
                    (m - half, m + half)
                })
                .collect(),
        )
    }
}
