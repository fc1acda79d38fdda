//! Expectation engines and derivative oracles.
//!
//! Two interchangeable ways to compute `E_q[f]`: deterministic composite
//! Gauss–Legendre quadrature (d ≤ 2) and seeded Monte Carlo (any d with a
//! sampler). Every result carries an error estimate so that comparisons
//! downstream can combine the uncertainties of both sides instead of
//! relying on magic constants.

pub mod fd;
mod montecarlo;
mod quadrature;

pub use montecarlo::expect_mc;
pub use quadrature::expect_quadrature;

use nalgebra::DVector;

use crate::density::Density;
use crate::error::Result;

/// Integration domain for the quadrature engine.
#[derive(Debug, Clone)]
pub enum DomainPolicy {
    /// Axis-aligned box from the density: per coordinate, component means
    /// ± `sd_factor` standard deviations.
    Auto { sd_factor: f64 },
    /// Explicit per-coordinate bounds.
    Bounds(Vec<(f64, f64)>),
}

impl Default for DomainPolicy {
    fn default() -> Self {
        // ±12 sd leaves sub-1e-9 mass outside for all built-in families
        DomainPolicy::Auto { sd_factor: 12.0 }
    }
}

/// Configuration of the composite Gauss–Legendre engine.
#[derive(Debug, Clone)]
pub struct QuadratureConfig {
    /// Node budget per axis; rounded up to whole panels of order 16.
    pub nodes_per_axis: usize,
    pub domain: DomainPolicy,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_axis: 401,
            domain: DomainPolicy::default(),
        }
    }
}

impl QuadratureConfig {
    pub fn with_nodes(nodes_per_axis: usize) -> Self {
        Self {
            nodes_per_axis,
            ..Self::default()
        }
    }
}

/// Configuration of the Monte Carlo engine.
#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
    /// Scheduling granularity for parallel evaluation. Has no effect on
    /// the result: sample `i` always comes from substream `(seed, i)` and
    /// the reduction runs in index order.
    pub chunk_size: usize,
}

impl MonteCarloConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            chunk_size: 8192,
        }
    }
}

/// Engine choice plus parameters, as selected by callers and the CLI.
#[derive(Debug, Clone)]
pub enum EngineConfig {
    Quadrature(QuadratureConfig),
    MonteCarlo(MonteCarloConfig),
}

/// Which engine produced a value, with the parameters that determined it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineDescriptor {
    Quadrature {
        nodes_per_axis: usize,
        panels_per_axis: usize,
        dim: usize,
    },
    MonteCarlo {
        samples: usize,
        seed: u64,
        chunk_size: usize,
    },
}

/// An expectation value with its uncertainty.
///
/// `error_estimate` is the node-doubling difference for quadrature and
/// the standard error of the mean for Monte Carlo; it is always finite
/// and nonnegative.
#[derive(Debug, Clone)]
pub struct ExpectationResult {
    pub value: f64,
    pub error_estimate: f64,
    pub engine: EngineDescriptor,
}

impl ExpectationResult {
    /// `true` when the two values agree within the sum of both error
    /// estimates plus `slack` statistical tolerance.
    pub fn agrees_with(&self, other: &ExpectationResult, slack: f64) -> bool {
        (self.value - other.value).abs() <= self.error_estimate + other.error_estimate + slack
    }
}

/// Computes `E_q[f]` with whichever engine the config selects.
pub fn expect<F>(f: F, q: &dyn Density, config: &EngineConfig) -> Result<ExpectationResult>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    match config {
        EngineConfig::Quadrature(c) => expect_quadrature(f, q, c),
        EngineConfig::MonteCarlo(c) => expect_mc(f, q, c),
    }
}

/// Compact point rendering for error messages.
pub(crate) fn fmt_point(x: &DVector<f64>) -> String {
    let coords: Vec<String> = x.iter().map(|v| format!("{v:.6e}")).collect();
    format!("[{}]", coords.join(", "))
}
