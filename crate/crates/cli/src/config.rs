//! TOML experiment configurations: schema types, strict validation, and
//! conversion into library objects. Unknown keys are rejected so a typo
//! fails before any computation starts.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use steinscore::density::{gaussian_mixture, Density, Gaussian, LogisticProduct};
use steinscore::kernel::{hyvarinen_profile, logcosh_profile, RadialProfile};
use steinscore::numerics::{DomainPolicy, EngineConfig, MonteCarloConfig, QuadratureConfig};
use steinscore::scores::ScoringRule;

pub type ConfigResult<T> = Result<T, String>;

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> ConfigResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(format!("{what}: covariance must be a nonempty square array of rows"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Multivariate Gaussian; give exactly one of `variance` (isotropic)
    /// or `covariance` (full matrix, row-major).
    Gaussian {
        mean: Vec<f64>,
        #[serde(default)]
        variance: Option<f64>,
        #[serde(default)]
        covariance: Option<Vec<Vec<f64>>>,
    },
    /// Product of independent logistic coordinates.
    Logistic { locations: Vec<f64>, scales: Vec<f64> },
    /// Finite mixture of Gaussians; give exactly one of `covariances`
    /// (one matrix per component) or `variances` (isotropic, one per
    /// component).
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        #[serde(default)]
        covariances: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        variances: Option<Vec<f64>>,
    },
}

impl DensitySpec {
    pub fn default_label(&self) -> &'static str {
        match self {
            DensitySpec::Gaussian { .. } => "gaussian",
            DensitySpec::Logistic { .. } => "logistic",
            DensitySpec::GaussianMixture { .. } => "gaussian-mixture",
        }
    }

    pub fn build(&self) -> ConfigResult<Arc<dyn Density>> {
        match self {
            DensitySpec::Gaussian {
                mean,
                variance,
                covariance,
            } => {
                let mean = DVector::from_vec(mean.clone());
                let gaussian = match (variance, covariance) {
                    (Some(v), None) => Gaussian::isotropic(mean, *v),
                    (None, Some(rows)) => {
                        let dim = mean.len();
                        let cov = matrix_from_rows(rows, "gaussian")?;
                        if cov.nrows() != dim {
                            return Err(format!(
                                "gaussian: covariance is {}x{} but the mean has {} coordinates",
                                cov.nrows(),
                                cov.ncols(),
                                dim
                            ));
                        }
                        Gaussian::new(mean, cov)
                    }
                    _ => {
                        return Err(
                            "gaussian: give exactly one of `variance` or `covariance`".into()
                        )
                    }
                };
                gaussian
                    .map(|g| Arc::new(g) as Arc<dyn Density>)
                    .map_err(|e| format!("gaussian: {e}"))
            }
            DensitySpec::Logistic { locations, scales } => {
                LogisticProduct::new(
                    DVector::from_vec(locations.clone()),
                    DVector::from_vec(scales.clone()),
                )
                .map(|l| Arc::new(l) as Arc<dyn Density>)
                .map_err(|e| format!("logistic: {e}"))
            }
            DensitySpec::GaussianMixture {
                weights,
                means,
                covariances,
                variances,
            } => {
                let dim = means.first().map(|m| m.len()).unwrap_or(0);
                let covs: Vec<DMatrix<f64>> = match (covariances, variances) {
                    (Some(list), None) => list
                        .iter()
                        .map(|rows| matrix_from_rows(rows, "gaussian-mixture"))
                        .collect::<ConfigResult<_>>()?,
                    (None, Some(vars)) => vars
                        .iter()
                        .map(|v| DMatrix::from_diagonal_element(dim, dim, *v))
                        .collect(),
                    _ => {
                        return Err(
                            "gaussian-mixture: give exactly one of `covariances` or `variances`"
                                .into(),
                        )
                    }
                };
                gaussian_mixture(
                    weights.clone(),
                    means.iter().map(|m| DVector::from_vec(m.clone())).collect(),
                    covs,
                )
                .map(|m| Arc::new(m) as Arc<dyn Density>)
                .map_err(|e| format!("gaussian-mixture: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Hyvarinen,
    LogCosh,
    Quadratic { coefficient: f64 },
}

impl KernelSpec {
    pub fn profile(&self) -> RadialProfile {
        match self {
            KernelSpec::Hyvarinen => hyvarinen_profile(),
            KernelSpec::LogCosh => logcosh_profile(),
            KernelSpec::Quadratic { coefficient } => RadialProfile::Quadratic {
                coeff: *coefficient,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuleSpec {
    Hyvarinen,
    Logarithmic,
    LogCosh,
    Quadratic { coefficient: f64 },
    Blend { alpha: f64, base: Box<RuleSpec> },
}

impl RuleSpec {
    pub fn build(&self) -> ConfigResult<ScoringRule> {
        match self {
            RuleSpec::Hyvarinen => Ok(ScoringRule::Hyvarinen),
            RuleSpec::Logarithmic => Ok(ScoringRule::Logarithmic),
            RuleSpec::LogCosh => Ok(ScoringRule::Radial(logcosh_profile())),
            RuleSpec::Quadratic { coefficient } => Ok(ScoringRule::Radial(
                RadialProfile::Quadratic {
                    coeff: *coefficient,
                },
            )),
            RuleSpec::Blend { alpha, base } => {
                ScoringRule::blend(*alpha, base.build()?).map_err(|e| format!("blend: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineSpec {
    Quadrature {
        #[serde(default)]
        nodes_per_axis: Option<usize>,
        #[serde(default)]
        sd_factor: Option<f64>,
    },
    MonteCarlo {
        samples: usize,
        #[serde(default)]
        chunk_size: Option<usize>,
    },
}

impl EngineSpec {
    pub fn build(&self, seed: u64) -> EngineConfig {
        match self {
            EngineSpec::Quadrature {
                nodes_per_axis,
                sd_factor,
            } => {
                let mut config = match nodes_per_axis {
                    Some(n) => QuadratureConfig::with_nodes(*n),
                    None => QuadratureConfig::default(),
                };
                if let Some(factor) = sd_factor {
                    config.domain = DomainPolicy::Auto { sd_factor: *factor };
                }
                EngineConfig::Quadrature(config)
            }
            EngineSpec::MonteCarlo {
                samples,
                chunk_size,
            } => {
                let mut config = MonteCarloConfig::new(*samples, seed);
                if let Some(chunk) = chunk_size {
                    config.chunk_size = *chunk;
                }
                EngineConfig::MonteCarlo(config)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEvalConfig {
    pub rule: RuleSpec,
    pub density: DensitySpec,
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    #[serde(default)]
    pub label_p: Option<String>,
    #[serde(default)]
    pub label_q: Option<String>,
    pub p: DensitySpec,
    pub q: DensitySpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceTableConfig {
    pub kernels: Vec<KernelSpec>,
    pub pairs: Vec<PairSpec>,
    #[serde(default)]
    pub engine: Option<EngineSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SureExperimentConfig {
    /// Marginal density of the observation under the prior.
    pub marginal: DensitySpec,
    pub theta: Vec<f64>,
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub density: DensitySpec,
    pub count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthConfig {
    pub rule: RuleSpec,
    pub bandwidths: Vec<f64>,
    /// One point per line, comma-separated coordinates.
    #[serde(default)]
    pub samples_file: Option<PathBuf>,
    /// Draw the sample from a known density instead of reading a file.
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
    /// Adds the quadrature reference-risk column when given.
    #[serde(default)]
    pub true_density: Option<DensitySpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSuiteConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

pub fn parse<T: serde::de::DeserializeOwned>(text: &str) -> ConfigResult<T> {
    toml::from_str(text).map_err(|e| e.to_string())
}
