//! Local scoring rules of order two.
//!
//! Every kernel-based rule here reads the forecast density only through
//! `∇log p` and `∇²log p` at the evaluation point, so normalizing
//! constants never enter: scoring an unnormalized multiple of `p` gives
//! bit-identical values. The logarithmic score is the deliberate
//! exception (it reads `log p(x)` itself) and is offered both standalone
//! and as a blend partner.
//!
//! The general rule built from a kernel `k` is
//!
//! ```text
//! S(p, x) = k(x,σ) − ⟨σ, ∇_y k(x,σ)⟩ − Σ_i ∂²k/∂x_i∂y_i(x,σ) − tr(∇²_y k(x,σ)·H)
//! ```
//!
//! with `σ = ∇log p(x)` and `H = ∇²log p(x)` — the divergence form
//! `k − (1/p)·div[p·∇_y k]` expanded by the product rule so that no
//! numerical divergence is ever taken. Concavity of `y ↦ k(x,y)` makes
//! the rule proper; see the kernel module's probes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::kernel::{radial_kernel, Kernel, RadialProfile, RADIAL_EPS};
use crate::numerics::fmt_point;

fn check_finite_vector(v: &DVector<f64>, what: &str, x: &DVector<f64>) -> Result<()> {
    if v.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue {
            what: what.to_string(),
            point: fmt_point(x),
        })
    }
}

fn check_finite_matrix(m: &DMatrix<f64>, what: &str, x: &DVector<f64>) -> Result<()> {
    if m.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue {
            what: what.to_string(),
            point: fmt_point(x),
        })
    }
}

fn check_finite_scalar(v: f64, what: &str, x: &DVector<f64>) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue {
            what: what.to_string(),
            point: fmt_point(x),
        })
    }
}

/// Scores `density` at `x` with the rule induced by an arbitrary kernel.
pub fn general_score(kernel: &dyn Kernel, density: &dyn Density, x: &DVector<f64>) -> Result<f64> {
    if kernel.dim() != density.dim() || x.len() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: if kernel.dim() != density.dim() {
                kernel.dim()
            } else {
                x.len()
            },
        });
    }
    let sigma = density.grad_log_density(x);
    check_finite_vector(&sigma, "gradient of log-density", x)?;
    let hess = density.hess_log_density(x);
    check_finite_matrix(&hess, "Hessian of log-density", x)?;
    let value = kernel.eval(x, &sigma)
        - sigma.dot(&kernel.grad_y(x, &sigma))
        - kernel.mixed_trace(x, &sigma)
        - (kernel.hess_y(x, &sigma) * hess).trace();
    check_finite_scalar(value, "kernel score", x)
}

/// Scores with a radial kernel `ψ(|y|)` through the closed form
///
/// ```text
/// S = ψ(t) − (ψ′(t)/t)(t² + Δlog p) − [ψ″(t) − ψ′(t)/t]·⟨u, H u⟩,
///     t = |σ|, u = σ/t,
/// ```
///
/// falling back to the limit `−ψ″(0)·Δlog p` for `t ≤ 1e-6` (there the
/// bracketed coefficient vanishes and `t²` is negligible against Δlog p).
pub fn radial_score(profile: RadialProfile, density: &dyn Density, x: &DVector<f64>) -> Result<f64> {
    let sigma = density.grad_log_density(x);
    check_finite_vector(&sigma, "gradient of log-density", x)?;
    let lap = check_finite_scalar(
        density.laplacian_log_density(x),
        "Laplacian of log-density",
        x,
    )?;
    let t = sigma.norm();
    let value = if t <= RADIAL_EPS {
        -profile.ddpsi(0.0) * lap
    } else {
        let radial_slope = profile.dpsi(t) / t;
        let unit = &sigma / t;
        let quad_form = unit.dot(&(density.hess_log_density(x) * &unit));
        profile.psi(t)
            - radial_slope * (t * t + lap)
            - (profile.ddpsi(t) - radial_slope) * quad_form
    };
    check_finite_scalar(value, "radial score", x)
}

/// The score `2·Δlog p(x) + |∇log p(x)|²`: the radial rule with
/// `ψ(t) = −t²`, written directly.
pub fn hyvarinen_score(density: &dyn Density, x: &DVector<f64>) -> Result<f64> {
    let sigma = density.grad_log_density(x);
    check_finite_vector(&sigma, "gradient of log-density", x)?;
    let lap = check_finite_scalar(
        density.laplacian_log_density(x),
        "Laplacian of log-density",
        x,
    )?;
    Ok(2.0 * lap + sigma.norm_squared())
}

/// The logarithmic score `−log p(x)`. Not normalization-invariant — the
/// contrast case for everything else in this module.
pub fn log_score(density: &dyn Density, x: &DVector<f64>) -> Result<f64> {
    check_finite_scalar(density.log_density(x), "log-density", x).map(|v| -v)
}

/// A scoring rule as a value: selectable, shareable, evaluable.
#[derive(Clone)]
pub enum ScoringRule {
    /// Rule induced by an arbitrary kernel.
    GeneralKernel(Arc<dyn Kernel>),
    /// Radial closed form for `ψ(|y|)` kernels.
    Radial(RadialProfile),
    /// `2Δlog p + |∇log p|²`.
    Hyvarinen,
    /// `−log p(x)`.
    Logarithmic,
    /// `(1−α)·base + α·(−log p)`; base must be kernel-based.
    Blend { alpha: f64, base: Box<ScoringRule> },
}

impl ScoringRule {
    /// Radial rule for the given profile.
    pub fn radial(profile: RadialProfile) -> Self {
        ScoringRule::Radial(profile)
    }

    /// Convex blend of a kernel-based rule with the logarithmic score.
    pub fn blend(alpha: f64, base: ScoringRule) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::BlendWeightOutOfRange(alpha));
        }
        if !base.is_kernel_based() {
            return Err(Error::BlendBaseNotKernelBased { kind: base.kind() });
        }
        Ok(ScoringRule::Blend {
            alpha,
            base: Box::new(base),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScoringRule::GeneralKernel(_) => "general-kernel",
            ScoringRule::Radial(_) => "radial",
            ScoringRule::Hyvarinen => "hyvarinen",
            ScoringRule::Logarithmic => "logarithmic",
            ScoringRule::Blend { .. } => "blend",
        }
    }

    /// Whether the rule reads the density only through `∇log p`, `∇²log p`.
    pub fn is_kernel_based(&self) -> bool {
        match self {
            ScoringRule::GeneralKernel(_) | ScoringRule::Radial(_) | ScoringRule::Hyvarinen => {
                true
            }
            ScoringRule::Logarithmic => false,
            ScoringRule::Blend { .. } => false,
        }
    }

    /// `Some(true)` when propriety is guaranteed by construction
    /// (concave kernel, log score, or a blend of such), `Some(false)`
    /// when the kernel is known non-concave, `None` when undetermined.
    pub fn propriety_guaranteed(&self) -> Option<bool> {
        match self {
            ScoringRule::GeneralKernel(_) => None,
            ScoringRule::Radial(profile) => Some(profile.is_concave()),
            ScoringRule::Hyvarinen | ScoringRule::Logarithmic => Some(true),
            ScoringRule::Blend { base, .. } => base.propriety_guaranteed(),
        }
    }

    /// Evaluates `S(p, x)`.
    pub fn evaluate(&self, density: &dyn Density, x: &DVector<f64>) -> Result<f64> {
        match self {
            ScoringRule::GeneralKernel(kernel) => general_score(kernel.as_ref(), density, x),
            ScoringRule::Radial(profile) => radial_score(*profile, density, x),
            ScoringRule::Hyvarinen => hyvarinen_score(density, x),
            ScoringRule::Logarithmic => log_score(density, x),
            ScoringRule::Blend { alpha, base } => {
                let kernel_part = base.evaluate(density, x)?;
                let log_part = log_score(density, x)?;
                Ok((1.0 - alpha) * kernel_part + alpha * log_part)
            }
        }
    }

    /// The kernel realizing this rule on `R^dim`, when one exists.
    pub fn kernel(&self, dim: usize) -> Option<Arc<dyn Kernel>> {
        match self {
            ScoringRule::GeneralKernel(kernel) => Some(kernel.clone()),
            ScoringRule::Radial(profile) => Some(Arc::new(radial_kernel(*profile, dim))),
            ScoringRule::Hyvarinen => Some(Arc::new(radial_kernel(
                RadialProfile::Quadratic { coeff: -1.0 },
                dim,
            ))),
            ScoringRule::Logarithmic | ScoringRule::Blend { .. } => None,
        }
    }
}

/// Convex blend `(1−α)·S_base(p,x) + α·(−log p(x))`.
pub fn blend_score(
    alpha: f64,
    base: &ScoringRule,
    density: &dyn Density,
    x: &DVector<f64>,
) -> Result<f64> {
    let rule = ScoringRule::blend(alpha, base.clone())?;
    rule.evaluate(density, x)
}
