//! Score divergences between densities, computed by independent routes.
//!
//! For a proper scoring rule S, `d_S(p, q) = E_q[S(p,·)] − E_q[S(q,·)]`
//! is a Bregman-type divergence. For kernel-based rules it also has a
//! pointwise representation whose integrand
//!
//! ```text
//! k(x, σ_p) − k(x, σ_q) + ⟨σ_q − σ_p, ∇_y k(x, σ_p)⟩
//! ```
//!
//! is the gradient-inequality gap of the concave kernel, hence
//! nonnegative pointwise — obtained from the expected-score form by
//! partial integration, with the boundary term vanishing for densities
//! with sufficiently decaying tails. Computing `d_S` both ways and
//! comparing is therefore a numerical check of that integration-by-parts
//! identity; [`boundary_term_diagnostic`] isolates the vanishing term
//! itself. With the kernel `−|y|²` the integrand collapses to
//! `|∇log p − ∇log q|²`, the Hyvärinen divergence.
//!
//! All divergences integrate against `q` (the second argument); nothing
//! is symmetrized.

use nalgebra::DVector;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::numerics::{expect, fmt_point, EngineConfig, EngineDescriptor, ExpectationResult};
use crate::scores::ScoringRule;

/// How a divergence value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceMethod {
    /// `E_q S(p,·) − E_q S(q,·)`, two expectations.
    ExpectedScoreDifference,
    /// Single expectation of the pointwise kernel-gap integrand.
    PointwiseIntegrand,
    /// Direct formula (Hyvärinen: `E_q|∇log p − ∇log q|²`).
    ClosedForm,
}

impl DivergenceMethod {
    pub fn label(&self) -> &'static str {
        match self {
            DivergenceMethod::ExpectedScoreDifference => "expected-score",
            DivergenceMethod::PointwiseIntegrand => "pointwise-integrand",
            DivergenceMethod::ClosedForm => "closed-form",
        }
    }
}

/// A divergence estimate with its provenance.
///
/// For concave kernels the true value is ≥ 0, so
/// `value ≥ −error_estimate` must hold up to numerics.
#[derive(Debug, Clone)]
pub struct DivergenceResult {
    pub value: f64,
    pub error_estimate: f64,
    pub method: DivergenceMethod,
    pub engine: EngineDescriptor,
}

/// `E_q[S(p, ·)]`: the expected score of forecast `p` under data law `q`.
pub fn expected_score(
    rule: &ScoringRule,
    p: &dyn Density,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<ExpectationResult> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    // score failures surface as NaN and are caught by the engine's
    // finiteness check, which names the offending point
    expect(|x| rule.evaluate(p, x).unwrap_or(f64::NAN), q, engine)
}

/// `d_S(p, q) = E_q S(p,·) − E_q S(q,·)` via two expectations.
///
/// Both expectations use the same engine config; with the Monte Carlo
/// engine this means common random numbers, so the difference is far
/// more accurate than the individual error estimates suggest.
pub fn bregman_divergence(
    rule: &ScoringRule,
    p: &dyn Density,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<DivergenceResult> {
    let cross = expected_score(rule, p, q, engine)?;
    let diagonal = expected_score(rule, q, q, engine)?;
    Ok(DivergenceResult {
        value: cross.value - diagonal.value,
        error_estimate: cross.error_estimate + diagonal.error_estimate,
        method: DivergenceMethod::ExpectedScoreDifference,
        engine: cross.engine,
    })
}

/// The pointwise divergence integrand
/// `k(x,σ_p) − k(x,σ_q) + ⟨σ_q − σ_p, ∇_y k(x,σ_p)⟩`.
///
/// Nonnegative for every `x` when `y ↦ k(x,y)` is concave; identically
/// `|σ_p − σ_q|²` for the kernel `−|y|²`.
pub fn divergence_integrand(
    kernel: &dyn Kernel,
    p: &dyn Density,
    q: &dyn Density,
    x: &DVector<f64>,
) -> Result<f64> {
    let sigma_p = p.grad_log_density(x);
    let sigma_q = q.grad_log_density(x);
    let value = kernel.eval(x, &sigma_p) - kernel.eval(x, &sigma_q)
        + (sigma_q - &sigma_p).dot(&kernel.grad_y(x, &sigma_p));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteValue {
            what: "divergence integrand".to_string(),
            point: fmt_point(x),
        })
    }
}

/// `d_S(p, q)` as a single expectation of [`divergence_integrand`].
pub fn divergence_via_integrand(
    kernel: &dyn Kernel,
    p: &dyn Density,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<DivergenceResult> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let r = expect(
        |x| divergence_integrand(kernel, p, q, x).unwrap_or(f64::NAN),
        q,
        engine,
    )?;
    Ok(DivergenceResult {
        value: r.value,
        error_estimate: r.error_estimate,
        method: DivergenceMethod::PointwiseIntegrand,
        engine: r.engine,
    })
}

/// The Hyvärinen divergence `E_q|∇log p − ∇log q|²`.
pub fn hyvarinen_divergence(
    p: &dyn Density,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<DivergenceResult> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let r = expect(
        |x| (p.grad_log_density(x) - q.grad_log_density(x)).norm_squared(),
        q,
        engine,
    )?;
    Ok(DivergenceResult {
        value: r.value,
        error_estimate: r.error_estimate,
        method: DivergenceMethod::ClosedForm,
        engine: r.engine,
    })
}

/// Numerical check of the vanishing boundary term behind the
/// integrand representation:
///
/// ```text
/// E_q[⟨σ, ∇_y k(x,σ)⟩ + Σ_i ∂²k/∂x_i∂y_i(x,σ) + tr(∇²_y k(x,σ)·H)] = 0,
///     σ = ∇log q(x), H = ∇²log q(x),
/// ```
///
/// which is `∫ div[q·∇_y k(·, ∇log q)] dx` written in evaluable terms.
/// Deviations beyond the error estimate indicate mass escaping the
/// integration domain (tails too heavy or the box too small).
pub fn boundary_term_diagnostic(
    kernel: &dyn Kernel,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<ExpectationResult> {
    if kernel.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: kernel.dim(),
        });
    }
    expect(
        |x| {
            let sigma = q.grad_log_density(x);
            let hess = q.hess_log_density(x);
            sigma.dot(&kernel.grad_y(x, &sigma))
                + kernel.mixed_trace(x, &sigma)
                + (kernel.hess_y(x, &sigma) * hess).trace()
        },
        q,
        engine,
    )
}
