//! Concave kernels and their derivative data.
//!
//! A kernel `k(x, y)` together with its y-gradient, y-Hessian, and mixed
//! x–y derivative trace is exactly the data a second-order local scoring
//! rule needs. The built-ins are radial, `k(x, y) = ψ(|y|)`, with ψ a
//! concave C² profile satisfying `ψ(0) = ψ′(0) = 0`; concavity of
//! `y ↦ k(x, y)` is what makes the induced scoring rule proper, and the
//! probes in this module check it numerically rather than assume it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::density::{mixture_path, Density};
use crate::error::{Error, Result};
use crate::numerics::{expect, EngineConfig, ExpectationResult};

/// Below this radius the radial formulas switch to their analytic limits
/// (`ψ′(t)/t → ψ″(0)` as `t → 0`, since `ψ′(0) = 0`).
pub const RADIAL_EPS: f64 = 1e-6;

/// Scalar profile `ψ` on `[0, ∞)` defining a radial kernel `ψ(|y|)`.
///
/// All variants satisfy `ψ(0) = 0` and `ψ′(0) = 0` exactly. Concave
/// variants (`coeff ≤ 0`, log-cosh) induce proper scoring rules; the
/// convex `coeff > 0` case exists as a counterexample probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    /// `ψ(t) = coeff·t²`; `coeff = −1` is the Hyvärinen profile.
    Quadratic { coeff: f64 },
    /// `ψ(t) = −log cosh t`, bounded slope, Lipschitz score.
    LogCosh,
}

/// Profile of the Hyvärinen score: `ψ(t) = −t²`.
pub fn hyvarinen_profile() -> RadialProfile {
    RadialProfile::Quadratic { coeff: -1.0 }
}

/// Bounded-influence profile `ψ(t) = −log cosh t`.
pub fn logcosh_profile() -> RadialProfile {
    RadialProfile::LogCosh
}

impl RadialProfile {
    pub fn psi(&self, t: f64) -> f64 {
        match self {
            RadialProfile::Quadratic { coeff } => coeff * t * t,
            RadialProfile::LogCosh => {
                // log cosh t = t + ln(1+e^{−2t}) − ln 2 avoids cosh overflow
                if t > 20.0 {
                    -(t + (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2)
                } else {
                    -t.cosh().ln()
                }
            }
        }
    }

    pub fn dpsi(&self, t: f64) -> f64 {
        match self {
            RadialProfile::Quadratic { coeff } => 2.0 * coeff * t,
            RadialProfile::LogCosh => -t.tanh(),
        }
    }

    pub fn ddpsi(&self, t: f64) -> f64 {
        match self {
            RadialProfile::Quadratic { coeff } => 2.0 * coeff,
            RadialProfile::LogCosh => {
                // −sech²t via 1/cosh avoids the 1 − tanh² cancellation
                let sech = 1.0 / t.cosh();
                -(sech * sech)
            }
        }
    }

    /// Whether ψ is concave (sufficient for a proper induced rule).
    pub fn is_concave(&self) -> bool {
        match self {
            RadialProfile::Quadratic { coeff } => *coeff <= 0.0,
            RadialProfile::LogCosh => true,
        }
    }

    pub fn label(&self) -> String {
        match self {
            RadialProfile::Quadratic { coeff } if *coeff == -1.0 => "hyvarinen".to_string(),
            RadialProfile::Quadratic { coeff } => format!("quadratic({coeff})"),
            RadialProfile::LogCosh => "logcosh".to_string(),
        }
    }

    /// Documented polynomial growth bound `|ψ(|y|)| ≤ C(1+|x|+|y|)^r`.
    pub fn growth_bound(&self) -> (f64, f64) {
        match self {
            RadialProfile::Quadratic { coeff } => (coeff.abs().max(1.0), 2.0),
            RadialProfile::LogCosh => (1.0, 1.0),
        }
    }
}

/// A kernel `k(x, y)` with the derivative data used by second-order
/// local scoring rules. Built-ins do not depend on `x`, but the mixed
/// x–y derivative trace keeps general kernels expressible.
pub trait Kernel: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn grad_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn hess_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
    /// `Σ_i ∂²k/∂x_i∂y_i (x, y)`; zero for x-independent kernels.
    fn mixed_trace(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    /// Short name for reports and error messages.
    fn label(&self) -> String;
}

/// Radial kernel `k(x, y) = ψ(|y|)`.
///
/// Derivatives in closed form, with the `|y| ≤ 1e-6` limits
/// `∇_y k = ψ″(0)·y` and `∇²_y k = ψ″(0)·I`:
///
/// ```text
/// ∇_y k  = ψ′(t)·y/t                              (t = |y|)
/// ∇²_y k = (ψ′(t)/t)·I + (ψ″(t) − ψ′(t)/t)·yyᵀ/t²
/// ```
#[derive(Debug, Clone)]
pub struct RadialKernel {
    profile: RadialProfile,
    dim: usize,
}

/// Builds the radial kernel `k(x, y) = ψ(|y|)` on `R^dim`.
pub fn radial_kernel(profile: RadialProfile, dim: usize) -> RadialKernel {
    RadialKernel { profile, dim }
}

impl RadialKernel {
    pub fn profile(&self) -> RadialProfile {
        self.profile
    }
}

impl Kernel for RadialKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.profile.psi(y.norm())
    }

    fn grad_y(&self, _x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let t = y.norm();
        if t <= RADIAL_EPS {
            y * self.profile.ddpsi(0.0)
        } else {
            y * (self.profile.dpsi(t) / t)
        }
    }

    fn hess_y(&self, _x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let t = y.norm();
        if t <= RADIAL_EPS {
            DMatrix::identity(self.dim, self.dim) * self.profile.ddpsi(0.0)
        } else {
            let radial_slope = self.profile.dpsi(t) / t;
            let mut h = DMatrix::identity(self.dim, self.dim) * radial_slope;
            let unit = y / t;
            h += &unit * unit.transpose() * (self.profile.ddpsi(t) - radial_slope);
            h
        }
    }

    fn mixed_trace(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> f64 {
        0.0
    }

    fn label(&self) -> String {
        self.profile.label()
    }
}

/// Estimate of `Φ(p) = E_p[k(x, ∇log p(x))]`, the functional whose
/// concavity over densities governs propriety of the induced rule.
pub fn phi_functional(
    kernel: &dyn Kernel,
    density: &dyn Density,
    engine: &EngineConfig,
) -> Result<ExpectationResult> {
    if kernel.dim() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: density.dim(),
        });
    }
    expect(
        |x| kernel.eval(x, &density.grad_log_density(x)),
        density,
        engine,
    )
}

/// Pointwise concavity diagnostic for `y ↦ k(x, y)` at `x = 0`.
#[derive(Debug, Clone)]
pub struct ConcavityReport {
    /// Largest Hessian eigenvalue seen over the grid.
    pub max_eigenvalue: f64,
    /// Grid point attaining it.
    pub worst_point: DVector<f64>,
    /// `max_eigenvalue ≤ 1e-10`.
    pub concave_on_grid: bool,
}

/// Scans `∇²_y k` eigenvalues over the grid. A diagnostic, not a proof:
/// it flags the kernel concave-on-grid iff no eigenvalue exceeds 1e-10.
pub fn concavity_probe(kernel: &dyn Kernel, grid: &[DVector<f64>]) -> ConcavityReport {
    let x0 = DVector::zeros(kernel.dim());
    let mut max_eigenvalue = f64::NEG_INFINITY;
    let mut worst_point = x0.clone();
    for y in grid {
        let top = kernel
            .hess_y(&x0, y)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if top > max_eigenvalue {
            max_eigenvalue = top;
            worst_point = y.clone();
        }
    }
    ConcavityReport {
        max_eigenvalue,
        worst_point,
        concave_on_grid: max_eigenvalue <= 1e-10,
    }
}

/// Concavity diagnostic for `t ↦ Φ((1−t)q + tp)` on a grid.
#[derive(Debug, Clone)]
pub struct PathConcavityReport {
    pub t_grid: Vec<f64>,
    pub phi_values: Vec<f64>,
    pub phi_errors: Vec<f64>,
    /// Divided second differences at the interior grid points.
    pub second_differences: Vec<f64>,
    /// Per-difference tolerance propagated from the engine error bounds.
    pub tolerances: Vec<f64>,
    /// Every second difference is ≤ its tolerance.
    pub concave_within_tolerance: bool,
}

/// Evaluates Φ along the mixture path from `q` to `p` and checks that all
/// (divided) second differences are nonpositive within the tolerance
/// implied by the engine's own error estimates.
pub fn phi_path_concavity(
    kernel: &dyn Kernel,
    q: Arc<dyn Density>,
    p: Arc<dyn Density>,
    t_grid: &[f64],
    engine: &EngineConfig,
) -> Result<PathConcavityReport> {
    if t_grid.len() < 3 {
        return Err(Error::TooFewSamples {
            got: t_grid.len(),
            need: 3,
        });
    }
    for &t in t_grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::PathParameterOutOfRange(t));
        }
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::PathGridNotIncreasing);
    }

    let mut phi_values = Vec::with_capacity(t_grid.len());
    let mut phi_errors = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let blend = mixture_path(q.clone(), p.clone(), t)?;
        let r = phi_functional(kernel, &blend, engine)?;
        phi_values.push(r.value);
        phi_errors.push(r.error_estimate);
    }

    let mut second_differences = Vec::with_capacity(t_grid.len() - 2);
    let mut tolerances = Vec::with_capacity(t_grid.len() - 2);
    for j in 1..t_grid.len() - 1 {
        let h_left = t_grid[j] - t_grid[j - 1];
        let h_right = t_grid[j + 1] - t_grid[j];
        let scale = 2.0 / (h_left + h_right);
        let diff = scale
            * ((phi_values[j + 1] - phi_values[j]) / h_right
                - (phi_values[j] - phi_values[j - 1]) / h_left);
        let tol = scale
            * (phi_errors[j + 1] / h_right
                + phi_errors[j] * (1.0 / h_left + 1.0 / h_right)
                + phi_errors[j - 1] / h_left);
        second_differences.push(diff);
        tolerances.push(tol);
    }
    let concave_within_tolerance = second_differences
        .iter()
        .zip(&tolerances)
        .all(|(d, tol)| *d <= *tol);
    Ok(PathConcavityReport {
        t_grid: t_grid.to_vec(),
        phi_values,
        phi_errors,
        second_differences,
        tolerances,
        concave_within_tolerance,
    })
}
