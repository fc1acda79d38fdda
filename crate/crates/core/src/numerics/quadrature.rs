//! Composite Gauss–Legendre tensor-product quadrature for d ∈ {1, 2}.
//!
//! The axis rule is a fixed-order Gauss–Legendre panel tiled across the
//! integration interval; node budgets round up to whole panels. The error
//! estimate is the difference against a doubled budget, floored at a small
//! multiple of the value's magnitude so that "within combined error
//! estimates" comparisons never degenerate to exact-equality tests.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::numerics::{
    fmt_point, DomainPolicy, EngineDescriptor, ExpectationResult, QuadratureConfig,
};

const PANEL_ORDER: usize = 16;

/// Relative floor for the reported error estimate.
const ERROR_FLOOR: f64 = 1e-11;

/// Gauss–Legendre nodes and weights on [-1, 1] by the Golub–Welsch
/// eigenvalue method: nodes are eigenvalues of the Legendre Jacobi
/// matrix, weights are `2·(first eigenvector component)²`.
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(order, order);
    for k in 1..order {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn panels_for_budget(nodes_per_axis: usize) -> usize {
    nodes_per_axis.div_ceil(PANEL_ORDER).max(1)
}

/// Composite axis rule: `panels` copies of the base panel tiled over
/// `(lo, hi)`, with the affine-map Jacobian folded into the weights.
fn composite_axis(lo: f64, hi: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (base_nodes, base_weights) = gauss_legendre(PANEL_ORDER);
    let width = (hi - lo) / panels as f64;
    let half = 0.5 * width;
    let mut nodes = Vec::with_capacity(panels * PANEL_ORDER);
    let mut weights = Vec::with_capacity(panels * PANEL_ORDER);
    for p in 0..panels {
        let center = lo + (p as f64 + 0.5) * width;
        for (t, w) in base_nodes.iter().zip(&base_weights) {
            nodes.push(center + half * t);
            weights.push(w * half);
        }
    }
    (nodes, weights)
}

/// Tensor-product integral of `f(x)·q(x)` over the boxed axes.
///
/// Node contributions are evaluated in parallel but summed sequentially
/// in node order, so the value is independent of thread count.
fn tensor_integral<F>(f: &F, q: &dyn Density, axes: &[(Vec<f64>, Vec<f64>)]) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let contributions: Result<Vec<f64>> = match axes {
        [(nodes, weights)] => (0..nodes.len())
            .into_par_iter()
            .map(|k| {
                let x = DVector::from_vec(vec![nodes[k]]);
                node_contribution(f, q, &x, weights[k])
            })
            .collect(),
        [(nodes0, weights0), (nodes1, weights1)] => (0..nodes0.len() * nodes1.len())
            .into_par_iter()
            .map(|m| {
                let (k, l) = (m / nodes1.len(), m % nodes1.len());
                let x = DVector::from_vec(vec![nodes0[k], nodes1[l]]);
                node_contribution(f, q, &x, weights0[k] * weights1[l])
            })
            .collect(),
        _ => unreachable!("dimension is validated before building axes"),
    };
    Ok(contributions?.iter().sum())
}

fn node_contribution<F>(f: &F, q: &dyn Density, x: &DVector<f64>, weight: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let fx = f(x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteValue {
            what: "quadrature integrand".to_string(),
            point: fmt_point(x),
        });
    }
    Ok(weight * fx * q.log_density(x).exp())
}

/// Computes `E_q[f] = ∫ f(x) q(x) dx` over the truncated box by composite
/// Gauss–Legendre quadrature, with a node-doubling error estimate.
pub fn expect_quadrature<F>(
    f: F,
    q: &dyn Density,
    config: &QuadratureConfig,
) -> Result<ExpectationResult>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let dim = q.dim();
    if dim > 2 {
        return Err(Error::QuadratureDimensionTooHigh { dim });
    }
    let bounds = match &config.domain {
        DomainPolicy::Auto { sd_factor } => {
            q.integration_box(*sd_factor).ok_or_else(|| Error::EngineFailure {
                detail: format!(
                    "{} density provides no integration box; supply explicit bounds",
                    q.family_name()
                ),
            })?
        }
        DomainPolicy::Bounds(b) => b.clone(),
    };
    if bounds.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bounds.len(),
        });
    }
    for &(lo, hi) in &bounds {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::EngineFailure {
                detail: format!("invalid integration interval ({lo}, {hi})"),
            });
        }
    }

    let panels = panels_for_budget(config.nodes_per_axis);
    let build = |per_axis_panels: usize| -> Vec<(Vec<f64>, Vec<f64>)> {
        bounds
            .iter()
            .map(|&(lo, hi)| composite_axis(lo, hi, per_axis_panels))
            .collect()
    };
    let coarse = tensor_integral(&f, q, &build(panels))?;
    let fine = tensor_integral(&f, q, &build(panels_for_budget(2 * config.nodes_per_axis)))?;
    if !fine.is_finite() {
        return Err(Error::EngineFailure {
            detail: format!("quadrature sum is not finite ({fine})"),
        });
    }
    let error_estimate = (fine - coarse).abs().max(ERROR_FLOOR * (1.0 + fine.abs()));
    Ok(ExpectationResult {
        value: fine,
        error_estimate,
        engine: EngineDescriptor::Quadrature {
            nodes_per_axis: config.nodes_per_axis,
            panels_per_axis: panels,
            dim,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{gaussian_mixture, Gaussian, LogisticProduct};
    use approx::assert_relative_eq;

    #[test]
    fn base_rule_integrates_polynomials_exactly() {
        let (nodes, weights) = gauss_legendre(PANEL_ORDER);
        // degree-31 exactness: check a few even powers on [-1, 1]
        for p in [0u32, 2, 8, 30] {
            let integral: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * x.powi(p as i32))
                .sum();
            assert_relative_eq!(integral, 2.0 / (p as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn normalization_of_builtin_families() {
        let config = QuadratureConfig::default();
        let one = |_: &DVector<f64>| 1.0;
        let gauss = expect_quadrature(one, &Gaussian::standard(1), &config).unwrap();
        assert_relative_eq!(gauss.value, 1.0, epsilon = 1e-10);
        let logistic = expect_quadrature(one, &LogisticProduct::standard(1), &config).unwrap();
        assert_relative_eq!(logistic.value, 1.0, epsilon = 1e-9);
        let mix = gaussian_mixture(
            vec![0.5, 0.5],
            vec![DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![2.0, 1.0])],
            vec![
                DMatrix::from_diagonal_element(2, 2, 1.0),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
            ],
        )
        .unwrap();
        let mix_mass = expect_quadrature(one, &mix, &config).unwrap();
        assert_relative_eq!(mix_mass.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn expected_squared_score_of_standard_normal_is_the_dimension() {
        let q = Gaussian::standard(1);
        let r = expect_quadrature(
            |x| q.grad_log_density(x).norm_squared(),
            &q,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn second_moment_of_centered_gaussian() {
        let q = Gaussian::isotropic(DVector::zeros(1), 2.0).unwrap();
        let r = expect_quadrature(|x| x[0] * x[0], &q, &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(r.value, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn doubling_nodes_moves_the_value_less_than_the_reported_error() {
        let q = Gaussian::standard(2);
        type Integrand = Box<dyn Fn(&DVector<f64>) -> f64 + Sync>;
        let integrands: Vec<Integrand> = vec![
            Box::new(|x: &DVector<f64>| x.norm_squared()),
            Box::new(|x: &DVector<f64>| (x[0] - 0.3).cos()),
        ];
        for f in &integrands {
            let base = expect_quadrature(|x| f(x), &q, &QuadratureConfig::with_nodes(401)).unwrap();
            let doubled =
                expect_quadrature(|x| f(x), &q, &QuadratureConfig::with_nodes(802)).unwrap();
            assert!(
                (doubled.value - base.value).abs() < base.error_estimate,
                "doubling moved the value by {} with reported error {}",
                (doubled.value - base.value).abs(),
                base.error_estimate
            );
        }
    }

    #[test]
    fn dimension_above_two_is_rejected() {
        let q = Gaussian::standard(3);
        let err = expect_quadrature(|_| 1.0, &q, &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::QuadratureDimensionTooHigh { dim: 3 }));
    }

    #[test]
    fn explicit_bounds_select_the_half_line() {
        let q = Gaussian::standard(1);
        let config = QuadratureConfig {
            nodes_per_axis: 401,
            domain: DomainPolicy::Bounds(vec![(0.0, 12.0)]),
        };
        let r = expect_quadrature(|_| 1.0, &q, &config).unwrap();
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn non_finite_integrand_names_the_point() {
        let q = Gaussian::standard(1);
        let err = expect_quadrature(
            |x| if x[0] > 0.0 { f64::INFINITY } else { 1.0 },
            &q,
            &QuadratureConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteValue { what, point } => {
                assert_eq!(what, "quadrature integrand");
                assert!(point.starts_with('['));
            }
            other => panic!("expected non-finite-value error, got {other}"),
        }
    }
}
