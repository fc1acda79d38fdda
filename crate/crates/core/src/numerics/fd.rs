//! Central finite-difference oracles.
//!
//! These are the independent checks for every analytic derivative in the
//! crate. Step sizes follow the usual truncation/round-off balance for
//! second- and third-order-accurate central schemes in double precision:
//! `h = 1e-5·(1+|x|)` for first derivatives, `h = 1e-4·(1+|x|)` for
//! second derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::fmt_point;

/// Step size for first-derivative stencils at `x`.
pub fn grad_step(x: &DVector<f64>) -> f64 {
    1e-5 * (1.0 + x.norm())
}

/// Step size for second-derivative stencils at `x`.
pub fn hess_step(x: &DVector<f64>) -> f64 {
    1e-4 * (1.0 + x.norm())
}

fn eval<F: Fn(&DVector<f64>) -> f64>(f: &F, y: &DVector<f64>) -> Result<f64> {
    let v = f(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue {
            what: "finite-difference evaluation".to_string(),
            point: fmt_point(y),
        })
    }
}

/// Central-difference gradient with a caller-supplied step.
pub fn fd_gradient_with_step<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x.len();
    let mut g = DVector::zeros(d);
    let mut y = x.clone();
    for i in 0..d {
        y[i] = x[i] + h;
        let plus = eval(&f, &y)?;
        y[i] = x[i] - h;
        let minus = eval(&f, &y)?;
        y[i] = x[i];
        g[i] = (plus - minus) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference gradient with the default step policy.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = grad_step(x);
    fd_gradient_with_step(f, x, h)
}

/// Central-difference Hessian with a caller-supplied step, symmetric by
/// construction (the mixed stencil is invariant under index swap).
pub fn fd_hessian_with_step<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x.len();
    let center = eval(&f, x)?;
    let mut hess = DMatrix::zeros(d, d);
    let mut y = x.clone();
    for i in 0..d {
        y[i] = x[i] + h;
        let plus = eval(&f, &y)?;
        y[i] = x[i] - h;
        let minus = eval(&f, &y)?;
        y[i] = x[i];
        hess[(i, i)] = (plus - 2.0 * center + minus) / (h * h);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            y[i] = x[i] + h;
            y[j] = x[j] + h;
            let pp = eval(&f, &y)?;
            y[j] = x[j] - h;
            let pm = eval(&f, &y)?;
            y[i] = x[i] - h;
            y[j] = x[j] + h;
            let mp = eval(&f, &y)?;
            y[j] = x[j] - h;
            let mm = eval(&f, &y)?;
            y[i] = x[i];
            y[j] = x[j];
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = mixed;
            hess[(j, i)] = mixed;
        }
    }
    Ok(hess)
}

/// Central-difference Hessian with the default step policy.
pub fn fd_hessian<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = hess_step(x);
    fd_hessian_with_step(f, x, h)
}

/// Central-difference Laplacian (sum of pure second differences).
pub fn fd_laplacian<F>(f: F, x: &DVector<f64>) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x.len();
    let h = hess_step(x);
    let center = eval(&f, x)?;
    let mut total = 0.0;
    let mut y = x.clone();
    for i in 0..d {
        y[i] = x[i] + h;
        let plus = eval(&f, &y)?;
        y[i] = x[i] - h;
        let minus = eval(&f, &y)?;
        y[i] = x[i];
        total += (plus - 2.0 * center + minus) / (h * h);
    }
    Ok(total)
}

/// Central-difference divergence of a vector field `g: R^d → R^d`.
pub fn fd_divergence<G>(g: G, x: &DVector<f64>) -> Result<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let d = x.len();
    let h = grad_step(x);
    let mut total = 0.0;
    let mut y = x.clone();
    for i in 0..d {
        y[i] = x[i] + h;
        let plus = g(&y)[i];
        y[i] = x[i] - h;
        let minus = g(&y)[i];
        y[i] = x[i];
        let term = (plus - minus) / (2.0 * h);
        if !term.is_finite() {
            return Err(Error::NonFiniteValue {
                what: format!("divergence component {i}"),
                point: fmt_point(x),
            });
        }
        total += term;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_function_has_exact_gradient() {
        let a = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let ac = a.clone();
        let x = DVector::from_vec(vec![0.3, 0.1, -0.7]);
        let g = fd_gradient(move |y| ac.dot(y), &x).unwrap();
        assert_relative_eq!(g, a, epsilon = 1e-9);
    }

    #[test]
    fn squared_norm_has_hessian_two_i() {
        let x = DVector::from_vec(vec![0.5, -1.0]);
        let h = fd_hessian(|y| y.norm_squared(), &x).unwrap();
        assert_relative_eq!(h, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-6);
        let lap = fd_laplacian(|y| y.norm_squared(), &x).unwrap();
        assert_relative_eq!(lap, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn standard_normal_log_density_gradient_is_minus_x() {
        let x = DVector::from_vec(vec![1.2]);
        let g = fd_gradient(
            |y| -0.5 * y.norm_squared() - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            &x,
        )
        .unwrap();
        assert_relative_eq!(g[0], -1.2, epsilon = 1e-6);
    }

    #[test]
    fn divergence_of_identity_field_is_dimension() {
        let x = DVector::from_vec(vec![0.2, -0.4, 1.0]);
        let div = fd_divergence(|y| y.clone(), &x).unwrap();
        assert_relative_eq!(div, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn non_finite_evaluation_is_reported_with_the_point() {
        let x = DVector::from_vec(vec![0.0]);
        let err = fd_gradient(|y| y[0].ln(), &x).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { .. }));
    }
}
