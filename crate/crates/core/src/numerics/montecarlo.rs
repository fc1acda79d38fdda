//! Seeded Monte Carlo expectations.
//!
//! Sample `i` is drawn from RNG substream `(seed, i)` and evaluated into
//! slot `i` of a value buffer; the mean and standard error reduce over
//! that buffer in index order. Parallelism only decides which thread
//! fills which slots, so the result is bitwise independent of thread
//! count and of the `chunk_size` scheduling hint.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::numerics::{fmt_point, EngineDescriptor, ExpectationResult, MonteCarloConfig};
use crate::rng::substream;

/// Computes `E_q[f]` as a seeded Monte Carlo mean with standard error.
pub fn expect_mc<F>(f: F, q: &dyn Density, config: &MonteCarloConfig) -> Result<ExpectationResult>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let n = config.samples;
    if n == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let chunk = config.chunk_size.max(1);
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(chunk)
        .map(|i| {
            let x = q.sample_one(&mut substream(config.seed, i as u64))?;
            let v = f(&x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteValue {
                    what: "Monte Carlo integrand".to_string(),
                    point: fmt_point(&x),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = values.iter().sum::<f64>() / n as f64;
    if !mean.is_finite() {
        return Err(Error::EngineFailure {
            detail: format!("Monte Carlo mean is not finite ({mean})"),
        });
    }
    let error_estimate = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    Ok(ExpectationResult {
        value: mean,
        error_estimate,
        engine: EngineDescriptor::MonteCarlo {
            samples: n,
            seed: config.seed,
            chunk_size: config.chunk_size,
        },
    })
}
