//! Leave-one-out cross-validated risk for kernel density estimates and
//! bandwidth selection.
//!
//! For a sample x_1,…,x_n and a scoring rule S, the cross-validated risk
//!
//! ```text
//! R̂_n(h) = (1/n) Σ_i S(p̂_{n,−i}(h), x_i)
//! ```
//!
//! scores each point against the density estimate fitted to the other
//! n−1 points. Its expectation equals the modified risk
//! `R_{n−1}(h) = E_q S(p̂_{n−1}(h), ·)` of an estimate built from n−1
//! fresh draws, so risks of competing bandwidths can be compared without
//! knowing the sampling density q — and, for kernel-based rules, without
//! knowing any normalizing constants.
//!
//! Samples are canonically ordered internally (lexicographic on
//! coordinates), which makes every reported value bitwise independent of
//! the order the caller supplies the points in.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::density::{kde, Density, Mixture};
use crate::divergences::expected_score;
use crate::error::{Error, Result};
use crate::numerics::{EngineConfig, ExpectationResult, QuadratureConfig};
use crate::rng::derive_seed;
use crate::scores::ScoringRule;

/// Lexicographic total order on points; ties between bitwise-equal
/// coordinates are immaterial because equal vectors are interchangeable.
fn canonical_order(samples: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut ordered = samples.to_vec();
    ordered.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    ordered
}

fn leave_one_out_weights(n: usize, held_out: usize) -> Vec<f64> {
    let w = 1.0 / (n - 1) as f64;
    (0..n).map(|j| if j == held_out { 0.0 } else { w }).collect()
}

fn loo_scores(
    rule: &ScoringRule,
    ordered: &[DVector<f64>],
    bandwidth: f64,
) -> Result<Vec<f64>> {
    let n = ordered.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let full = kde(ordered, bandwidth)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let held_out = full.reweighted(leave_one_out_weights(n, i))?;
            rule.evaluate(&held_out, &ordered[i])
        })
        .collect()
}

/// `R̂_n(h)`: the average held-out score of the bandwidth-`h` KDE.
pub fn cross_validated_risk(
    rule: &ScoringRule,
    samples: &[DVector<f64>],
    bandwidth: f64,
) -> Result<f64> {
    let ordered = canonical_order(samples);
    let scores = loo_scores(rule, &ordered, bandwidth)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// The modified risk `E_q S(p, ·)` — the scored expectation without the
/// entropy term `S(q,q)` that risk comparisons cancel anyway.
pub fn modified_risk(
    rule: &ScoringRule,
    p: &dyn Density,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<ExpectationResult> {
    expected_score(rule, p, q, engine)
}

/// A bandwidth-selection run: the cross-validated risk curve, the argmin,
/// and (when the sampling density was supplied) the quadrature reference
/// curve the CV values estimate.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub bandwidths: Vec<f64>,
    /// `R̂_n` at each grid point.
    pub cv_risks: Vec<f64>,
    pub selected_index: usize,
    pub selected_bandwidth: f64,
    /// `R_{n−1}(h) = (1/n) Σ_i E_q S(p̂_{n,−i}(h), ·)` by quadrature,
    /// present when the true density was given.
    pub reference_risks: Option<Vec<f64>>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|h| !h.is_finite() || *h <= 0.0)
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidBandwidthGrid);
    }
    Ok(())
}

/// Reference value `(1/n) Σ_i E_q S(p̂_{n,−i}, ·)`: the modified risk of a
/// size-(n−1) estimate, averaged over all leave-one-out fits so it is
/// exactly the quantity the cross-validated risk is unbiased for.
fn reference_risk(
    rule: &ScoringRule,
    full: &Mixture,
    n: usize,
    q: &dyn Density,
    engine: &EngineConfig,
) -> Result<f64> {
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let held_out = full.reweighted(leave_one_out_weights(n, i))?;
            Ok(modified_risk(rule, &held_out, q, engine)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / n as f64)
}

/// Scans an ascending bandwidth grid, reporting `R̂_n` per bandwidth and
/// selecting the argmin. Ties break toward the smaller bandwidth (the
/// scan keeps the first minimum). When `true_density` is supplied, the
/// report also carries the quadrature reference curve `R_{n−1}(h)`.
pub fn select_bandwidth(
    rule: &ScoringRule,
    samples: &[DVector<f64>],
    grid: &[f64],
    true_density: Option<&dyn Density>,
) -> Result<CvReport> {
    validate_grid(grid)?;
    let ordered = canonical_order(samples);
    let n = ordered.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let mut cv_risks = Vec::with_capacity(grid.len());
    for &h in grid {
        let scores = loo_scores(rule, &ordered, h)?;
        cv_risks.push(scores.iter().sum::<f64>() / n as f64);
    }
    let selected_index = cv_risks
        .iter()
        .enumerate()
        .fold(0usize, |best, (i, r)| if *r < cv_risks[best] { i } else { best });
    let reference_risks = match true_density {
        Some(q) => {
            let engine = EngineConfig::Quadrature(QuadratureConfig::default());
            let mut refs = Vec::with_capacity(grid.len());
            for &h in grid {
                let full = kde(&ordered, h)?;
                refs.push(reference_risk(rule, &full, n, q, &engine)?);
            }
            Some(refs)
        }
        None => None,
    };
    Ok(CvReport {
        bandwidths: grid.to_vec(),
        cv_risks,
        selected_index,
        selected_bandwidth: grid[selected_index],
        reference_risks,
    })
}

/// Outcome of repeating the cross-validation experiment on fresh draws.
#[derive(Debug, Clone)]
pub struct ReplicationReport {
    pub replications: usize,
    pub samples_per_replication: usize,
    pub bandwidth: f64,
    /// Replication mean and standard error of `R̂_n`.
    pub cv_mean: f64,
    pub cv_stderr: f64,
    /// Replication mean and standard error of the per-replication
    /// quadrature reference `R_{n−1}`.
    pub reference_mean: f64,
    pub reference_stderr: f64,
    /// Paired per-replication difference `R̂_n − R_{n−1}`.
    pub mean_difference: f64,
    pub difference_stderr: f64,
    /// `|mean difference| ≤ 5·stderr` over replications.
    pub unbiased_within_tolerance: bool,
}

/// Draws `replications` independent samples of size `n` from `q`, and for
/// each computes both `R̂_n` and its quadrature reference on the same
/// draw, so the unbiasedness claim `E R̂_n = E R_{n−1}` is tested as a
/// paired mean difference against 5 replication standard errors.
pub fn replication_experiment(
    rule: &ScoringRule,
    q: &dyn Density,
    replications: usize,
    n: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<ReplicationReport> {
    if replications < 2 {
        return Err(Error::TooFewSamples {
            got: replications,
            need: 2,
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    // the reference needs to be accurate only relative to the replication
    // standard error (~1e-2 at these sizes); a light quadrature keeps the
    // n-per-replication reference fits affordable
    let engine = EngineConfig::Quadrature(QuadratureConfig::with_nodes(53));
    let pairs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let draws = q.sample(n, derive_seed(seed, r as u64))?;
            let ordered = canonical_order(&draws);
            let scores = loo_scores(rule, &ordered, bandwidth)?;
            let cv = scores.iter().sum::<f64>() / n as f64;
            let full = kde(&ordered, bandwidth)?;
            let reference = reference_risk(rule, &full, n, q, &engine)?;
            Ok((cv, reference))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = replications as f64;
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / m;
    let stderr = |f: &dyn Fn(&(f64, f64)) -> f64, mu: f64| {
        let ss: f64 = pairs.iter().map(|p| (f(p) - mu) * (f(p) - mu)).sum();
        (ss / ((m - 1.0) * m)).sqrt()
    };
    let cv_mean = mean(&|p| p.0);
    let cv_stderr = stderr(&|p| p.0, cv_mean);
    let reference_mean = mean(&|p| p.1);
    let reference_stderr = stderr(&|p| p.1, reference_mean);
    let mean_difference = mean(&|p| p.0 - p.1);
    let difference_stderr = stderr(&|p| p.0 - p.1, mean_difference);
    Ok(ReplicationReport {
        replications,
        samples_per_replication: n,
        bandwidth,
        cv_mean,
        cv_stderr,
        reference_mean,
        reference_stderr,
        mean_difference,
        difference_stderr,
        unbiased_within_tolerance: mean_difference.abs() <= 5.0 * difference_stderr,
    })
}

/// Reads one point per line, coordinates separated by commas. Blank
/// lines and lines starting with `#` are skipped.
pub fn read_samples(path: &Path) -> Result<Vec<DVector<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut samples: Vec<DVector<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let coords = trimmed
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| Error::SampleFileFormat {
                    line: line_no,
                    detail: format!("cannot parse {:?} as a number: {e}", field.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = samples.first() {
            if coords.len() != first.len() {
                return Err(Error::SampleFileFormat {
                    line: line_no,
                    detail: format!(
                        "point has {} coordinates but earlier points have {}",
                        coords.len(),
                        first.len()
                    ),
                });
            }
        }
        samples.push(DVector::from_vec(coords));
    }
    if samples.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(samples)
}

/// Writes the report as comma-separated text with a header row, floats
/// rendered with 17 significant digits.
pub fn write_cv_report(report: &CvReport, out: &mut dyn std::io::Write) -> Result<()> {
    match &report.reference_risks {
        Some(refs) => {
            writeln!(out, "bandwidth,cv_risk,reference_risk,selected")?;
            for (i, ((bandwidth, risk), reference)) in report
                .bandwidths
                .iter()
                .zip(&report.cv_risks)
                .zip(refs)
                .enumerate()
            {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{}",
                    bandwidth,
                    risk,
                    reference,
                    (i == report.selected_index) as u8
                )?;
            }
        }
        None => {
            writeln!(out, "bandwidth,cv_risk,selected")?;
            for (i, (bandwidth, risk)) in
                report.bandwidths.iter().zip(&report.cv_risks).enumerate()
            {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{}",
                    bandwidth,
                    risk,
                    (i == report.selected_index) as u8
                )?;
            }
        }
    }
    Ok(())
}
