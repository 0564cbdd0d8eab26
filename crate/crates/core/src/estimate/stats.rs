use serde::{Deserialize, Serialize};

use super::autocorr::AutocorrResult;
use super::fit::{fit_autocorrelation, FitModelSpec, FitResult};
use crate::error::{invalid, Result};
use crate::par::{map_slice, Execution};
use crate::simulate::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Freedman–Diaconis histogram; the last bin is closed.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    if values.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let q = |p: f64| {
        let x = p * (v.len() - 1) as f64;
        let i = x.floor() as usize;
        let j = (i + 1).min(v.len() - 1);
        v[i] + (x - i as f64) * (v[j] - v[i])
    };
    let width = 2.0 * (q(0.75) - q(0.25)) / (v.len() as f64).cbrt();
    let n_bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let step = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + i as f64 * step })
        .collect();
    let mut counts = vec![0; n_bins];
    for &x in &v {
        let b = (((x - lo) / step).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    /// δ estimates (rad/s) of the successful fits, in input order.
    pub estimates: Vec<f64>,
    pub mean: f64,
    pub rmse: f64,
    /// What `rmse` is measured against.
    pub reference: f64,
    pub reference_is_truth: bool,
    pub histogram: Histogram,
    /// Fits that failed outright.
    pub n_excluded: usize,
    /// Fits kept although the optimizer hit its iteration limit.
    pub n_unconverged: usize,
    pub fits: Vec<Option<FitResult>>,
}

/// Fit every grouped autocorrelation and summarize the δ estimates.
///
/// Group `i` uses the seed `derive_seed(seed, i)`.
pub fn estimator_distribution(
    grouped: &[AutocorrResult],
    spec: &FitModelSpec,
    n_starts: usize,
    seed: u64,
    reference_delta: Option<f64>,
    exec: Execution,
) -> Result<EstimatorStats> {
    let indexed: Vec<(usize, &AutocorrResult)> = grouped.iter().enumerate().collect();
    let fits = map_slice(&indexed, exec, |&(i, ac)| {
        fit_autocorrelation(ac, spec, n_starts, derive_seed(seed, i as u64))
    });
    stats_from_fits(fits, reference_delta)
}

/// Summarize finished fits; failed fits count as excluded.
pub fn stats_from_fits(fits: Vec<Result<FitResult>>, reference_delta: Option<f64>) -> Result<EstimatorStats> {
    if fits.len() < 2 {
        return invalid(format!("need at least 2 grouped autocorrelations, got {}", fits.len()));
    }
    let fits: Vec<Option<FitResult>> = fits
        .into_iter()
        .map(|f| f.ok().filter(|f| f.params.delta.is_finite()))
        .collect();
    let estimates: Vec<f64> = fits.iter().flatten().map(|f| f.params.delta).collect();
    let n_excluded = fits.len() - estimates.len();
    let n_unconverged = fits.iter().flatten().filter(|f| !f.converged).count();
    if estimates.is_empty() {
        return invalid("every fit failed");
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let reference = reference_delta.unwrap_or(mean);
    let rmse = (estimates.iter().map(|d| (d - reference).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt();
    Ok(EstimatorStats {
        histogram: freedman_diaconis(&estimates),
        estimates,
        mean,
        rmse,
        reference,
        reference_is_truth: reference_delta.is_some(),
        n_excluded,
        n_unconverged,
        fits,
    })
}
