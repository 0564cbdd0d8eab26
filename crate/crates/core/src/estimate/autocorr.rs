use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::par::{map_indexed, Execution};
use crate::simulate::PhotonTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide lag `k` by `N`.
    #[default]
    Biased,
    /// Divide lag `k` by `N − k`.
    Unbiased,
}

/// Mean-subtracted autocorrelation at lags `τ̃, 2τ̃, …`.
///
/// Lag zero is kept apart in `variance`: it carries the shot-noise variance
/// that the correlation model does not describe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrResult {
    pub spacing: f64,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub n_pairs: Vec<usize>,
    /// Number of samples behind the estimate (summed over averaged blocks).
    pub n_points: usize,
    pub variance: f64,
    pub mean_subtracted: bool,
    pub normalization: Normalization,
}

impl AutocorrResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_lag(&self) -> f64 {
        self.lags.last().copied().unwrap_or(0.0)
    }

    /// `Σ v_k²/Var(v_k)` over the first `k` lags, with the variances of a
    /// white-noise record of the same lag-0 variance.
    pub fn white_noise_chi_square(&self, k: usize) -> f64 {
        let k = k.min(self.len());
        let v0 = self.variance * self.variance;
        (0..k)
            .map(|j| {
                let m = self.n_pairs[j] as f64;
                let norm = match self.normalization {
                    Normalization::Biased => self.n_points as f64,
                    Normalization::Unbiased => m,
                };
                let var = v0 * m / (norm * norm);
                if var > 0.0 {
                    self.values[j] * self.values[j] / var
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Whether the first `k` lags reject white noise at five standard deviations.
    pub fn detects_signal(&self, k: usize) -> bool {
        let k = k.min(self.len());
        let kf = k as f64;
        k > 0 && self.white_noise_chi_square(k) > kf + 5.0 * (2.0 * kf).sqrt()
    }

    /// The first `k` lags.
    pub fn truncated(&self, k: usize) -> AutocorrResult {
        let k = k.min(self.len());
        AutocorrResult {
            lags: self.lags[..k].to_vec(),
            values: self.values[..k].to_vec(),
            n_pairs: self.n_pairs[..k].to_vec(),
            ..self.clone()
        }
    }
}

fn lag_count(n: usize, spacing: f64, max_lag: f64) -> Result<usize> {
    if !(max_lag > 0.0) || !max_lag.is_finite() {
        return invalid(format!("max_lag must be positive, got {max_lag}"));
    }
    let k = (max_lag / spacing * (1.0 + 1e-12)).floor() as usize;
    if k == 0 {
        return invalid(format!("max_lag {max_lag} s is shorter than the spacing {spacing} s"));
    }
    if 2 * k > n {
        return invalid(format!(
            "trace of {n} points is too short for {k} lags (need at least {})",
            2 * k
        ));
    }
    Ok(k)
}

fn finish(spacing: f64, raw: Vec<f64>, n: usize, norm: Normalization) -> AutocorrResult {
    let k = raw.len() - 1;
    let scale = |lag: usize| match norm {
        Normalization::Biased => 1.0 / n as f64,
        Normalization::Unbiased => 1.0 / (n - lag) as f64,
    };
    AutocorrResult {
        spacing,
        lags: (1..=k).map(|j| j as f64 * spacing).collect(),
        values: (1..=k).map(|j| raw[j] * scale(j)).collect(),
        n_pairs: (1..=k).map(|j| n - j).collect(),
        n_points: n,
        variance: raw[0] / n as f64,
        mean_subtracted: true,
        normalization: norm,
    }
}

fn centered(counts: &[u32]) -> Vec<f64> {
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    counts.iter().map(|&c| c as f64 - mean).collect()
}

/// Lagged sums `Σ x_i x_{i+k}` for `k = 0..=max_k` by zero-padded FFT.
pub(crate) fn lagged_sums(x: &[f64], max_k: usize) -> Vec<f64> {
    let m = (x.len() + max_k + 1).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..=max_k].iter().map(|z| z.re / m as f64).collect()
}

/// Biased autocorrelation of `trace` up to `max_lag` (s).
pub fn autocorrelation(trace: &PhotonTrace, max_lag: f64) -> Result<AutocorrResult> {
    autocorrelation_with(trace, max_lag, Normalization::Biased)
}

pub fn autocorrelation_with(trace: &PhotonTrace, max_lag: f64, norm: Normalization) -> Result<AutocorrResult> {
    let k = lag_count(trace.len(), trace.spacing, max_lag)?;
    let x = centered(&trace.counts);
    Ok(finish(trace.spacing, lagged_sums(&x, k), x.len(), norm))
}

/// `O(N·K)` reference implementation.
pub fn autocorrelation_direct(trace: &PhotonTrace, max_lag: f64, norm: Normalization) -> Result<AutocorrResult> {
    let k = lag_count(trace.len(), trace.spacing, max_lag)?;
    let x = centered(&trace.counts);
    let raw = (0..=k)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum())
        .collect();
    Ok(finish(trace.spacing, raw, x.len(), norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Average the per-block autocorrelations within each group.
    #[default]
    Average,
    /// Autocorrelate each group's blocks as one contiguous record.
    Concatenate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// Block length (s).
    pub block_duration: f64,
    pub group_size: usize,
    pub max_lag: f64,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub grouping: Grouping,
}

/// Cut `trace` into contiguous blocks and combine them in consecutive groups.
///
/// Blocks left over after the last full group are discarded.
pub fn slice_blocks(trace: &PhotonTrace, spec: &BlockSpec, exec: Execution) -> Result<Vec<AutocorrResult>> {
    if spec.group_size == 0 {
        return invalid("group_size must be positive");
    }
    if !(spec.block_duration > 0.0) {
        return invalid("block_duration must be positive");
    }
    let block = (spec.block_duration / trace.spacing).round() as usize;
    if block == 0 {
        return invalid("block_duration is shorter than one measurement");
    }
    let n_groups = trace.len() / block / spec.group_size;
    if n_groups == 0 {
        return invalid(format!(
            "trace of {} s holds fewer than {} blocks of {} s",
            trace.duration(),
            spec.group_size,
            spec.block_duration
        ));
    }
    lag_count(block, trace.spacing, spec.max_lag)?;
    let group_len = block * spec.group_size;
    let sub = |lo: usize, len: usize| PhotonTrace {
        counts: trace.counts[lo..lo + len].to_vec(),
        spacing: trace.spacing,
        meta: trace.meta.clone(),
    };
    let groups = map_indexed(n_groups, exec, |g| -> Result<AutocorrResult> {
        let start = g * group_len;
        match spec.grouping {
            Grouping::Concatenate => autocorrelation_with(&sub(start, group_len), spec.max_lag, spec.normalization),
            Grouping::Average => {
                let mut acc: Option<AutocorrResult> = None;
                for b in 0..spec.group_size {
                    let ac = autocorrelation_with(&sub(start + b * block, block), spec.max_lag, spec.normalization)?;
                    acc = Some(match acc {
                        None => ac,
                        Some(mut s) => {
                            s.values.iter_mut().zip(&ac.values).for_each(|(a, v)| *a += v);
                            s.n_pairs.iter_mut().zip(&ac.n_pairs).for_each(|(a, v)| *a += v);
                            s.n_points += ac.n_points;
                            s.variance += ac.variance;
                            s
                        }
                    });
                }
                let mut s = acc.expect("group_size > 0");
                let g = spec.group_size as f64;
                s.values.iter_mut().for_each(|v| *v /= g);
                s.variance /= g;
                Ok(s)
            }
        }
    });
    groups.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_trace(n: usize, seed: u64) -> PhotonTrace {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        PhotonTrace::new((0..n).map(|_| r.random_range(0..4)).collect(), 25e-6, seed).unwrap()
    }

    #[test]
    fn constant_trace_is_zero() {
        let t = PhotonTrace::new(vec![3; 100], 1.0, 0).unwrap();
        let ac = autocorrelation(&t, 10.0).unwrap();
        assert!(ac.values.iter().all(|&v| v.abs() < 1e-12));
        assert_eq!(ac.lags[0], 1.0);
        assert_eq!(ac.len(), 10);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let t = random_trace(1000, 1);
        for norm in [Normalization::Biased, Normalization::Unbiased] {
            let fast = autocorrelation_with(&t, 400.0 * 25e-6, norm).unwrap();
            let slow = autocorrelation_direct(&t, 400.0 * 25e-6, norm).unwrap();
            let scale = slow.variance;
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
            }
            assert!((fast.variance - slow.variance).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn white_noise_is_not_a_signal() {
        for seed in 0..5 {
            let t = random_trace(20_000, 100 + seed);
            let ac = autocorrelation(&t, 40.0 * 25e-6).unwrap();
            let chi2 = ac.white_noise_chi_square(40);
            assert!(!ac.detects_signal(40), "chi2 {chi2}");
            // i.i.d. counts: each lag within 3σ of zero.
            let sigma = ac.variance / (20_000f64).sqrt();
            assert!(ac.values.iter().filter(|v| v.abs() > 3.0 * sigma).count() <= 1);
        }
        let mut counts: Vec<u32> = (0..20_000).map(|i| if (i / 3) % 2 == 0 { 3 } else { 0 }).collect();
        counts[7] = 1;
        let periodic = PhotonTrace::new(counts, 25e-6, 0).unwrap();
        assert!(autocorrelation(&periodic, 40.0 * 25e-6).unwrap().detects_signal(40));
    }

    #[test]
    fn parseval() {
        let t = random_trace(777, 2);
        let x = centered(&t.counts);
        let m = 2048;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(m, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
        assert!((energy - spectral).abs() <= 1e-8 * energy);
    }

    #[test]
    fn too_long_lag_is_rejected() {
        let t = random_trace(100, 3);
        assert!(autocorrelation(&t, 51.0 * 25e-6).is_err());
        assert!(autocorrelation(&t, 1e-6).is_err());
    }

    #[test]
    fn blocks_and_groups() {
        let t = random_trace(4000, 4);
        let whole = BlockSpec {
            block_duration: t.duration(),
            group_size: 1,
            max_lag: 50.0 * 25e-6,
            normalization: Normalization::Biased,
            grouping: Grouping::Average,
        };
        let one = slice_blocks(&t, &whole, Execution::Sequential).unwrap();
        assert_eq!(one, vec![autocorrelation(&t, whole.max_lag).unwrap()]);

        let forty = BlockSpec {
            block_duration: 100.0 * 25e-6,
            group_size: 20,
            ..whole
        };
        let groups = slice_blocks(&t, &forty, Execution::Sequential).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups, slice_blocks(&t, &forty, Execution::Parallel).unwrap());
        let cat = slice_blocks(
            &t,
            &BlockSpec {
                grouping: Grouping::Concatenate,
                ..forty
            },
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(cat.len(), 2);
        assert!(slice_blocks(
            &t,
            &BlockSpec {
                group_size: 50,
                ..forty
            },
            Execution::Sequential
        )
        .is_err());
    }
}
