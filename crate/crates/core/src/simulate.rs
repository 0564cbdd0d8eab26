//! Monte Carlo synthesis of statistically polarized signals and photon traces.
//!
//! Amplitudes `a(t)`, `b(t)` are stationary Gaussian with autocovariance
//! `Φ²rms C(|Δt|/T_D)`, realized exactly by circulant embedding. Each call is
//! a pure function of its seed and configuration.

use num_complex::Complex64;
use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envelopes::CorrelationModel;
use crate::error::{domain, invalid, Error, Result};
use crate::fisher::{ProtocolTiming, ReadoutParams};
use crate::par::{map_indexed, Execution};

const STREAM_AMPLITUDES: u64 = 1;
const STREAM_COUNTS: u64 = 2;
/// Negative circulant eigenvalues below this fraction of the largest are clipped.
const EMBEDDING_TOL: f64 = 1e-6;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Seed of member `index` of an ensemble started from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountModel {
    #[default]
    Poisson,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub model: CorrelationModel,
    pub readout: ReadoutParams,
    pub timing: ProtocolTiming,
    pub n_measurements: usize,
    pub seed: u64,
    #[serde(default)]
    pub count_model: CountModel,
    /// Sensor coherence time; attenuates the contrast to `c e^{-τ/T₂}`.
    #[serde(default)]
    pub t2: Option<f64>,
    /// Clamp negative photon means to zero instead of failing.
    #[serde(default)]
    pub clamp_negative_mean: bool,
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_measurements < 2 {
            return invalid("a trace needs at least 2 measurements");
        }
        if let Some(t2) = self.t2 {
            if !(t2 > 0.0) {
                return invalid(format!("t2 must be positive, got {t2}"));
            }
        }
        let span = self.n_measurements as f64 * self.timing.tau_tilde();
        if (span - self.timing.total_time).abs() > 0.01 * self.timing.total_time {
            log::warn!(
                "n_measurements·τ̃ = {span} s differs from total_time = {} s",
                self.timing.total_time
            );
        }
        Ok(())
    }

    /// Contrast after sensor decoherence, `c̃`.
    pub fn effective_contrast(&self) -> f64 {
        let c = self.readout.contrast();
        match self.t2 {
            Some(t2) => c * (-self.timing.tau / t2).exp(),
            None => c,
        }
    }

    /// SHA-256 of the configuration's exact textual form.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    /// Digest of the generating configuration; `None` for measured data.
    pub config_digest: Option<String>,
}

/// Photon counts at fixed spacing `τ̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonTrace {
    pub counts: Vec<u32>,
    /// Measurement period (s).
    pub spacing: f64,
    pub meta: TraceMeta,
}

impl PhotonTrace {
    pub fn new(counts: Vec<u32>, spacing: f64, seed: u64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return invalid(format!("trace spacing must be positive, got {spacing}"));
        }
        Ok(PhotonTrace {
            counts,
            spacing,
            meta: TraceMeta {
                seed,
                config_digest: None,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.counts.len() as f64 * self.spacing
    }

    /// SHA-256 over spacing and counts.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.spacing.to_le_bytes());
        for c in &self.counts {
            h.update(c.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// Eigenvalues of the circulant embedding of `cov` (length `n`, size `2(n−1)`).
fn embedding_spectrum(cov: &[f64]) -> Result<Vec<f64>> {
    let n = cov.len();
    let m = 2 * (n - 1);
    let mut row: Vec<Complex64> = Vec::with_capacity(m);
    row.extend(cov.iter().map(|&c| Complex64::new(c, 0.0)));
    row.extend(cov[1..n - 1].iter().rev().map(|&c| Complex64::new(c, 0.0)));
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let lambda: Vec<f64> = row.iter().map(|z| z.re).collect();
    let max = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        if -min > EMBEDDING_TOL * max {
            return Err(Error::Embedding { min, max });
        }
        log::warn!("clipping circulant eigenvalues down to {min:e} (max {max:e})");
    }
    Ok(lambda.into_iter().map(|l| l.max(0.0)).collect())
}

/// Two independent stationary Gaussian sequences with autocovariance
/// `Φ²rms C(j·dt/T_D)`.
pub fn synthesize_amplitudes(n: usize, dt: f64, model: &CorrelationModel, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return invalid("need at least 2 samples");
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    model.validate()?;
    let var = model.phi_rms * model.phi_rms;
    if var == 0.0 {
        return Ok((vec![0.0; n], vec![0.0; n]));
    }
    let cov = (0..n)
        .map(|j| Ok(var * model.envelope(j as f64 * dt)?))
        .collect::<Result<Vec<f64>>>()?;
    let lambda = embedding_spectrum(&cov)?;
    let m = lambda.len();
    let mut r = rng(seed, STREAM_AMPLITUDES);
    let mut w: Vec<Complex64> = lambda
        .iter()
        .map(|&l| {
            let s = (l / m as f64).sqrt();
            let x: f64 = StandardNormal.sample(&mut r);
            let y: f64 = StandardNormal.sample(&mut r);
            Complex64::new(s * x, s * y)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut w);
    Ok(w[..n].iter().map(|z| (z.re, z.im)).unzip())
}

/// `Φ_j = a_j cos(δ j dt) + b_j sin(δ j dt)`.
pub fn phase_sequence(a: &[f64], b: &[f64], model: &CorrelationModel, dt: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return invalid(format!("amplitude lengths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .enumerate()
        .map(|(j, (&aj, &bj))| {
            let (s, c) = (model.delta * j as f64 * dt).sin_cos();
            aj * c + bj * s
        })
        .collect())
}

fn draw(count_model: CountModel, mean: f64, r: &mut ChaCha8Rng) -> Result<u32> {
    if mean == 0.0 {
        return Ok(0);
    }
    match count_model {
        CountModel::Poisson => {
            let d = Poisson::new(mean).map_err(|e| Error::Invalid(format!("Poisson mean {mean}: {e}")))?;
            Ok(d.sample(r) as u32)
        }
        CountModel::Bernoulli => {
            let d = Bernoulli::new(mean)
                .map_err(|_| Error::Invalid(format!("Bernoulli detection needs mean <= 1, got {mean}")))?;
            Ok(d.sample(r) as u32)
        }
    }
}

fn checked_mean(mean: f64, clamp: bool) -> Result<f64> {
    if mean < 0.0 {
        if !clamp {
            return domain(format!("negative photon mean {mean}"));
        }
        return Ok(0.0);
    }
    Ok(mean)
}

/// Qdyne photon record with `⟨η_t⟩ = η − (c̃/2) sin Φ_t`.
pub fn simulate_qdyne_trace(config: &TraceConfig) -> Result<PhotonTrace> {
    config.validate()?;
    let dt = config.timing.tau_tilde();
    let (a, b) = synthesize_amplitudes(config.n_measurements, dt, &config.model, config.seed)?;
    let phi = phase_sequence(&a, &b, &config.model, dt)?;
    let eta = config.readout.eta();
    let half_c = 0.5 * config.effective_contrast();
    let mut r = rng(config.seed, STREAM_COUNTS);
    let mut clamped = 0usize;
    let counts = phi
        .iter()
        .map(|&p| {
            let raw = eta - half_c * p.sin();
            if raw < 0.0 {
                clamped += 1;
            }
            draw(
                config.count_model,
                checked_mean(raw, config.clamp_negative_mean)?,
                &mut r,
            )
        })
        .collect::<Result<Vec<u32>>>()?;
    if clamped > 0 {
        log::warn!("clamped {clamped} negative photon means to zero");
    }
    Ok(PhotonTrace {
        counts,
        spacing: dt,
        meta: TraceMeta {
            seed: config.seed,
            config_digest: Some(config.digest()),
        },
    })
}

/// `n_traces` traces with seeds derived from `config.seed`, in index order.
pub fn simulate_ensemble(config: &TraceConfig, n_traces: usize, exec: Execution) -> Vec<Result<PhotonTrace>> {
    map_indexed(n_traces, exec, |i| {
        let mut c = *config;
        c.seed = derive_seed(config.seed, i as u64);
        simulate_qdyne_trace(&c)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSweep {
    pub tau_w_values: Vec<f64>,
    /// Mean alternating-readout difference per waiting time.
    pub contrast_means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_repeats: usize,
}

/// Correlation-spectroscopy sweep over waiting times `τ_w`.
///
/// Each repeat draws a correlated phase pair at separation `τ + τ_w` for each
/// of the `+y` and `−y` readouts, whose photon means are `η ± (c/2) sinΦ₁ sinΦ₂`.
pub fn simulate_cs_sweep(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    tau: f64,
    tau_w_values: &[f64],
    n_repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<CsSweep> {
    model.validate()?;
    if !(tau >= 0.0) {
        return invalid(format!("tau must be >= 0, got {tau}"));
    }
    if n_repeats == 0 {
        return invalid("n_repeats must be positive");
    }
    if tau_w_values.iter().any(|t| !(*t >= 0.0)) || tau_w_values.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("waiting times must be nonnegative and strictly increasing");
    }
    let var = model.phi_rms * model.phi_rms;
    let eta = readout.eta();
    let half_c = 0.5 * readout.contrast();
    let rows = map_indexed(tau_w_values.len(), exec, |i| -> Result<(f64, f64)> {
        let t = tau + tau_w_values[i];
        let rho = if var == 0.0 {
            0.0
        } else {
            (model.delta * t).cos() * model.envelope(t)?
        };
        let sd = model.phi_rms;
        let orth = (1.0 - rho * rho).max(0.0).sqrt();
        let mut r = rng(seed, STREAM_COUNTS + 1 + i as u64);
        let pair = |r: &mut ChaCha8Rng| {
            let z1: f64 = StandardNormal.sample(r);
            let z2: f64 = StandardNormal.sample(r);
            (sd * z1).sin() * (sd * (rho * z1 + orth * z2)).sin()
        };
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n_repeats {
            let sp = pair(&mut r);
            let plus = draw(CountModel::Poisson, eta + half_c * sp, &mut r)? as f64;
            let sm = pair(&mut r);
            let minus = draw(CountModel::Poisson, eta - half_c * sm, &mut r)? as f64;
            let d = plus - minus;
            sum += d;
            sum_sq += d * d;
        }
        let n = n_repeats as f64;
        let mean = sum / n;
        let var_d = if n_repeats > 1 {
            (sum_sq - n * mean * mean) / (n - 1.0)
        } else {
            0.0
        };
        Ok((mean, (var_d.max(0.0) / n).sqrt()))
    });
    let (contrast_means, std_errors) = rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(CsSweep {
        tau_w_values: tau_w_values.to_vec(),
        contrast_means,
        std_errors,
        n_repeats,
    })
}
