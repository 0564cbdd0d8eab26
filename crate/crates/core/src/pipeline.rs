//! Simulate → autocorrelate → fit → rmse, compared with the Cramér–Rao bound.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::envelopes::EnvelopeKind;
use crate::error::{invalid, Result};
use crate::estimate::{
    autocorrelation_with, fit_autocorrelation, fit_autocorrelation_from, fourier_baseline, slice_blocks,
    stats_from_fits, AutocorrResult, BlockSpec, EstimatorStats, FitBounds, FitModelSpec, FitResult, FourierBaseline,
    Normalization, Range,
};
use crate::fisher::{fisher_total_qdyne_numeric, rayleigh_resolvable, ReadoutParams};
use crate::par::{map_indexed, map_slice, Execution};
use crate::simulate::{derive_seed, simulate_qdyne_trace, PhotonTrace, TraceConfig};

const DETECT_LAGS: usize = 10;

/// Where the δ search box comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeltaWindow {
    /// The whole Nyquist band of the lag grid.
    Nyquist,
    /// Fourier peak ± `half_widths` × FWHM/2 of the same autocorrelation.
    Fourier { half_widths: f64 },
    /// Explicit range (rad/s).
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Envelope fitted; defaults to the simulated one.
    #[serde(default)]
    pub envelope: Option<EnvelopeKind>,
    #[serde(default)]
    pub include_nuisance: bool,
    #[serde(default)]
    pub weighted: bool,
    pub n_starts: usize,
    pub delta_window: DeltaWindow,
    /// Fit the first `initial_lags` lags, then keep doubling the lag range up
    /// to the full autocorrelation, each stage started from the last.
    #[serde(default)]
    pub initial_lags: Option<usize>,
}

/// How autocorrelations are formed and fitted; shared by simulated and
/// measured traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Slice each trace into grouped blocks; otherwise one group per trace.
    #[serde(default)]
    pub blocks: Option<BlockSpec>,
    /// Used when `blocks` is absent (s).
    pub max_lag: f64,
    #[serde(default)]
    pub normalization: Normalization,
    pub fit: FitOptions,
    pub zero_pad_factor: usize,
    /// Restrict the Fourier baseline to lags up to this value (s).
    #[serde(default)]
    pub fourier_max_lag: Option<f64>,
    /// Seed of the multistart draws.
    #[serde(default)]
    pub fit_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub trace: TraceConfig,
    pub n_traces: usize,
    pub analysis: AnalysisConfig,
    /// Measure rmse against the true δ rather than the ensemble mean.
    #[serde(default = "yes")]
    pub reference_is_truth: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_traces: usize,
    pub n_groups: usize,
    /// Record length behind one δ estimate (s).
    pub group_duration: f64,
    pub stats: EstimatorStats,
    /// δ information of one group's record (s²).
    pub fisher_information: f64,
    /// `√(1/I_δ)` (rad/s).
    pub crb: f64,
    pub rmse_over_crb: f64,
    pub rmse_hz: f64,
    pub crb_hz: f64,
    pub resolvable: bool,
    pub fourier: Vec<Option<FourierBaseline>>,
    /// Mean FWHM/2 of the Fourier baseline over groups where it exists (Hz).
    pub fourier_mean_half_fwhm: f64,
    pub fourier_failures: usize,
    /// Per group: the first lags reject white noise.
    pub signal_detected: Vec<bool>,
    /// No group shows a correlation signal; the δ statistics are then noise.
    pub no_signal: bool,
    /// Per-group failure messages.
    pub errors: Vec<Option<String>>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub traces: Vec<PhotonTrace>,
    pub autocorrelations: Vec<AutocorrResult>,
    pub report: PipelineReport,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fit.n_starts == 0 {
            return invalid("n_starts must be positive");
        }
        if self.zero_pad_factor == 0 {
            return invalid("zero_pad_factor must be positive");
        }
        if let DeltaWindow::Fourier { half_widths } = self.fit.delta_window {
            if !(half_widths > 0.0) {
                return invalid("Fourier window half_widths must be positive");
            }
        }
        Ok(())
    }

    fn fit_spec(
        &self,
        envelope: EnvelopeKind,
        ac: &AutocorrResult,
        fourier: Option<&FourierBaseline>,
    ) -> Result<FitModelSpec> {
        let mut bounds = FitBounds::default_for(ac)?;
        match self.fit.delta_window {
            DeltaWindow::Nyquist => {}
            DeltaWindow::Fourier { half_widths } => {
                if let Some(f) = fourier {
                    bounds =
                        bounds.with_delta_window(2.0 * PI * f.peak_frequency, half_widths * 2.0 * PI * f.half_fwhm);
                }
            }
            DeltaWindow::Fixed { lo, hi } => bounds.delta = Range::new(lo, hi),
        }
        Ok(FitModelSpec {
            envelope: self.fit.envelope.unwrap_or(envelope),
            include_nuisance: self.fit.include_nuisance,
            bounds,
            weighted: self.fit.weighted,
        })
    }

    /// Grouped autocorrelations of one trace.
    pub fn autocorrelate(&self, trace: &PhotonTrace) -> Result<Vec<AutocorrResult>> {
        match &self.blocks {
            Some(spec) => slice_blocks(trace, spec, Execution::Sequential),
            None => Ok(vec![autocorrelation_with(trace, self.max_lag, self.normalization)?]),
        }
    }

    /// Record length behind one group (s).
    pub fn group_duration(&self, trace: &PhotonTrace) -> f64 {
        match &self.blocks {
            Some(b) => b.block_duration * b.group_size as f64,
            None => trace.duration(),
        }
    }

    /// Fourier baseline and fit of one autocorrelation, staging the lag range
    /// if configured. `envelope` applies unless the options name one.
    pub fn fit_group(&self, envelope: EnvelopeKind, ac: &AutocorrResult, seed: u64) -> GroupFit {
        let fourier = match self.fourier_max_lag {
            Some(t) => fourier_baseline(
                &ac.truncated((t / ac.spacing * (1.0 + 1e-12)) as usize),
                self.zero_pad_factor,
            ),
            None => fourier_baseline(ac, self.zero_pad_factor),
        }
        .ok();
        let fit = self
            .fit_spec(envelope, ac, fourier.as_ref())
            .and_then(|spec| match self.fit.initial_lags {
                Some(k0) if k0 < ac.len() => {
                    let mut k = k0.max(10);
                    let mut fit = fit_autocorrelation(&ac.truncated(k), &spec, self.fit.n_starts, seed);
                    while k < ac.len() {
                        let Ok(prev) = &fit else { break };
                        k = (2 * k).min(ac.len());
                        let start = spec.bounds.to_unit(&prev.params, spec.include_nuisance);
                        fit = fit_autocorrelation_from(&ac.truncated(k), &spec, &[start]);
                    }
                    fit
                }
                _ => fit_autocorrelation(ac, &spec, self.fit.n_starts, seed),
            });
        GroupFit {
            fit,
            fourier,
            signal_detected: ac.detects_signal(DETECT_LAGS),
        }
    }

    /// Fit every group, group `i` with seed `derive_seed(fit_seed, i)`.
    pub fn fit_groups(&self, envelope: EnvelopeKind, groups: &[AutocorrResult], exec: Execution) -> Vec<GroupFit> {
        let indexed: Vec<(usize, &AutocorrResult)> = groups.iter().enumerate().collect();
        map_slice(&indexed, exec, |&(i, ac)| {
            self.fit_group(envelope, ac, derive_seed(self.fit_seed, i as u64))
        })
    }
}

#[derive(Debug, Clone)]
pub struct GroupFit {
    pub fit: Result<FitResult>,
    pub fourier: Option<FourierBaseline>,
    /// The first lags reject white noise.
    pub signal_detected: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.trace.validate()?;
        if self.n_traces == 0 {
            return invalid("n_traces must be positive");
        }
        self.analysis.validate()
    }

    /// Fisher information of one group, with the decoherence-reduced contrast.
    pub fn group_information(&self, group_duration: f64) -> Result<f64> {
        let eta = self.trace.readout.eta();
        let half = 0.5 * self.trace.effective_contrast();
        if half == 0.0 {
            return Ok(0.0);
        }
        let readout = ReadoutParams::new(eta + half, eta - half)?;
        let timing = self.trace.timing.with_total_time(group_duration);
        Ok(fisher_total_qdyne_numeric(&self.trace.model, &readout, &timing)?.value)
    }
}

/// Run the full chain on `n_traces` simulated traces with seeds derived from
/// `config.trace.seed`. Per-group failures are reported, not fatal.
pub fn run_pipeline(config: &PipelineConfig, exec: Execution) -> Result<PipelineOutput> {
    config.validate()?;
    let traces = map_indexed(config.n_traces, exec, |i| {
        let mut c = config.trace;
        c.seed = derive_seed(config.trace.seed, i as u64);
        simulate_qdyne_trace(&c)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let groups: Vec<AutocorrResult> = map_slice(&traces, exec, |t| config.analysis.autocorrelate(t))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let group_duration = config.analysis.group_duration(&traces[0]);
    let report = analyze(config, &groups, group_duration, exec)?;
    Ok(PipelineOutput {
        traces,
        autocorrelations: groups,
        report,
    })
}

/// Fit `groups` and compare the rmse with the bound for `group_duration`.
pub fn analyze(
    config: &PipelineConfig,
    groups: &[AutocorrResult],
    group_duration: f64,
    exec: Execution,
) -> Result<PipelineReport> {
    if groups.is_empty() {
        return invalid("no autocorrelations to analyze");
    }
    let results = config.analysis.fit_groups(config.trace.model.kind, groups, exec);
    let errors = results
        .iter()
        .map(|g| g.fit.as_ref().err().map(|e| e.to_string()))
        .collect();
    let fourier: Vec<Option<FourierBaseline>> = results.iter().map(|g| g.fourier).collect();
    let signal_detected: Vec<bool> = results.iter().map(|g| g.signal_detected).collect();
    let reference = config.reference_is_truth.then_some(config.trace.model.delta);
    let stats = stats_from_fits(results.into_iter().map(|g| g.fit).collect(), reference)?;

    let info = config.group_information(group_duration)?;
    let crb = (1.0 / info).sqrt();
    let widths: Vec<f64> = fourier.iter().flatten().map(|b| b.half_fwhm).collect();
    Ok(PipelineReport {
        n_traces: config.n_traces,
        n_groups: groups.len(),
        group_duration,
        rmse_over_crb: if info > 0.0 { stats.rmse / crb } else { f64::NAN },
        no_signal: !signal_detected.iter().any(|&d| d),
        signal_detected,
        rmse_hz: stats.rmse / (2.0 * PI),
        crb_hz: crb / (2.0 * PI),
        resolvable: rayleigh_resolvable(info, config.trace.model.delta),
        fisher_information: info,
        crb,
        stats,
        fourier_failures: fourier.len() - widths.len(),
        fourier_mean_half_fwhm: if widths.is_empty() {
            f64::NAN
        } else {
            widths.iter().sum::<f64>() / widths.len() as f64
        },
        fourier,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::CorrelationModel;
    use crate::fisher::ProtocolTiming;
    use crate::simulate::CountModel;

    fn config() -> PipelineConfig {
        let model = CorrelationModel::new(0.5, 2.0 * PI * 5000.0, 100e-6, EnvelopeKind::Exponential).unwrap();
        PipelineConfig {
            trace: TraceConfig {
                model,
                readout: ReadoutParams::new(1.0, 0.2).unwrap(),
                timing: ProtocolTiming::new(23e-6, 2e-6, 0.5).unwrap(),
                n_measurements: 20_000,
                seed: 42,
                count_model: CountModel::Poisson,
                t2: None,
                clamp_negative_mean: false,
            },
            n_traces: 4,
            analysis: AnalysisConfig {
                blocks: None,
                max_lag: 40.0 * 25e-6,
                normalization: Normalization::Unbiased,
                fit: FitOptions {
                    envelope: None,
                    include_nuisance: false,
                    weighted: true,
                    n_starts: 10,
                    delta_window: DeltaWindow::Nyquist,
                    initial_lags: Some(20),
                },
                zero_pad_factor: 8,
                fourier_max_lag: None,
                fit_seed: 3,
            },
            reference_is_truth: true,
        }
    }

    #[test]
    fn small_run_is_sane_and_deterministic() {
        let c = config();
        let a = run_pipeline(&c, Execution::Parallel).unwrap();
        let b = run_pipeline(&c, Execution::Sequential).unwrap();
        assert_eq!(format!("{:?}", a.report), format!("{:?}", b.report));
        let r = &a.report;
        assert_eq!(r.n_groups, 4);
        assert_eq!(r.stats.estimates.len() + r.stats.n_excluded, 4);
        assert!(r.crb > 0.0 && r.rmse_over_crb.is_finite());
        assert!(r.stats.rmse < 2.0 * PI * 1000.0, "{}", r.stats.rmse);
        assert!(!r.no_signal);
    }

    #[test]
    fn zero_contrast_reports_no_signal() {
        let mut c = config();
        c.trace.readout = ReadoutParams::without_contrast(0.6).unwrap();
        let r = run_pipeline(&c, Execution::Sequential).unwrap().report;
        assert!(r.no_signal);
        assert_eq!(r.fisher_information, 0.0);
        assert!(r.rmse_over_crb.is_nan());
    }

    #[test]
    fn blocks_give_groups() {
        let mut c = config();
        c.n_traces = 1;
        c.analysis.blocks = Some(BlockSpec {
            block_duration: 5_000.0 * 25e-6,
            group_size: 2,
            max_lag: 40.0 * 25e-6,
            normalization: Normalization::Unbiased,
            grouping: Default::default(),
        });
        let r = run_pipeline(&c, Execution::Sequential).unwrap().report;
        assert_eq!(r.n_groups, 2);
        assert!((r.group_duration - 0.25).abs() < 1e-12);
    }
}
