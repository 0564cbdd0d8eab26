use std::path::PathBuf;

use qdyne::estimate::{stats_from_fits, AutocorrResult, EstimatorStats};
use qdyne::pipeline::{AnalysisConfig, GroupFit};
use serde_json::{json, Value};

use super::hz;
use crate::config::{config, envelope_kind, merged, parse, take, AnalysisArgs, AnalysisFile};
use crate::error::{CliError, CliResult};
use crate::formats::read_trace;
use crate::units::Freq;
use crate::{read_file, Context};

config!(Args => File {
    /// Envelope fitted when fit_envelope is absent (default power-law).
    envelope: String,
    /// δ/2π that the rmse is measured from (default: the sample mean).
    reference_delta: Freq,
});

#[derive(Debug, clap::Args)]
pub struct Cmd {
    /// Trace files.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[command(flatten)]
    pub args: Args,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

pub fn group_json(source: &str, index: usize, g: &GroupFit) -> Value {
    let fit = g.fit.as_ref().ok().map(|r| {
        let p = &r.params;
        json!({
            "delta_hz": hz(p.delta),
            "delta_err_hz": hz(r.param_errors[1]),
            "t_d_s": p.t_d,
            "t_d_err_s": r.param_errors[2],
            "amplitude": p.amplitude,
            "nuisance": p.nuisance,
            "param_errors": r.param_errors,
            "r_squared": r.r_squared,
            "converged": r.converged,
            "at_bound": r.at_bound,
            "n_iterations": r.n_iterations,
        })
    });
    json!({
        "source": source,
        "group": index,
        "signal_detected": g.signal_detected,
        "fit": fit,
        "error": g.fit.as_ref().err().map(|e| e.to_string()),
        "fourier": g.fourier.map(|b| json!({
            "peak_hz": b.peak_frequency,
            "half_fwhm_hz": b.half_fwhm,
            "peak_height": b.peak_height,
        })),
    })
}

pub fn stats_json(s: &EstimatorStats) -> Value {
    json!({
        "n_estimates": s.estimates.len(),
        "mean_hz": hz(s.mean),
        "rmse_hz": hz(s.rmse),
        "reference_hz": hz(s.reference),
        "reference_is_truth": s.reference_is_truth,
        "n_excluded": s.n_excluded,
        "n_unconverged": s.n_unconverged,
        "histogram": {
            "edges_hz": s.histogram.edges.iter().map(|&e| hz(e)).collect::<Vec<_>>(),
            "counts": s.histogram.counts,
        },
    })
}

pub fn run(ctx: &Context, cmd: &Cmd) -> CliResult<()> {
    let mut map = merged("estimate", ctx.config(), &[&cmd.args, &cmd.analysis])?;
    let analysis: AnalysisConfig = parse::<AnalysisFile>(take(&mut map, AnalysisFile::KEYS))?.build()?;
    let f: File = parse(map)?;
    let envelope = envelope_kind(f.envelope.as_deref())?;

    let mut groups: Vec<AutocorrResult> = Vec::new();
    let mut sources = Vec::new();
    for path in &cmd.traces {
        let trace = read_trace(&read_file(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for ac in analysis.autocorrelate(&trace)? {
            sources.push(path.display().to_string());
            groups.push(ac);
        }
    }
    let fits = analysis.fit_groups(envelope, &groups, ctx.exec);
    let group_values: Vec<Value> = fits
        .iter()
        .enumerate()
        .map(|(i, g)| group_json(&sources[i], i, g))
        .collect();
    let stats = stats_from_fits(
        fits.into_iter().map(|g| g.fit).collect(),
        f.reference_delta.map(|d| d.angular()),
    )?;
    ctx.emit_json(&json!({
        "groups": group_values,
        "stats": stats_json(&stats),
    }))
}
