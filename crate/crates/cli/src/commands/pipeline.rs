use std::path::Path;

use qdyne::estimate::AutocorrResult;
use qdyne::par::map_indexed;
use qdyne::pipeline::{analyze, GroupFit, PipelineConfig, PipelineReport};
use qdyne::simulate::{derive_seed, simulate_qdyne_trace};
use serde_json::{json, Value};

use super::estimate::{group_json, stats_json};
use super::simulate::{self, trace_config, trace_name};
use crate::config::{config, merged, parse, take, AnalysisArgs, AnalysisFile};
use crate::error::{CliError, CliResult};
use crate::formats::{float, write_trace, Csv};
use crate::units::Flag;
use crate::{json_text, write_file, Context};

config!(RunArgs => File {
    /// Measure the rmse from the true δ (default true) rather than the sample mean.
    reference_is_truth: Flag,
    /// Write every simulated trace under traces/ (default true).
    write_traces: Flag,
});

#[derive(Debug, clap::Args)]
pub struct Cmd {
    #[command(flatten)]
    pub trace: simulate::Args,
    #[command(flatten)]
    pub args: RunArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

pub fn run(ctx: &Context, cmd: &Cmd) -> CliResult<()> {
    let dir = ctx.out_dir("pipeline")?;
    let mut map = merged("pipeline", ctx.config(), &[&cmd.trace, &cmd.args, &cmd.analysis])?;
    let analysis = parse::<AnalysisFile>(take(&mut map, AnalysisFile::KEYS))?.build()?;
    let f: File = parse(take(&mut map, File::KEYS))?;
    let t: simulate::File = parse(map)?;
    if t.mode.as_deref().is_some_and(|m| m != "qdyne") || t.tau_w.is_some() || t.n_repeats.is_some() {
        return Err(CliError::Config(
            "pipeline simulates Qdyne traces; mode, tau_w and n_repeats do not apply".into(),
        ));
    }
    let config = PipelineConfig {
        trace: trace_config(&t)?,
        n_traces: t.n_traces.map_or(1, |n| n.0 as usize),
        analysis,
        reference_is_truth: f.reference_is_truth.is_none_or(|r| r.0),
    };
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let result = execute(ctx, &config, f.write_traces.is_none_or(|w| w.0), dir);
    if let Err(e) = &result {
        write_file(&dir.join("error.json"), &format!("{}\n", e.to_json()))?;
    }
    result
}

fn execute(ctx: &Context, config: &PipelineConfig, write_traces: bool, dir: &Path) -> CliResult<()> {
    write_file(
        &dir.join("config.json"),
        &json_text(&serde_json::to_value(config).expect("config serializes")),
    )?;
    let trace_dir = dir.join("traces");
    if write_traces {
        std::fs::create_dir_all(&trace_dir).map_err(|e| CliError::io(&trace_dir, e))?;
    }

    let per_trace: Vec<CliResult<(Vec<AutocorrResult>, f64)>> = map_indexed(config.n_traces, ctx.exec, |i| {
        let mut c = config.trace;
        c.seed = derive_seed(config.trace.seed, i as u64);
        let trace = simulate_qdyne_trace(&c)?;
        if write_traces {
            write_file(&trace_dir.join(trace_name(i)), &write_trace(&trace))?;
        }
        let groups = config.analysis.autocorrelate(&trace)?;
        Ok((groups, config.analysis.group_duration(&trace)))
    });
    let mut groups = Vec::new();
    let mut owners = Vec::new();
    let mut duration = f64::NAN;
    for (i, r) in per_trace.into_iter().enumerate() {
        let (g, d) = r?;
        duration = d;
        owners.extend(std::iter::repeat_n(i, g.len()));
        groups.extend(g);
    }
    write_file(&dir.join("autocorrelations.csv"), &autocorr_csv(&groups, &owners))?;

    let report = analyze(config, &groups, duration, ctx.exec)?;
    let fits: Vec<Value> = (0..groups.len())
        .map(|i| {
            let g = GroupFit {
                fit: match (&report.stats.fits[i], &report.errors[i]) {
                    (Some(fit), _) => Ok(fit.clone()),
                    (None, msg) => Err(qdyne::Error::Invalid(msg.clone().unwrap_or_default())),
                },
                fourier: report.fourier[i],
                signal_detected: report.signal_detected[i],
            };
            let mut v = group_json(&format!("traces/{}", trace_name(owners[i])), i, &g);
            if report.errors[i].is_some() {
                v["error"] = json!(report.errors[i]);
            }
            v
        })
        .collect();
    write_file(&dir.join("fits.json"), &json_text(&Value::Array(fits)))?;
    write_file(&dir.join("stats.json"), &json_text(&stats(&report)))
}

fn autocorr_csv(groups: &[AutocorrResult], owners: &[usize]) -> String {
    let mut csv = Csv::new(&["group", "trace", "lag_s", "value", "n_pairs"]);
    for (i, ac) in groups.iter().enumerate() {
        for ((lag, v), n) in ac.lags.iter().zip(&ac.values).zip(&ac.n_pairs) {
            csv.row(&[
                i.to_string(),
                owners[i].to_string(),
                float(*lag),
                float(*v),
                n.to_string(),
            ]);
        }
    }
    csv.finish()
}

fn stats(r: &PipelineReport) -> Value {
    json!({
        "status": if r.no_signal { "no signal detected" } else { "signal detected" },
        "no_signal": r.no_signal,
        "n_traces": r.n_traces,
        "n_groups": r.n_groups,
        "group_duration_s": r.group_duration,
        "rmse_hz": r.rmse_hz,
        "crb_hz": r.crb_hz,
        "rmse_over_crb": r.rmse_over_crb,
        "fisher_information_s2": r.fisher_information,
        "resolvable": r.resolvable,
        "fourier_mean_half_fwhm_hz": r.fourier_mean_half_fwhm,
        "fourier_failures": r.fourier_failures,
        "fit_beats_fourier": r.rmse_hz < r.fourier_mean_half_fwhm,
        "groups_with_signal": r.signal_detected.iter().filter(|&&d| d).count(),
        "failed_fits": r.errors.iter().filter(|e| e.is_some()).count(),
        "estimator": stats_json(&r.stats),
    })
}
