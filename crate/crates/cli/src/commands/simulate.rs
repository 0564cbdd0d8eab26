use std::path::Path;

use qdyne::par::map_indexed;
use qdyne::simulate::{derive_seed, simulate_cs_sweep, simulate_qdyne_trace, TraceConfig};
use qdyne::ProtocolTiming;

use crate::config::{config, count_model, load, model, range_values, readout, required};
use crate::error::{CliError, CliResult};
use crate::formats::{float, write_trace, Csv};
use crate::units::{Dim, Flag, Freq, Int, Num, Time};
use crate::{write_file, Context};

config!(Args => File {
    /// qdyne | cs (default qdyne).
    mode: String,
    /// rms accumulated phase Φrms (rad).
    phi_rms: Num,
    /// Frequency offset δ/2π.
    delta: Freq,
    /// Diffusion time T_D.
    t_d: Time,
    /// power-law | exponential (default power-law).
    envelope: String,
    /// Photons per readout in |0⟩.
    eta0: Num,
    /// Photons per readout in |1⟩ (equal to eta0 for a null control).
    eta1: Num,
    /// Relative contrast, instead of eta1.
    chi: Num,
    /// Acquisition time τ.
    tau: Time,
    /// Overhead τ_o per measurement (default 0).
    tau_o: Time,
    /// Measurements per trace.
    n_measurements: Int,
    /// Nominal experiment time (default n_measurements·τ̃).
    total_time: Time,
    /// Random seed.
    seed: Int,
    /// poisson | bernoulli (default poisson).
    count_model: String,
    /// Sensor coherence time T₂.
    t2: Time,
    /// Clamp negative photon means to zero.
    clamp_negative_mean: Flag,
    /// Traces to write; more than one needs --out DIR.
    n_traces: Int,
    /// CS waiting times as lo:hi:n[:log].
    tau_w: String,
    /// CS repeats per waiting time.
    n_repeats: Int,
});

/// Trace configuration shared with `pipeline`.
pub fn trace_config(f: &File) -> CliResult<TraceConfig> {
    let m = model(f.phi_rms, f.delta, f.t_d, f.envelope.as_deref())?;
    let r = readout(f.eta0, f.eta1, f.chi, true)?;
    let tau = required(f.tau, "tau")?.0;
    let tau_o = f.tau_o.map_or(0.0, |t| t.0);
    let n = required(f.n_measurements, "n_measurements")?.0 as usize;
    let total = f.total_time.map_or(n as f64 * (tau + tau_o), |t| t.0);
    let config = TraceConfig {
        model: m,
        readout: r,
        timing: ProtocolTiming::new(tau, tau_o, total)?,
        n_measurements: n,
        seed: required(f.seed, "seed")?.0,
        count_model: count_model(f.count_model.as_deref())?,
        t2: f.t2.map(|t| t.0),
        clamp_negative_mean: f.clamp_negative_mean.is_some_and(|c| c.0),
    };
    config.validate()?;
    Ok(config)
}

pub fn trace_name(i: usize) -> String {
    format!("trace_{i:04}.txt")
}

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("simulate", ctx.config(), args)?;
    match f.mode.as_deref().unwrap_or("qdyne") {
        "qdyne" => qdyne(ctx, &f),
        "cs" => cs(ctx, &f),
        other => Err(CliError::Config(format!("unknown mode '{other}' (qdyne, cs)"))),
    }
}

fn qdyne(ctx: &Context, f: &File) -> CliResult<()> {
    let config = trace_config(f)?;
    let n_traces = f.n_traces.map_or(1, |n| n.0 as usize);
    match n_traces {
        0 => Err(CliError::Config("n_traces must be positive".into())),
        1 if f.n_traces.is_none() => ctx.emit(&write_trace(&simulate_qdyne_trace(&config)?)),
        n => {
            let dir = ctx.out_dir("simulate with n_traces")?;
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            write_ensemble(&config, n, dir, ctx.exec)
        }
    }
}

/// Trace `i` uses seed `derive_seed(config.seed, i)`, as in `pipeline`.
pub fn write_ensemble(config: &TraceConfig, n: usize, dir: &Path, exec: qdyne::Execution) -> CliResult<()> {
    map_indexed(n, exec, |i| {
        let mut c = *config;
        c.seed = derive_seed(config.seed, i as u64);
        let trace = simulate_qdyne_trace(&c)?;
        write_file(&dir.join(trace_name(i)), &write_trace(&trace))
    })
    .into_iter()
    .collect()
}

fn cs(ctx: &Context, f: &File) -> CliResult<()> {
    let m = model(f.phi_rms, f.delta, f.t_d, f.envelope.as_deref())?;
    let r = readout(f.eta0, f.eta1, f.chi, false)?;
    let tau_w = range_values(&required(f.tau_w.clone(), "tau_w")?, Some(Dim::Time), false)?;
    let sweep = simulate_cs_sweep(
        &m,
        &r,
        required(f.tau, "tau")?.0,
        &tau_w,
        required(f.n_repeats, "n_repeats")?.0 as usize,
        required(f.seed, "seed")?.0,
        ctx.exec,
    )?;
    let mut csv = Csv::new(&["tau_w", "contrast_mean", "std_error"]);
    for ((t, m), e) in sweep
        .tau_w_values
        .iter()
        .zip(&sweep.contrast_means)
        .zip(&sweep.std_errors)
    {
        csv.row(&[float(*t), float(*m), float(*e)]);
    }
    ctx.emit(&csv.finish())
}
