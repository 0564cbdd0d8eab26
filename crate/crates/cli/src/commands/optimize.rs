use qdyne::protocol::{
    optimize_tau, phi_rms_from, readout_window_optimize, Maximum, ReadoutTrace, SensorPhysics, TauObjective,
};
use serde_json::json;

use crate::config::{config, envelope_kind, load, readout, required};
use crate::error::{CliError, CliResult};
use crate::units::{Density, Field, Gyro, Length, Num, Time};
use crate::{read_file, Context};

config!(Args => File {
    /// tau | readout-window.
    target: String,
    /// signal | snr-rate (default snr-rate).
    objective: String,
    /// power-law | exponential (default power-law).
    envelope: String,
    /// Diffusion time T_D ("inf" for none).
    t_d: Time,
    /// Overhead τ_o per measurement (snr-rate).
    tau_o: Time,
    /// Sensor coherence time T₂ (default none).
    t2: Time,
    /// Sensor gyromagnetic ratio (default electron).
    gamma_sensor: Gyro,
    /// Nuclear gyromagnetic ratio (default ¹H).
    gamma_nuclear: Gyro,
    /// Sensor depth below the sample surface.
    depth: Length,
    /// Nuclear spin density.
    spin_density: crate::units::Density,
    /// rms field of the nuclear signal.
    b_rms: Field,
    /// Photons per readout in |0⟩.
    eta0: Num,
    /// Photons per readout in |1⟩.
    eta1: Num,
    /// Relative contrast, instead of eta1.
    chi: Num,
    /// Lower end of the τ search range.
    tau_min: Time,
    /// Upper end of the τ search range.
    tau_max: Time,
    /// CSV `t_ns,counts0,counts1` of cumulative readout photons.
    readout_csv: String,
});

fn max_json(m: &Maximum, physics: &SensorPhysics) -> CliResult<serde_json::Value> {
    Ok(json!({
        "tau_s": m.x,
        "value": m.value,
        "at_boundary": m.at_boundary,
        "phi_rms": phi_rms_from(m.x, physics)?,
    }))
}

fn tau(f: &File) -> CliResult<serde_json::Value> {
    let objective = match f.objective.as_deref().unwrap_or("snr-rate") {
        "signal" => TauObjective::Signal,
        "snr-rate" => TauObjective::SnrRate {
            tau_o: required(f.tau_o, "tau_o")?.0,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown objective '{other}' (signal, snr-rate)"
            )))
        }
    };
    let defaults = SensorPhysics::default();
    let physics = SensorPhysics {
        gamma_sensor: f.gamma_sensor.map_or(defaults.gamma_sensor, Gyro::angular),
        gamma_nuclear: f.gamma_nuclear.map_or(defaults.gamma_nuclear, Gyro::angular),
        t2: f.t2.map_or(f64::INFINITY, |t| t.0),
        depth: f.depth.map(|d: Length| d.0),
        spin_density: f.spin_density.map(|d: Density| d.0),
        b_rms: f.b_rms.map(|b| b.0),
    };
    let r = readout(f.eta0, f.eta1, f.chi, false)?;
    let kind = envelope_kind(f.envelope.as_deref())?;
    let t_d = required(f.t_d, "t_d")?.0;
    let bounds = (required(f.tau_min, "tau_min")?.0, required(f.tau_max, "tau_max")?.0);
    let best = optimize_tau(objective, &physics, &r, kind, t_d, bounds)?;
    let mut out = json!({
        "target": "tau",
        "objective": objective,
        "b_rms_t": physics.b_rms()?,
        "optimum": max_json(&best, &physics)?,
    });
    if physics.t2.is_finite() {
        let free = physics.without_decoherence();
        let m = optimize_tau(objective, &free, &r, kind, t_d, bounds)?;
        out["decoherence_free"] = max_json(&m, &free)?;
    }
    Ok(out)
}

fn readout_window(f: &File) -> CliResult<serde_json::Value> {
    let path = required(f.readout_csv.as_deref(), "readout_csv")?;
    let trace = ReadoutTrace::from_csv(&read_file(path.as_ref())?)?;
    let w = readout_window_optimize(&trace)?;
    Ok(json!({
        "target": "readout-window",
        "t_snr_s": w.t_snr,
        "t_fisher_s": w.t_fisher,
        "degenerate": w.degenerate,
        "time_s": trace.time_axis,
        "snr_curve": w.snr_curve,
        "fisher_curve": w.fisher_curve,
    }))
}

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("optimize", ctx.config(), args)?;
    let out = match required(f.target.as_deref(), "target")? {
        "tau" => tau(&f)?,
        "readout-window" => readout_window(&f)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown target '{other}' (tau, readout-window)"
            )))
        }
    };
    ctx.emit_json(&out)
}
