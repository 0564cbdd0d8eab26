use qdyne::fisher::{self, rayleigh_resolvable, FisherResult};
use qdyne::{CorrelationModel, EnvelopeKind, ProtocolTiming, ReadoutParams};
use serde_json::json;

use super::hz;
use crate::config::{config, load, model, readout, timing};
use crate::error::{CliError, CliResult};
use crate::units::{Freq, Num, Time};
use crate::Context;

config!(Args => File {
    /// rms accumulated phase Φrms (rad).
    phi_rms: Num,
    /// Frequency offset δ/2π, e.g. "1 kHz".
    delta: Freq,
    /// Diffusion time T_D.
    t_d: Time,
    /// power-law | exponential (default power-law).
    envelope: String,
    /// Photons per readout in |0⟩.
    eta0: Num,
    /// Photons per readout in |1⟩.
    eta1: Num,
    /// Relative contrast (η0 − η1)/η0, instead of eta1.
    chi: Num,
    /// Acquisition time τ.
    tau: Time,
    /// Overhead τ_o per measurement (default 0).
    tau_o: Time,
    /// Total experiment time T.
    total_time: Time,
    /// quadrature | sum | closed | small-delta (default quadrature).
    method: String,
});

/// Both totals by `method`.
pub fn totals(
    m: &CorrelationModel,
    r: &ReadoutParams,
    t: &ProtocolTiming,
    method: &str,
) -> CliResult<(FisherResult, FisherResult)> {
    let exp = m.kind == EnvelopeKind::Exponential;
    Ok(match method {
        "quadrature" => (
            fisher::fisher_total_cs_numeric(m, r, t)?,
            fisher::fisher_total_qdyne_numeric(m, r, t)?,
        ),
        "sum" => (
            fisher::fisher_total_cs_sum(m, r, t)?,
            fisher::fisher_total_qdyne_sum(m, r, t)?,
        ),
        "closed" if exp => (
            fisher::fisher_total_cs_closed_exponential(m, r, t)?,
            fisher::fisher_total_qdyne_closed_exponential(m, r, t)?,
        ),
        "closed" => (
            fisher::fisher_total_cs_closed_powerlaw(m, r, t, false)?,
            fisher::fisher_total_qdyne_closed_powerlaw(m, r, t)?,
        ),
        "small-delta" if exp => (
            fisher::fisher_total_cs_small_delta_exponential(m, r, t)?,
            fisher::fisher_total_qdyne_small_delta_exponential(m, r, t)?,
        ),
        "small-delta" => (
            fisher::fisher_total_cs_closed_powerlaw(m, r, t, true)?,
            fisher::fisher_total_qdyne_closed_powerlaw(m, r, t)?,
        ),
        other => {
            return Err(CliError::Config(format!(
                "unknown method '{other}' (quadrature, sum, closed, small-delta)"
            )))
        }
    })
}

fn protocol_json(res: &FisherResult, delta: f64) -> serde_json::Value {
    json!({
        "information_s2": res.value,
        "abs_error_estimate": res.abs_error_estimate,
        "method": res.method,
        "crb_hz": hz(res.value.sqrt().recip()),
        "resolvable": rayleigh_resolvable(res.value, delta),
    })
}

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("fisher", ctx.config(), args)?;
    let m = model(f.phi_rms, f.delta, f.t_d, f.envelope.as_deref())?;
    let r = readout(f.eta0, f.eta1, f.chi, false)?;
    let t = timing(f.tau, f.tau_o, f.total_time)?;
    let method = f.method.as_deref().unwrap_or("quadrature");
    let (cs, qd) = totals(&m, &r, &t, method)?;
    ctx.emit_json(&json!({
        "inputs": {
            "phi_rms": m.phi_rms,
            "delta_hz": f.delta.map(|d| d.0),
            "t_d_s": m.t_d,
            "envelope": m.kind.name(),
            "eta0": r.eta0,
            "eta1": r.eta1,
            "tau_s": t.tau,
            "tau_o_s": t.tau_o,
            "tau_tilde_s": t.tau_tilde(),
            "total_time_s": t.total_time,
        },
        "cs": protocol_json(&cs, m.delta),
        "qdyne": protocol_json(&qd, m.delta),
        "r_delta": qd.value / cs.value,
    }))
}
