use qdyne::fisher::{grid_map, Axis, AxisSpec, GridBase, GridSpec};

use crate::config::{config, load, model, parse_range, readout, required, timing};
use crate::error::{CliError, CliResult};
use crate::formats::{float, Csv};
use crate::units::{Dim, Freq, Num, Time};
use crate::Context;

config!(Args => File {
    /// Horizontal axis as name:lo:hi:n[:log]; names delta, t-d, tau-tilde, chi, total-time.
    x: String,
    /// Vertical axis, same form as x.
    y: String,
    /// Hold δ·T_D at this value while the other of δ, T_D is swept.
    fixed_delta_td: Num,
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
    /// Photons per readout in |1⟩.
    eta1: Num,
    /// Relative contrast, instead of eta1.
    chi: Num,
    /// Acquisition time τ of both protocols.
    tau: Time,
    /// Qdyne overhead τ_o (default 0).
    tau_o: Time,
    /// Total experiment time T.
    total_time: Time,
});

/// Axis spec in core units and the grid coordinates in output units (Hz for δ).
fn axis(text: &str) -> CliResult<(AxisSpec, Vec<f64>)> {
    let (name, rest) = text
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("axis '{text}' must look like name:lo:hi:n[:log]")))?;
    let axis: Axis = name.trim().parse()?;
    let dim = match axis {
        Axis::Delta => Some(Dim::Frequency),
        Axis::Chi => None,
        _ => Some(Dim::Time),
    };
    let (lo, hi, n, log) = parse_range(rest, dim)?;
    let shown = AxisSpec { axis, lo, hi, n, log }.values()?;
    let scale = if axis == Axis::Delta {
        2.0 * std::f64::consts::PI
    } else {
        1.0
    };
    Ok((
        AxisSpec {
            axis,
            lo: lo * scale,
            hi: hi * scale,
            n,
            log,
        },
        shown,
    ))
}

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("ratio-map", ctx.config(), args)?;
    let (x, xs) = axis(&required(f.x, "x")?)?;
    let (y, ys) = axis(&required(f.y, "y")?)?;
    let swept = |a: Axis| x.axis == a || y.axis == a;
    // swept quantities may be omitted from the base parameters
    let placeholder = |v: Option<Time>, a: Axis| v.or(swept(a).then_some(Time(1.0)));
    let fixed = f.fixed_delta_td.is_some();
    let delta = f.delta.or((fixed || swept(Axis::Delta)).then_some(Freq(1.0)));
    let t_d = f
        .t_d
        .or((fixed && swept(Axis::Delta) || swept(Axis::DiffusionTime)).then_some(Time(1.0)));
    let m = model(f.phi_rms, delta, t_d, f.envelope.as_deref())?;
    let r = if swept(Axis::Chi) {
        readout(f.eta0, None, Some(f.chi.unwrap_or(Num(0.5))), false)?
    } else {
        readout(f.eta0, f.eta1, f.chi, false)?
    };
    let tau_o = f.tau_o.map_or(0.0, |t| t.0);
    let t_qd = timing(
        placeholder(f.tau, Axis::TauTilde),
        f.tau_o,
        placeholder(f.total_time, Axis::TotalTime),
    )?;
    let t_cs = t_qd;
    if swept(Axis::TauTilde) && !(x.lo.min(y.lo) > tau_o) {
        log::warn!("tau-tilde values not above tau_o give invalid cells");
    }
    let spec = GridSpec {
        x,
        y,
        base: GridBase {
            model: m,
            readout_cs: r,
            readout_qd: r,
            timing_cs: t_cs,
            timing_qd: t_qd,
            fixed_delta_td: f.fixed_delta_td.map(|a| a.0),
        },
    };
    let cells = grid_map(&spec, ctx.exec)?;
    let mut csv = Csv::new(&["x", "y", "R_delta", "I_cs", "I_qd", "resolvable_cs", "resolvable_qd"]);
    let mut failed = 0;
    for (i, c) in cells.iter().enumerate() {
        let (xv, yv) = (xs[i % xs.len()], ys[i / xs.len()]);
        match &c.error {
            None => csv.row(&[
                float(xv),
                float(yv),
                float(c.r_delta),
                float(c.i_cs),
                float(c.i_qd),
                c.resolvable_cs.to_string(),
                c.resolvable_qd.to_string(),
            ]),
            Some(e) => {
                failed += 1;
                log::warn!("cell x={xv:e} y={yv:e}: {e}");
                csv.row(&[
                    float(xv),
                    float(yv),
                    "NaN".into(),
                    "NaN".into(),
                    "NaN".into(),
                    String::new(),
                    String::new(),
                ]);
            }
        }
    }
    if failed > 0 {
        log::warn!("{failed} of {} cells failed and are written as NaN", cells.len());
    }
    ctx.emit(&csv.finish())
}
