use std::path::PathBuf;

use qdyne::simulate::PhotonTrace;

use crate::config::{config, load, required};
use crate::error::{CliError, CliResult};
use crate::formats::{bin_timetags, to_ns, write_trace, Binning};
use crate::units::{Int, Time};
use crate::{read_file, Context};

config!(Args => File {
    /// Measurement period τ̃ (whole nanoseconds).
    tau_tilde: Time,
    /// Start of the collection window after each period start (default 0).
    offset: Time,
    /// Collection window length, at most τ̃.
    window: Time,
    /// Number of measurements in the trace.
    n_measurements: Int,
    /// Record duration, instead of n_measurements.
    duration: Time,
    /// Seed recorded in the trace header (default 0).
    seed: Int,
});

#[derive(Debug, clap::Args)]
pub struct Cmd {
    /// File of photon arrival times, one integer nanosecond value per line.
    pub timetags: PathBuf,
    #[command(flatten)]
    pub args: Args,
}

pub fn run(ctx: &Context, cmd: &Cmd) -> CliResult<()> {
    let f: File = load("ingest", ctx.config(), &cmd.args)?;
    let tau_tilde = required(f.tau_tilde, "tau_tilde")?;
    let tt_ns = to_ns(tau_tilde.0, "tau_tilde")?;
    let n_measurements = match (f.n_measurements, f.duration) {
        (Some(n), None) => n.0 as usize,
        (None, Some(d)) => (to_ns(d.0, "duration")? / tt_ns.max(1)) as usize,
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "give either n_measurements or duration, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "missing required parameter 'n_measurements' (or 'duration')".into(),
            ))
        }
    };
    let binning = Binning {
        tau_tilde: tt_ns,
        offset: to_ns(f.offset.map_or(0.0, |t| t.0), "offset")?,
        window: to_ns(required(f.window, "window")?.0, "window")?,
        n_measurements,
    };
    let counts = bin_timetags(&read_file(&cmd.timetags)?, &binning)?;
    let trace = PhotonTrace::new(counts, tau_tilde.0, f.seed.map_or(0, |s| s.0))?;
    ctx.emit(&write_trace(&trace))
}
