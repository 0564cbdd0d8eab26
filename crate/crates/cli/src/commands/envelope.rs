use crate::config::{config, envelope_kind, load, range_values, required};
use crate::error::CliResult;
use crate::formats::{float, Csv};
use crate::Context;

config!(Args => File {
    /// power-law | exponential (alias exp).
    kind: String,
    /// Range of z = t/T_D as lo:hi:n[:log].
    z: String,
    /// Space the points logarithmically.
    log: crate::units::Flag,
});

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("envelope", ctx.config(), args)?;
    let kind = envelope_kind(Some(required(f.kind.as_deref(), "kind")?))?;
    let zs = range_values(&required(f.z, "z")?, None, f.log.is_some_and(|l| l.0))?;
    let mut csv = Csv::new(&["z", "C"]);
    for z in zs {
        csv.row(&[float(z), float(kind.eval(z)?)]);
    }
    ctx.emit(&csv.finish())
}
