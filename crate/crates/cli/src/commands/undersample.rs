use qdyne::protocol::{larmor_shift, sample_rate_compensation, undersample_step, GAMMA_H_HZ_PER_T};
use serde_json::json;

use crate::config::{config, load, required};
use crate::error::CliResult;
use crate::units::{Field, Freq, Gyro, Int};
use crate::Context;

config!(Args => File {
    /// Larmor frequency f_L.
    larmor: Freq,
    /// Target aliased frequency.
    target: Freq,
    /// Samples per aliased period.
    n_samples: Int,
    /// Field drift ΔB.
    drift: Field,
    /// Nuclear gyromagnetic ratio (default 42.6 MHz/T).
    gamma: Gyro,
});

pub fn run(ctx: &Context, args: &Args) -> CliResult<()> {
    let f: File = load("undersample", ctx.config(), args)?;
    let f_l = required(f.larmor, "larmor")?.0;
    let u = undersample_step(
        f_l,
        required(f.target, "target")?.0,
        required(f.n_samples, "n_samples")?.0,
    )?;
    let mut out = json!({
        "step_s": u.t_s,
        "k": u.k,
        "t_min_s": u.t_min,
        "sample_rate_hz": 1.0 / u.t_s,
    });
    if let Some(db) = f.drift {
        let shift = larmor_shift(db.0, f.gamma.map_or(GAMMA_H_HZ_PER_T, |g| g.0));
        out["larmor_shift_hz"] = json!(shift);
        out["sample_rate_change_hz"] = json!(sample_rate_compensation(f_l, shift, 1.0 / u.t_s)?);
    }
    ctx.emit_json(&out)
}
