//! Closed-form totals.

use super::{FisherMethod, FisherResult, ProtocolTiming, ReadoutParams, TAIL_WEIGHT, TWO_OVER_SQRT_PI};
use crate::envelopes::{CorrelationModel, EnvelopeKind};
use crate::error::{domain, finite, invalid, Result};
use crate::special::cin;

/// Below this `δT_D` the exponential CS bracket loses digits to cancellation
/// and the small-δ limit is returned instead (relative error `O(a²)`).
const EXP_CS_SMALL_A: f64 = 1e-4;

fn closed(value: f64, ctx: &'static str) -> Result<FisherResult> {
    Ok(FisherResult::exact(finite(value, ctx)?, FisherMethod::ClosedForm))
}

fn require_kind(model: &CorrelationModel, kind: EnvelopeKind) -> Result<()> {
    model.validate()?;
    if model.kind != kind {
        return invalid(format!(
            "closed form requires the {} envelope, model has {}",
            kind.name(),
            model.kind.name()
        ));
    }
    Ok(())
}

fn qdyne_scale(model: &CorrelationModel, readout: &ReadoutParams, timing: &ProtocolTiming) -> f64 {
    let tt = timing.tau_tilde();
    readout.qdyne_factor() * model.phi_rms.powi(4) / (tt * tt)
}

/// Power-law CS total `(2/√π) c²Φ⁴T_D T/(4η+c²) · (γ − Ci(2δT_D) + ln 2δT_D)`,
/// or with `small_delta` its leading term `(2/√π) c²Φ⁴T_D³Tδ²/(4η+c²)`.
pub fn fisher_total_cs_closed_powerlaw(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
    small_delta: bool,
) -> Result<FisherResult> {
    model.validate()?;
    let scale = TWO_OVER_SQRT_PI * readout.cs_factor() * model.phi_rms.powi(4) * model.t_d * timing.total_time;
    let a = model.delta * model.t_d;
    if small_delta {
        return closed(scale * a * a, "CS power-law small-δ");
    }
    if !(model.delta > 0.0) {
        return domain("the full power-law CS closed form needs δ > 0");
    }
    closed(scale * cin(2.0 * a), "CS power-law closed form")
}

/// Power-law Qdyne total `(2/√π) c⁴Φ⁴T_D³T ln(δT)/((4η+c²)²τ̃²)`, valid for `δT ≫ 1`.
pub fn fisher_total_qdyne_closed_powerlaw(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    let dt = model.delta * timing.total_time;
    if !(dt > 1.0) {
        return domain(format!("Qdyne power-law closed form needs δT > 1, got {dt}"));
    }
    if model.delta * model.t_d >= 1.0 {
        log::warn!(
            "δT_D = {} is not small; the Qdyne closed form is unreliable",
            model.delta * model.t_d
        );
    }
    let value =
        TWO_OVER_SQRT_PI * qdyne_scale(model, readout, timing) * model.t_d.powi(3) * timing.total_time * dt.ln();
    closed(value, "Qdyne power-law closed form")
}

/// Exact Qdyne total for the tail-only envelope `C²(z) = (4/√π) z⁻³`:
/// `(4/√π)[L/2 (Cin(2aL) − 1) + sin(2aL)/(4a)]` with `a = δT_D`, `L = T/T_D`.
pub fn fisher_total_qdyne_closed_tail(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    if model.delta == 0.0 {
        return closed(0.0, "Qdyne tail closed form");
    }
    let a = model.delta * model.t_d;
    let l = timing.total_time / model.t_d;
    let x = 2.0 * a * l;
    let j = TAIL_WEIGHT * (0.5 * l * (cin(x) - 1.0) + x.sin() / (4.0 * a));
    closed(
        qdyne_scale(model, readout, timing) * model.t_d.powi(4) * j,
        "Qdyne tail closed form",
    )
}

/// `∫₀¹ z² sin²(az) e^{-2z} dz`.
pub(crate) fn cs_exponential_integral(a: f64) -> f64 {
    let e2 = std::f64::consts::E * std::f64::consts::E;
    if a < EXP_CS_SMALL_A {
        return 0.75 * (e2 - 7.0) / e2 * a * a;
    }
    let a2 = a * a;
    let (s, c) = (2.0 * a).sin_cos();
    let bracket = (e2 - 5.0) * (a2 * (a2 * (a2 + 3.0) + 3.0)) + 3.0 * e2 * a2 + (a2 + 5.0) * c
        - a * (a2 * (2.0 * a2 + 7.0) + 9.0) * s
        - 5.0;
    bracket / (8.0 * e2 * (a2 + 1.0).powi(3))
}

/// `∫₀ᴸ (L − z) z² sin²(az) e^{-2z} dz`.
pub(crate) fn qdyne_exponential_integral(a: f64, l: f64) -> f64 {
    let a2 = a * a;
    let p = a2 + 1.0;
    let (s, c) = (2.0 * a * l).sin_cos();
    let e = (-2.0 * l).exp();
    let p0 = p.powi(4) * (2.0 * l * l + 4.0 * l + 3.0);
    let ps = 4.0 * l * l * a * p * p + 4.0 * l * a * (3.0 - a2) * p + 12.0 * a * (1.0 - a2);
    let pc = 2.0 * l * l * (a2 - 1.0) * p * p + 4.0 * l * (3.0 * a2 - 1.0) * p + (-3.0 * a2 * a2 + 18.0 * a2 - 3.0);
    let steady = a2
        * (a2 * a2 * a2 * (2.0 * l - 3.0) + 4.0 * a2 * a2 * (2.0 * l - 3.0) + 3.0 * a2 * (6.0 * l - 5.0) + 12.0 * l
            - 30.0);
    (e * p0 + e * ps * s + e * pc * c + steady) / (16.0 * p.powi(4))
}

/// Exact CS total for the exponential envelope.
pub fn fisher_total_cs_closed_exponential(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    require_kind(model, EnvelopeKind::Exponential)?;
    let scale = readout.cs_factor() * model.phi_rms.powi(4) * model.t_d * timing.total_time;
    closed(
        (scale * cs_exponential_integral(model.delta * model.t_d)).max(0.0),
        "CS exponential closed form",
    )
}

/// Exact Qdyne total for the exponential envelope.
pub fn fisher_total_qdyne_closed_exponential(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    require_kind(model, EnvelopeKind::Exponential)?;
    let j = qdyne_exponential_integral(model.delta * model.t_d, timing.total_time / model.t_d);
    closed(
        (qdyne_scale(model, readout, timing) * model.t_d.powi(4) * j).max(0.0),
        "Qdyne exponential closed form",
    )
}

/// Small-δ limit `3(e²−7)/(4e²) · c²Φ⁴δ²T_D³T/(4η+c²)`.
pub fn fisher_total_cs_small_delta_exponential(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    let e2 = std::f64::consts::E.powi(2);
    let value = 0.75 * (e2 - 7.0) / e2
        * readout.cs_factor()
        * model.phi_rms.powi(4)
        * model.delta.powi(2)
        * model.t_d.powi(3)
        * timing.total_time;
    closed(value, "CS exponential small-δ")
}

/// Small-δ limit `(3/4) c⁴Φ⁴T_D⁵δ²T/((4η+c²)²τ̃²)`.
pub fn fisher_total_qdyne_small_delta_exponential(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    let value =
        0.75 * qdyne_scale(model, readout, timing) * model.t_d.powi(5) * model.delta.powi(2) * timing.total_time;
    closed(value, "Qdyne exponential small-δ")
}
