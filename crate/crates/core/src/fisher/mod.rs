//! Fisher information about the frequency offset δ for correlation
//! spectroscopy (CS) and Qdyne.
//!
//! Single measurements (weak-signal expansion):
//!
//! ```text
//! i_CS(t) = c²/(4η+c²)       Φ⁴ t² sin²(δt) C²(t/T_D)
//! i_Qd(t) = (c²/(4η+c²))²    Φ⁴ t² sin²(δt) C²(t/T_D)
//! ```
//!
//! Totals, with `a = δT_D` and `L = T/T_D`:
//!
//! ```text
//! I_CS = c²/(4η+c²) Φ⁴ T_D T ∫₀¹ t² sin²(a t) C²(t) dt
//! I_Qd = (c²/(4η+c²))² Φ⁴ T_D⁴/τ̃² ∫₀ᴸ (L − z) z² sin²(a z) C²(z) dz
//! ```
//!
//! Each total is available by adaptive quadrature, by the brute-force sum it
//! discretizes, and (for the exponential and tail-only envelopes) in closed form.

mod closed;
mod grid;
mod integrals;

pub use closed::{
    fisher_total_cs_closed_exponential, fisher_total_cs_closed_powerlaw, fisher_total_cs_small_delta_exponential,
    fisher_total_qdyne_closed_exponential, fisher_total_qdyne_closed_powerlaw, fisher_total_qdyne_closed_tail,
    fisher_total_qdyne_small_delta_exponential,
};
pub use grid::{grid_map, Axis, AxisSpec, GridBase, GridCell, GridSpec};
pub use integrals::{
    fisher_total_cs_numeric, fisher_total_cs_sum, fisher_total_cs_tail_numeric, fisher_total_qdyne_numeric,
    fisher_total_qdyne_sum, fisher_total_qdyne_tail_numeric, MAX_SUM_TERMS,
};

use crate::envelopes::{power_law_value, CorrelationModel, EnvelopeKind};
use crate::error::{domain, invalid, Result};
use serde::{Deserialize, Serialize};

/// Expected photon numbers per readout for the two spin states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutParams {
    pub eta0: f64,
    pub eta1: f64,
}

impl ReadoutParams {
    pub fn new(eta0: f64, eta1: f64) -> Result<Self> {
        if !(eta1 >= 0.0) || !(eta0 > eta1) || !eta0.is_finite() {
            return invalid(format!(
                "readout requires eta0 > eta1 >= 0, got eta0={eta0}, eta1={eta1}"
            ));
        }
        Ok(ReadoutParams { eta0, eta1 })
    }

    /// A readout with no contrast, `η₀ = η₁ = η`. It lies outside the type's
    /// invariant and is meant only for simulated null (no-signal) controls;
    /// every Fisher factor it produces is zero.
    pub fn without_contrast(eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return invalid(format!("photon number must be finite and >= 0, got {eta}"));
        }
        Ok(ReadoutParams { eta0: eta, eta1: eta })
    }

    /// From `η₀` and the relative contrast `χ = (η₀ − η₁)/η₀`.
    pub fn from_contrast(eta0: f64, chi: f64) -> Result<Self> {
        if !(chi > 0.0 && chi <= 1.0) {
            return invalid(format!("relative contrast must lie in (0, 1], got {chi}"));
        }
        ReadoutParams::new(eta0, eta0 * (1.0 - chi))
    }

    /// Mean photon number η.
    pub fn eta(&self) -> f64 {
        0.5 * (self.eta0 + self.eta1)
    }

    /// Absolute contrast c.
    pub fn contrast(&self) -> f64 {
        self.eta0 - self.eta1
    }

    /// Relative contrast χ.
    pub fn chi(&self) -> f64 {
        (self.eta0 - self.eta1) / self.eta0
    }

    /// `c²/(4η + c²)`, the per-readout information factor of CS.
    pub fn cs_factor(&self) -> f64 {
        let c = self.contrast();
        c * c / (4.0 * self.eta() + c * c)
    }

    /// `(c²/(4η + c²))²`, paid by Qdyne for needing two readouts per correlation.
    pub fn qdyne_factor(&self) -> f64 {
        self.cs_factor().powi(2)
    }
}

/// Measurement timing: acquisition τ, overhead τ_o and total experiment time T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTiming {
    pub tau: f64,
    pub tau_o: f64,
    pub total_time: f64,
}

impl ProtocolTiming {
    pub fn new(tau: f64, tau_o: f64, total_time: f64) -> Result<Self> {
        if !(tau > 0.0) || !(tau_o >= 0.0) || !(total_time > 0.0) {
            return invalid(format!(
                "timing requires tau > 0, tau_o >= 0, total_time > 0 (got {tau}, {tau_o}, {total_time})"
            ));
        }
        if !(tau + tau_o + total_time).is_finite() {
            return invalid("timing values must be finite");
        }
        Ok(ProtocolTiming { tau, tau_o, total_time })
    }

    /// Measurement period τ̃ = τ + τ_o.
    pub fn tau_tilde(&self) -> f64 {
        self.tau + self.tau_o
    }

    pub fn with_total_time(mut self, total_time: f64) -> Self {
        self.total_time = total_time;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMethod {
    Quadrature,
    RiemannSum,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    /// Fisher information about δ (s²).
    pub value: f64,
    pub method: FisherMethod,
    pub abs_error_estimate: f64,
}

impl FisherResult {
    pub(crate) fn exact(value: f64, method: FisherMethod) -> Self {
        FisherResult {
            value,
            method,
            abs_error_estimate: 0.0,
        }
    }
}

/// Envelope profile used inside the information integrals.
///
/// `TailOnly` is `C²(z) = (4/√π) z⁻³`, the long-time law with the closed-form
/// prefactors absorbed. It exists only to cross-check the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Profile {
    PowerLaw,
    Exponential,
    TailOnly,
}

impl Profile {
    pub(crate) fn of(kind: EnvelopeKind) -> Self {
        match kind {
            EnvelopeKind::PowerLawDiffusion => Profile::PowerLaw,
            EnvelopeKind::Exponential => Profile::Exponential,
        }
    }

    /// `C²(z)` for `z > 0`.
    #[inline]
    pub(crate) fn c_sq(self, z: f64) -> f64 {
        match self {
            Profile::PowerLaw => {
                let c = power_law_value(z);
                c * c
            }
            Profile::Exponential => (-2.0 * z).exp(),
            Profile::TailOnly => TAIL_WEIGHT / (z * z * z),
        }
    }

    /// `z² C²(z)`, finite at `z = 0` for every profile.
    #[inline]
    pub(crate) fn z2_c_sq(self, z: f64) -> f64 {
        match self {
            Profile::TailOnly => TAIL_WEIGHT / z,
            _ if z == 0.0 => 0.0,
            _ => z * z * self.c_sq(z),
        }
    }
}

/// `4/√π`.
pub(crate) const TAIL_WEIGHT: f64 = 2.0 * std::f64::consts::FRAC_2_SQRT_PI;

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return domain(format!("time must be >= 0, got {t}"));
    }
    Ok(())
}

fn single_core(model: &CorrelationModel, t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let c = model.envelope(t)?;
    let s = (model.delta * t).sin();
    Ok(model.phi_rms.powi(4) * t * t * s * s * c * c)
}

/// Single CS measurement at separation `t`: `c²/(4η+c²) Φ⁴ t² sin²(δt) C²(t/T_D)`.
pub fn fisher_single_cs(model: &CorrelationModel, readout: &ReadoutParams, t: f64) -> Result<f64> {
    Ok(readout.cs_factor() * single_core(model, t)?)
}

/// Single correlated Qdyne pair at separation `t`; the readout factor enters squared.
pub fn fisher_single_qdyne(model: &CorrelationModel, readout: &ReadoutParams, t: f64) -> Result<f64> {
    Ok(readout.qdyne_factor() * single_core(model, t)?)
}

/// Rayleigh criterion: resolvable iff the bound `1/I` is below `δ²/4`.
pub fn rayleigh_resolvable(info: f64, delta: f64) -> bool {
    delta > 0.0 && info > 4.0 / (delta * delta)
}

/// Information needed for the Rayleigh criterion at `delta`.
pub fn rayleigh_threshold_info(delta: f64) -> f64 {
    4.0 / (delta * delta)
}

/// Lowest δ in `[lo, hi]` at which `info(δ)` becomes Rayleigh-resolvable.
///
/// Scans `n_scan` log-spaced points upward and bisects the first crossing.
/// Returns `Ok(None)` when no scanned point is resolvable, `Ok(Some(lo))`
/// when the lower end already is.
pub fn rayleigh_threshold<F>(info: F, lo: f64, hi: f64, n_scan: usize) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo) || n_scan < 2 {
        return invalid("threshold search needs 0 < lo < hi and at least 2 scan points");
    }
    let ok = |d: f64| -> Result<bool> { Ok(rayleigh_resolvable(info(d)?, d)) };
    if ok(lo)? {
        return Ok(Some(lo));
    }
    let ratio = (hi / lo).ln();
    let mut prev = lo;
    for i in 1..n_scan {
        let d = lo * (ratio * i as f64 / (n_scan - 1) as f64).exp();
        if ok(d)? {
            let (mut a, mut b) = (prev, d);
            for _ in 0..60 {
                let m = (a * b).sqrt();
                if ok(m)? {
                    b = m;
                } else {
                    a = m;
                }
                if b / a - 1.0 < 1e-10 {
                    break;
                }
            }
            return Ok(Some(b));
        }
        prev = d;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMethod {
    /// Quadrature of both totals.
    Quadrature,
    /// Closed forms: exact exponential expressions, or the power-law forms.
    ClosedForm,
    /// `(c²/(4η+c²)) ln(δT)/(δ²τ̃²)`.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    /// `I_Qd / I_CS`; `+∞` when `I_CS` underflows.
    pub value: f64,
    pub i_cs: Option<FisherResult>,
    pub i_qd: Option<FisherResult>,
    pub cs_underflow: bool,
}

/// `R_δ = I_Qd / I_CS`.
pub fn ratio_r_delta(
    model: &CorrelationModel,
    readout_cs: &ReadoutParams,
    readout_qd: &ReadoutParams,
    timing_cs: &ProtocolTiming,
    timing_qd: &ProtocolTiming,
    method: RatioMethod,
) -> Result<RatioResult> {
    let (i_cs, i_qd) = match method {
        RatioMethod::Approximate => {
            let delta = model.delta;
            let t = timing_qd.total_time;
            let tt = timing_qd.tau_tilde();
            if !(delta * t > 1.0) {
                return domain(format!("approximate ratio needs δT > 1, got {}", delta * t));
            }
            let value = readout_qd.cs_factor() * (delta * t).ln() / (delta * tt).powi(2);
            return Ok(RatioResult {
                value,
                i_cs: None,
                i_qd: None,
                cs_underflow: false,
            });
        }
        RatioMethod::Quadrature => (
            fisher_total_cs_numeric(model, readout_cs, timing_cs)?,
            fisher_total_qdyne_numeric(model, readout_qd, timing_qd)?,
        ),
        RatioMethod::ClosedForm => match model.kind {
            EnvelopeKind::Exponential => (
                fisher_total_cs_closed_exponential(model, readout_cs, timing_cs)?,
                fisher_total_qdyne_closed_exponential(model, readout_qd, timing_qd)?,
            ),
            EnvelopeKind::PowerLawDiffusion => (
                fisher_total_cs_closed_powerlaw(model, readout_cs, timing_cs, false)?,
                fisher_total_qdyne_closed_powerlaw(model, readout_qd, timing_qd)?,
            ),
        },
    };
    let cs_underflow = !(i_cs.value >= f64::MIN_POSITIVE);
    let value = if cs_underflow {
        f64::INFINITY
    } else {
        i_qd.value / i_cs.value
    };
    Ok(RatioResult {
        value,
        i_cs: Some(i_cs),
        i_qd: Some(i_qd),
        cs_underflow,
    })
}

/// `2/√π`, prefactor of the power-law closed forms.
pub(crate) const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn fig1_model(delta: f64) -> CorrelationModel {
        CorrelationModel::new(1.0, delta, 100e-6, EnvelopeKind::PowerLawDiffusion).unwrap()
    }

    fn fig1_readout() -> ReadoutParams {
        ReadoutParams::new(0.04, 0.03).unwrap()
    }

    #[test]
    fn readout_derived_quantities() {
        let r = fig1_readout();
        assert_relative_eq!(r.eta(), 0.035);
        assert_relative_eq!(r.contrast(), 0.01, max_relative = 1e-12);
        assert_relative_eq!(r.chi(), 0.25, max_relative = 1e-12);
        assert_relative_eq!(r.cs_factor(), 1e-4 / (0.14 + 1e-4), max_relative = 1e-12);
        assert!(ReadoutParams::new(0.03, 0.04).is_err());
        assert!(ReadoutParams::new(0.04, -0.01).is_err());
        let from_chi = ReadoutParams::from_contrast(0.04, 0.25).unwrap();
        assert_relative_eq!(from_chi.eta1, 0.03, max_relative = 1e-12);
    }

    #[test]
    fn single_measurement_zeros() {
        let r = fig1_readout();
        assert_eq!(fisher_single_cs(&fig1_model(600.0), &r, 0.0).unwrap(), 0.0);
        assert_eq!(fisher_single_cs(&fig1_model(0.0), &r, 3e-4).unwrap(), 0.0);
        assert_eq!(fisher_single_qdyne(&fig1_model(600.0), &r, 0.0).unwrap(), 0.0);
        assert!(fisher_single_cs(&fig1_model(600.0), &r, -1.0).is_err());
    }

    #[test]
    fn single_cs_at_diffusion_time() {
        // C(1) from the 60-digit oracle.
        let c1 = 0.214_312_259_321_755_88;
        let delta = 2.0 * PI * 1500.0;
        let m = fig1_model(delta);
        let r = fig1_readout();
        let want = r.cs_factor() * 1e-8 * (delta * 1e-4).sin().powi(2) * c1 * c1;
        assert_relative_eq!(fisher_single_cs(&m, &r, 1e-4).unwrap(), want, max_relative = 1e-10);
    }

    #[test]
    fn qdyne_over_cs_is_readout_factor() {
        let r = fig1_readout();
        for (delta, t) in [(100.0, 1e-5), (2e3, 3e-4), (7e4, 1e-2)] {
            let m = fig1_model(delta);
            let cs = fisher_single_cs(&m, &r, t).unwrap();
            let qd = fisher_single_qdyne(&m, &r, t).unwrap();
            assert_relative_eq!(qd, cs * r.cs_factor(), max_relative = 1e-14);
        }
        let tiny = ReadoutParams { eta0: 0.04, eta1: 0.04 };
        assert_eq!(fisher_single_qdyne(&fig1_model(600.0), &tiny, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn rayleigh_boundary() {
        let delta = 2.0 * PI * 100.0;
        let thr = 4.0 / (delta * delta);
        assert_relative_eq!(thr, 1.013_211_836_423_377_7e-5, max_relative = 1e-12);
        assert!(!rayleigh_resolvable(0.0, delta));
        assert!(!rayleigh_resolvable(thr, delta));
        assert!(rayleigh_resolvable(thr * (1.0 + 1e-12), delta));
    }

    #[test]
    fn threshold_search_brackets_crossing() {
        // info = δ²·k crosses 4/δ² at δ = (4/k)^{1/4}
        let k = 1e-3;
        let thr = rayleigh_threshold(|d| Ok(k * d * d), 1.0, 1e4, 50).unwrap().unwrap();
        assert_relative_eq!(thr, (4.0 / k).powf(0.25), max_relative = 1e-8);
        assert_eq!(rayleigh_threshold(|_| Ok(0.0), 1.0, 10.0, 5).unwrap(), None);
    }

    #[test]
    fn equal_eta_and_c_give_equal_information() {
        let a = ReadoutParams::new(0.05, 0.01).unwrap();
        let b = ReadoutParams { eta0: 0.05, eta1: 0.01 };
        let m = fig1_model(700.0);
        assert_eq!(
            fisher_single_cs(&m, &a, 2e-4).unwrap(),
            fisher_single_cs(&m, &b, 2e-4).unwrap()
        );
    }
}
