//! Quadrature and brute-force sums for the total informations.

use std::sync::OnceLock;

use num_complex::Complex64;

use super::{FisherMethod, FisherResult, Profile, ProtocolTiming, ReadoutParams, TAIL_WEIGHT};
use crate::envelopes::{CorrelationModel, LARGE_Z_COEFFS};
use crate::error::{finite, Error, Result};
use crate::quad::{integrate, QuadEstimate, QuadOptions};

/// Largest number of terms a brute-force sum may take.
pub const MAX_SUM_TERMS: f64 = 1e7;

const REL_TOL: f64 = 1e-11;
/// Below `z = EXP_CUTOFF` the exponential weight `e^{-2z}` is kept; beyond it is < 1e-34.
const EXP_CUTOFF: f64 = 40.0;
/// The oscillatory tail is integrated by parts once `ωz` exceeds this.
const TAIL_OMEGA_Z: f64 = 40.0;
const POWER_LAW_TAIL_START: f64 = 50.0;
const MAX_IBP_TERMS: usize = 80;

fn opts(a: f64) -> QuadOptions {
    QuadOptions {
        rel_tol: REL_TOL,
        max_panel: if a > 0.0 {
            std::f64::consts::PI / a
        } else {
            f64::INFINITY
        },
        ..QuadOptions::default()
    }
}

/// Integrate over `[0, upper]` split at 1, 10, 100, … so the envelope's
/// structure near `z ~ 1` is resolved even when panels are wide.
fn integrate_decades<F: Fn(f64) -> f64>(f: F, upper: f64, opts: QuadOptions) -> Result<QuadEstimate> {
    let mut total = QuadEstimate {
        value: 0.0,
        abs_error: 0.0,
        n_intervals: 0,
    };
    let mut lo = 0.0;
    let mut hi = 1.0_f64.min(upper);
    while lo < upper {
        let part = integrate(&f, lo, hi, opts)?;
        total.value += part.value;
        total.abs_error += part.abs_error;
        total.n_intervals += part.n_intervals;
        lo = hi;
        hi = (hi * 10.0).min(upper);
    }
    Ok(total)
}

/// `∫₀¹ z² sin²(a z) C²(z) dz`.
pub(crate) fn cs_integral(profile: Profile, a: f64) -> Result<QuadEstimate> {
    integrate(
        |z| {
            let s = (a * z).sin();
            s * s * profile.z2_c_sq(z)
        },
        0.0,
        1.0,
        opts(a),
    )
}

/// `∫₀ᴸ (L − z) z² sin²(a z) C²(z) dz`.
pub(crate) fn qdyne_integral(profile: Profile, a: f64, l: f64) -> Result<QuadEstimate> {
    let integrand = |z: f64| {
        let s = (a * z).sin();
        (l - z) * s * s * profile.z2_c_sq(z)
    };
    let o = opts(a);
    match profile {
        Profile::Exponential => integrate_decades(integrand, l.min(EXP_CUTOFF), o),
        Profile::PowerLaw | Profile::TailOnly => {
            let z_min = if profile == Profile::PowerLaw {
                POWER_LAW_TAIL_START
            } else {
                1.0
            };
            let split = z_min.max(TAIL_OMEGA_Z / (2.0 * a));
            if l <= split {
                return integrate_decades(integrand, l, o);
            }
            let head = integrate_decades(integrand, split, o)?;
            let tail = oscillatory_tail(tail_series(profile), 2.0 * a, split, l)?;
            Ok(QuadEstimate {
                value: head.value + tail.value,
                abs_error: head.abs_error + tail.abs_error,
                n_intervals: head.n_intervals,
            })
        }
    }
}

/// `h(z) = z² C²(z)` as `Σ d · z^p`.
fn tail_series(profile: Profile) -> &'static [(f64, f64)] {
    static POWER_LAW: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static TAIL: [(f64, f64); 1] = [(TAIL_WEIGHT, -1.0)];
    match profile {
        Profile::TailOnly => &TAIL,
        _ => POWER_LAW.get_or_init(|| {
            // C = Σ_{m≥3} c_m z^{-m/2}, so C² = Σ_{n≥6} d_n z^{-n/2}.
            let n_c = LARGE_Z_COEFFS.len();
            let mut d = vec![0.0; 2 * n_c - 1];
            for (i, ci) in LARGE_Z_COEFFS.iter().enumerate() {
                for (j, cj) in LARGE_Z_COEFFS.iter().enumerate() {
                    d[i + j] += ci * cj;
                }
            }
            d.iter()
                .enumerate()
                .map(|(k, &dk)| (dk, 2.0 - (k as f64 + 6.0) / 2.0))
                .collect()
        }),
    }
}

/// `∫_Z^L z^p dz`.
fn power_integral(p: f64, z0: f64, l: f64) -> f64 {
    if p == -1.0 {
        (l / z0).ln()
    } else {
        (l.powf(p + 1.0) - z0.powf(p + 1.0)) / (p + 1.0)
    }
}

/// Derivatives `h^{(k)}(z)` for `k = 0..n`.
fn derivatives(series: &[(f64, f64)], z: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for &(d, p) in series {
        let mut term = d * z.powf(p);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot += term;
            term *= (p - k as f64) / z;
        }
    }
    out
}

/// `∫_Z^L (L − z) sin²(ωz/2) h(z) dz` for the series `h`, split as
/// `½∫(L − z)h − ½ Re ∫(L − z)h e^{iωz}`; the second half by repeated
/// integration by parts, truncated at its smallest term.
fn oscillatory_tail(series: &[(f64, f64)], omega: f64, z0: f64, l: f64) -> Result<QuadEstimate> {
    let smooth: f64 = series
        .iter()
        .map(|&(d, p)| d * (l * power_integral(p, z0, l) - power_integral(p + 1.0, z0, l)))
        .sum();

    let hz = derivatives(series, z0, MAX_IBP_TERMS + 1);
    let hl = derivatives(series, l, MAX_IBP_TERMS + 1);
    let ez = Complex64::from_polar(1.0, (omega * z0) % std::f64::consts::TAU);
    let el = Complex64::from_polar(1.0, (omega * l) % std::f64::consts::TAU);
    let i_omega = Complex64::new(0.0, omega);

    let mut osc = Complex64::new(0.0, 0.0);
    let mut denom = i_omega;
    let mut last = f64::INFINITY;
    let mut converged = false;
    for k in 0..MAX_IBP_TERMS {
        let prev_h = |h: &[f64]| if k == 0 { 0.0 } else { k as f64 * h[k - 1] };
        let gz = (l - z0) * hz[k] - prev_h(&hz);
        let gl = -prev_h(&hl);
        let term = (el * gl - ez * gz) / denom;
        let size = term.norm();
        if size > last {
            break;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        osc += sign * term;
        last = size;
        if size <= 1e-17 * osc.norm().max(smooth.abs()) {
            converged = true;
            break;
        }
        denom *= i_omega;
    }
    let value = finite(0.5 * smooth - 0.5 * osc.re, "oscillatory tail")?;
    let abs_error = if converged { 0.0 } else { last };
    if !converged && abs_error > 1e-8 * value.abs() {
        return Err(Error::Quadrature {
            value,
            achieved: abs_error,
            requested: 1e-8 * value.abs(),
        });
    }
    Ok(QuadEstimate {
        value,
        abs_error,
        n_intervals: 0,
    })
}

fn check_total_time(model: &CorrelationModel, timing: &ProtocolTiming) {
    if timing.total_time < 10.0 * model.t_d {
        log::warn!(
            "total time {} s is not much longer than T_D = {} s",
            timing.total_time,
            model.t_d
        );
    }
}

fn quad_result(scale: f64, est: QuadEstimate) -> Result<FisherResult> {
    Ok(FisherResult {
        value: finite(scale * est.value, "fisher total")?.max(0.0),
        method: FisherMethod::Quadrature,
        abs_error_estimate: scale * est.abs_error,
    })
}

pub(crate) fn cs_total_numeric(
    profile: Profile,
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    if model.delta == 0.0 {
        return Ok(FisherResult::exact(0.0, FisherMethod::Quadrature));
    }
    check_total_time(model, timing);
    let scale = readout.cs_factor() * model.phi_rms.powi(4) * model.t_d * timing.total_time;
    quad_result(scale, cs_integral(profile, model.delta * model.t_d)?)
}

pub(crate) fn qdyne_total_numeric(
    profile: Profile,
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    if model.delta == 0.0 {
        return Ok(FisherResult::exact(0.0, FisherMethod::Quadrature));
    }
    let tt = timing.tau_tilde();
    if tt >= model.t_d {
        log::warn!("measurement period {tt} s is not shorter than T_D = {} s", model.t_d);
    }
    let scale = readout.qdyne_factor() * model.phi_rms.powi(4) * model.t_d.powi(4) / (tt * tt);
    let est = qdyne_integral(profile, model.delta * model.t_d, timing.total_time / model.t_d)?;
    quad_result(scale, est)
}

/// CS total by adaptive quadrature of the normalized integral over one diffusion time.
pub fn fisher_total_cs_numeric(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    cs_total_numeric(Profile::of(model.kind), model, readout, timing)
}

/// Qdyne total by adaptive quadrature with panels no wider than `π/(δT_D)`.
pub fn fisher_total_qdyne_numeric(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    qdyne_total_numeric(Profile::of(model.kind), model, readout, timing)
}

/// CS quadrature with the tail-only envelope `C²(z) = (4/√π) z⁻³`.
///
/// For cross-checking the power-law closed forms; `model.kind` is ignored.
pub fn fisher_total_cs_tail_numeric(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    cs_total_numeric(Profile::TailOnly, model, readout, timing)
}

/// Qdyne quadrature with the tail-only envelope; `model.kind` is ignored.
pub fn fisher_total_qdyne_tail_numeric(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    qdyne_total_numeric(Profile::TailOnly, model, readout, timing)
}

fn guard_terms(n: f64, what: &str) -> Result<usize> {
    if !(n <= MAX_SUM_TERMS) {
        return Err(Error::CostGuard(format!(
            "{what} needs {n:e} terms, limit is {MAX_SUM_TERMS:e}"
        )));
    }
    Ok(n as usize)
}

/// CS total as a Riemann sum over `⌊T/T_D⌋ + 1` uniformly spaced delays in `[0, T_D]`.
pub fn fisher_total_cs_sum(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    let profile = Profile::of(model.kind);
    let r = timing.total_time / model.t_d;
    let n = guard_terms(r.floor(), "CS sum")?;
    let a = model.delta * model.t_d;
    let mut acc = 0.0;
    for j in 1..=n {
        let t = j as f64 / r;
        let s = (a * t).sin();
        acc += s * s * profile.z2_c_sq(t);
    }
    let scale = readout.cs_factor() * model.phi_rms.powi(4) * model.t_d * model.t_d;
    Ok(FisherResult::exact(
        finite(scale * acc, "CS sum")?,
        FisherMethod::RiemannSum,
    ))
}

/// Qdyne total as the pair sum `Σ_j (T/τ̃ − j)(jτ̃)² sin²(δjτ̃) C²(jτ̃/T_D)`.
pub fn fisher_total_qdyne_sum(
    model: &CorrelationModel,
    readout: &ReadoutParams,
    timing: &ProtocolTiming,
) -> Result<FisherResult> {
    model.validate()?;
    let profile = Profile::of(model.kind);
    let tt = timing.tau_tilde();
    let m = timing.total_time / tt;
    let n = guard_terms(m.floor(), "Qdyne sum")?;
    let mut acc = 0.0;
    for j in 1..=n {
        let t = j as f64 * tt;
        let s = (model.delta * t).sin();
        let z = t / model.t_d;
        acc += (m - j as f64) * s * s * model.t_d * model.t_d * profile.z2_c_sq(z);
    }
    let scale = readout.qdyne_factor() * model.phi_rms.powi(4);
    Ok(FisherResult::exact(
        finite(scale * acc, "Qdyne sum")?,
        FisherMethod::RiemannSum,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::EnvelopeKind;
    use crate::special::cin;
    use approx::assert_relative_eq;

    #[test]
    fn tail_only_cs_integral_is_cin() {
        for a in [0.01, 0.3, 1.0, 5.0, 40.0] {
            let q = cs_integral(Profile::TailOnly, a).unwrap();
            assert_relative_eq!(q.value, 0.5 * TAIL_WEIGHT * cin(2.0 * a), max_relative = 1e-10);
        }
    }

    #[test]
    fn tail_only_qdyne_integral_is_exact() {
        for (a, l) in [(0.05, 2e4), (0.5, 1e3), (2.0, 1e6), (1e-3, 1e5), (0.05, 10.0)] {
            let exact = TAIL_WEIGHT * (0.5 * l * (cin(2.0 * a * l) - 1.0) + (2.0 * a * l).sin() / (4.0 * a));
            let q = qdyne_integral(Profile::TailOnly, a, l).unwrap();
            assert_relative_eq!(q.value, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn power_law_tail_split_is_seamless() {
        // Splitting at the series boundary vs plain quadrature over the whole range.
        let (a, l) = (0.4, 3000.0);
        let split = qdyne_integral(Profile::PowerLaw, a, l).unwrap();
        let f = |z: f64| {
            let s = (a * z).sin();
            (l - z) * s * s * Profile::PowerLaw.z2_c_sq(z)
        };
        let direct = integrate_decades(f, l, opts(a)).unwrap();
        assert_relative_eq!(split.value, direct.value, max_relative = 1e-9);
    }

    #[test]
    fn tail_series_matches_envelope() {
        let series = tail_series(Profile::PowerLaw);
        for z in [60.0f64, 200.0, 1e4] {
            let h: f64 = series.iter().map(|&(d, p)| d * z.powf(p)).sum();
            assert_relative_eq!(h, Profile::PowerLaw.z2_c_sq(z), max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_delta_totals_vanish() {
        let m = CorrelationModel::new(1.0, 0.0, 1e-4, EnvelopeKind::PowerLawDiffusion).unwrap();
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let t = ProtocolTiming::new(20e-6, 5e-6, 3600.0).unwrap();
        assert_eq!(fisher_total_cs_numeric(&m, &r, &t).unwrap().value, 0.0);
        assert_eq!(fisher_total_qdyne_numeric(&m, &r, &t).unwrap().value, 0.0);
        assert_eq!(fisher_total_cs_sum(&m, &r, &t.with_total_time(1.0)).unwrap().value, 0.0);
    }

    #[test]
    fn sums_guard_cost_and_handle_empty_range() {
        let m = CorrelationModel::new(1.0, 1e3, 1e-4, EnvelopeKind::Exponential).unwrap();
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let huge = ProtocolTiming::new(20e-6, 5e-6, 1e6).unwrap();
        assert!(matches!(fisher_total_cs_sum(&m, &r, &huge), Err(Error::CostGuard(_))));
        assert!(matches!(
            fisher_total_qdyne_sum(&m, &r, &huge),
            Err(Error::CostGuard(_))
        ));
        let short = ProtocolTiming::new(20e-6, 5e-6, 10e-6).unwrap();
        assert_eq!(fisher_total_qdyne_sum(&m, &r, &short).unwrap().value, 0.0);
    }

    #[test]
    fn qdyne_sum_last_term_has_zero_weight() {
        // T = 4τ̃: the j = 4 term must not contribute.
        let m = CorrelationModel::new(1.0, 2e3, 1e-4, EnvelopeKind::Exponential).unwrap();
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let t4 = ProtocolTiming::new(20e-6, 5e-6, 100e-6).unwrap();
        let t3 = t4.with_total_time(75e-6 + 1e-12);
        let s4 = fisher_total_qdyne_sum(&m, &r, &t4).unwrap().value;
        // recompute by hand with weights (4 − j), j = 1..3
        let mut want = 0.0;
        for j in 1..=3 {
            let t = j as f64 * 25e-6;
            want += (4.0 - j as f64) * t * t * (2e3 * t).sin().powi(2) * (-2.0 * t / 1e-4).exp();
        }
        assert_relative_eq!(s4, r.qdyne_factor() * want, max_relative = 1e-12);
        assert!(fisher_total_qdyne_sum(&m, &r, &t3).unwrap().value < s4);
    }
}
