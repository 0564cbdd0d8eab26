//! Experimental-design calculators: undersampling, SNR, DD duration,
//! readout window, depth / field conversion and drift compensation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::envelopes::EnvelopeKind;
use crate::error::{domain, invalid, Error, Result};
use crate::fisher::ReadoutParams;

/// NV electron gyromagnetic ratio (rad s⁻¹ T⁻¹).
pub const GAMMA_E: f64 = 1.760_859_630_23e11;
/// Proton gyromagnetic ratio (rad s⁻¹ T⁻¹).
pub const GAMMA_H: f64 = 2.68e8;
/// Proton gyromagnetic ratio in ordinary frequency units (Hz/T).
pub const GAMMA_H_HZ_PER_T: f64 = 42.6e6;
pub const MU_0: f64 = 1.256_637_062_12e-6;
pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPhysics {
    /// γ_e (rad s⁻¹ T⁻¹); couples the field to the sensor phase.
    pub gamma_sensor: f64,
    /// γ_n (rad s⁻¹ T⁻¹).
    pub gamma_nuclear: f64,
    /// Sensor coherence time (s); `f64::INFINITY` disables decoherence.
    pub t2: f64,
    pub depth: Option<f64>,
    pub spin_density: Option<f64>,
    pub b_rms: Option<f64>,
}

impl Default for SensorPhysics {
    fn default() -> Self {
        SensorPhysics {
            gamma_sensor: GAMMA_E,
            gamma_nuclear: GAMMA_H,
            t2: f64::INFINITY,
            depth: None,
            spin_density: None,
            b_rms: None,
        }
    }
}

impl SensorPhysics {
    /// Field rms, taken as given or derived from depth and spin density.
    ///
    /// When all three are set they must agree within 1%.
    pub fn b_rms(&self) -> Result<f64> {
        let derived = match (self.depth, self.spin_density) {
            (Some(d), Some(rho)) => Some(brms_from_depth(d, rho, self)?),
            _ => None,
        };
        match (self.b_rms, derived) {
            (Some(b), Some(bd)) => {
                if (b - bd).abs() > 0.01 * bd {
                    return invalid(format!("b_rms {b:e} T is inconsistent with depth (gives {bd:e} T)"));
                }
                Ok(b)
            }
            (Some(b), None) => positive(b, "b_rms"),
            (None, Some(bd)) => Ok(bd),
            (None, None) => invalid("need b_rms, or depth together with spin_density"),
        }
    }

    /// Copy with decoherence removed.
    pub fn without_decoherence(mut self) -> Self {
        self.t2 = f64::INFINITY;
        self
    }
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return domain(format!("{what} must be positive, got {x}"));
    }
    Ok(x)
}

/// `t_s,min = 1/(f_L − f_δ)`.
pub fn undersample_min_step(f_larmor: f64, f_target: f64) -> Result<f64> {
    positive(f_larmor, "Larmor frequency")?;
    if !(f_target >= 0.0) || f_target >= f_larmor {
        return domain(format!("need 0 <= f_target < f_larmor, got {f_target} and {f_larmor}"));
    }
    Ok(1.0 / (f_larmor - f_target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Undersampling {
    /// Sampling period `k · t_s,min` (s).
    pub t_s: f64,
    pub k: u64,
    pub t_min: f64,
}

/// Sampling period giving roughly `n_samples` points per period of `f_target`.
pub fn undersample_step(f_larmor: f64, f_target: f64, n_samples: u64) -> Result<Undersampling> {
    if n_samples < 2 {
        return invalid("undersampling needs at least 2 samples per period");
    }
    let t_min = undersample_min_step(f_larmor, f_target)?;
    positive(f_target, "target frequency")?;
    let ratio = (1.0 / f_target) / t_min;
    let k = (ratio / (n_samples - 1) as f64).round().max(1.0) as u64;
    Ok(Undersampling {
        t_s: k as f64 * t_min,
        k,
        t_min,
    })
}

/// Shot-noise SNR `√N (η₀ − η₁)/√(η₀ + η₁)`.
pub fn snr_shot_noise(readout: &ReadoutParams, n_measurements: u64) -> f64 {
    (n_measurements as f64).sqrt() * readout.contrast() / (readout.eta0 + readout.eta1).sqrt()
}

/// The same SNR from `η₀` and `χ`: `√N χ√η₀/√(2 − χ)`.
pub fn snr_shot_noise_chi(eta0: f64, chi: f64, n_measurements: u64) -> f64 {
    (n_measurements as f64).sqrt() * chi * eta0.sqrt() / (2.0 - chi).sqrt()
}

/// `Φrms = (2/π) γ_e B_rms τ`.
pub fn phi_rms_from(tau: f64, physics: &SensorPhysics) -> Result<f64> {
    if !(tau >= 0.0) {
        return domain(format!("tau must be >= 0, got {tau}"));
    }
    Ok(2.0 / PI * physics.gamma_sensor * physics.b_rms()? * tau)
}

fn dipolar_constant(spin_density: f64, physics: &SensorPhysics) -> f64 {
    let k = MU_0 * HBAR * physics.gamma_nuclear / (4.0 * PI);
    spin_density * k * k * 5.0 * PI / 96.0
}

/// `B²rms = ρ (μ₀ħγ_n/4π)² · 5π/(96 d³)`.
pub fn brms_from_depth(depth: f64, spin_density: f64, physics: &SensorPhysics) -> Result<f64> {
    positive(depth, "depth")?;
    positive(spin_density, "spin density")?;
    Ok((dipolar_constant(spin_density, physics) / depth.powi(3)).sqrt())
}

/// Inverse of [`brms_from_depth`].
pub fn depth_from_brms(b_rms: f64, spin_density: f64, physics: &SensorPhysics) -> Result<f64> {
    positive(b_rms, "b_rms")?;
    positive(spin_density, "spin density")?;
    Ok((dipolar_constant(spin_density, physics) / (b_rms * b_rms)).cbrt())
}

/// Qdyne contrast `(c/8) e^{-2τ/T₂} C(τ/T_D) (1 − e^{-2Φ²rms})`.
///
/// `t_d = ∞` gives `C ≡ 1`.
pub fn qdyne_signal(
    tau: f64,
    physics: &SensorPhysics,
    readout: &ReadoutParams,
    envelope: EnvelopeKind,
    t_d: f64,
) -> Result<f64> {
    positive(tau, "tau")?;
    if !(t_d > 0.0) {
        return domain(format!("t_d must be positive, got {t_d}"));
    }
    let phi = phi_rms_from(tau, physics)?;
    let decay = (-2.0 * tau / physics.t2).exp();
    let c = envelope.eval(tau / t_d)?;
    Ok(readout.contrast() / 8.0 * decay * c * -(-2.0 * phi * phi).exp_m1())
}

/// `qdyne_signal(τ) / √(τ_o + τ)`.
pub fn qdyne_snr_rate(
    tau: f64,
    tau_o: f64,
    physics: &SensorPhysics,
    readout: &ReadoutParams,
    envelope: EnvelopeKind,
    t_d: f64,
) -> Result<f64> {
    if !(tau_o >= 0.0) {
        return domain(format!("tau_o must be >= 0, got {tau_o}"));
    }
    Ok(qdyne_signal(tau, physics, readout, envelope, t_d)? / (tau_o + tau).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauObjective {
    Signal,
    SnrRate { tau_o: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    /// The maximizer sits on a bound of the search range.
    pub at_boundary: bool,
}

const SCAN_POINTS: usize = 200;

/// Maximize `f` on `[lo, hi]`: log-spaced scan, then golden section in `ln x`
/// around the best scan point to relative tolerance `rel_tol`.
pub fn maximize_log<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return invalid(format!("need 0 < lo < hi, got [{lo}, {hi}]"));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| llo + (lhi - llo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &u) in grid.iter().enumerate() {
        let v = f(u.exp())?;
        if v.is_nan() {
            return Err(Error::NonFinite("maximize objective"));
        }
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let at_edge = |i: usize| i == 0 || i == SCAN_POINTS - 1;
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(SCAN_POINTS - 1)]);
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let tol = rel_tol.max(1e-15);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c.exp())?, f(d.exp())?);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp())?;
        }
    }
    let u = 0.5 * (a + b);
    let (x, value) = {
        let fu = f(u.exp())?;
        if fu >= best_val {
            (u.exp(), fu)
        } else {
            (grid[best].exp(), best_val)
        }
    };
    let at_boundary = at_edge(best) && {
        let edge = if best == 0 { lo } else { hi };
        ((x - edge) / edge).abs() < 10.0 * tol
    };
    Ok(Maximum { x, value, at_boundary })
}

/// Optimal DD duration τ* for `objective` within `bounds`.
pub fn optimize_tau(
    objective: TauObjective,
    physics: &SensorPhysics,
    readout: &ReadoutParams,
    envelope: EnvelopeKind,
    t_d: f64,
    bounds: (f64, f64),
) -> Result<Maximum> {
    physics.b_rms()?;
    let m = maximize_log(
        |tau| match objective {
            TauObjective::Signal => qdyne_signal(tau, physics, readout, envelope, t_d),
            TauObjective::SnrRate { tau_o } => qdyne_snr_rate(tau, tau_o, physics, readout, envelope, t_d),
        },
        bounds.0,
        bounds.1,
        1e-6,
    )?;
    if m.at_boundary {
        log::warn!("optimal tau {} s lies on the search bound", m.x);
    }
    Ok(m)
}

/// Cumulative expected photons per readout versus window end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutTrace {
    pub time_axis: Vec<f64>,
    pub counts0: Vec<f64>,
    pub counts1: Vec<f64>,
}

impl ReadoutTrace {
    pub fn new(time_axis: Vec<f64>, counts0: Vec<f64>, counts1: Vec<f64>) -> Result<Self> {
        if time_axis.is_empty() || time_axis.len() != counts0.len() || time_axis.len() != counts1.len() {
            return invalid("readout trace columns must be nonempty and of equal length");
        }
        if time_axis.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("readout time axis must be strictly increasing");
        }
        if counts0.iter().chain(&counts1).any(|c| !c.is_finite()) {
            return invalid("readout counts must be finite");
        }
        let decreasing = |c: &[f64]| c.windows(2).any(|w| w[1] < w[0]);
        if decreasing(&counts0) || decreasing(&counts1) {
            log::warn!("readout counts are not nondecreasing in the window end");
        }
        Ok(ReadoutTrace {
            time_axis,
            counts0,
            counts1,
        })
    }

    /// Parse CSV with header `t_ns,counts0,counts1`; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty readout trace".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header != ["t_ns", "counts0", "counts1"] {
            return invalid(format!("readout header must be t_ns,counts0,counts1, got {header:?}"));
        }
        let (mut t, mut c0, mut c1) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Invalid(format!("readout row {}: {e}", i + 1)))?;
            if fields.len() != 3 {
                return invalid(format!("readout row {} has {} fields", i + 1, fields.len()));
            }
            t.push(fields[0] / 1e9);
            c0.push(fields[1]);
            c1.push(fields[2]);
        }
        ReadoutTrace::new(t, c0, c1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    /// Window end maximizing `c/√(2η)` (s).
    pub t_snr: f64,
    /// Window end maximizing `c²/(4η + c²)` (s).
    pub t_fisher: f64,
    pub snr_curve: Vec<f64>,
    pub fisher_curve: Vec<f64>,
    /// No window has positive contrast.
    pub degenerate: bool,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Choose the readout window end on the trace's own grid.
pub fn readout_window_optimize(trace: &ReadoutTrace) -> Result<ReadoutWindow> {
    if trace.counts0.iter().chain(&trace.counts1).all(|&c| c == 0.0) {
        return invalid("readout trace is all zero");
    }
    let mut snr = Vec::with_capacity(trace.time_axis.len());
    let mut fisher = Vec::with_capacity(trace.time_axis.len());
    for (&n0, &n1) in trace.counts0.iter().zip(&trace.counts1) {
        let c = n0 - n1;
        let eta = 0.5 * (n0 + n1);
        if eta > 0.0 {
            snr.push(c / (2.0 * eta).sqrt());
            fisher.push(c * c / (4.0 * eta + c * c));
        } else {
            snr.push(0.0);
            fisher.push(0.0);
        }
    }
    let degenerate = !snr.iter().any(|&s| s > 0.0);
    Ok(ReadoutWindow {
        t_snr: trace.time_axis[argmax(&snr)],
        t_fisher: trace.time_axis[argmax(&fisher)],
        snr_curve: snr,
        fisher_curve: fisher,
        degenerate,
    })
}

/// Sample-rate change keeping `f_samp/f_L` fixed: `f_samp · Δf_L / f_L`.
pub fn sample_rate_compensation(f_larmor: f64, delta_f_larmor: f64, f_sample: f64) -> Result<f64> {
    positive(f_larmor, "Larmor frequency")?;
    Ok(f_sample * delta_f_larmor / f_larmor)
}

/// Larmor shift (Hz) from a field change (T) at gyromagnetic ratio `gamma_hz_per_t`.
pub fn larmor_shift(delta_b: f64, gamma_hz_per_t: f64) -> f64 {
    gamma_hz_per_t * delta_b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn physics_8nm() -> SensorPhysics {
        SensorPhysics {
            t2: 500e-6,
            depth: Some(8e-9),
            spin_density: Some(6.0e28),
            ..SensorPhysics::default()
        }
    }

    #[test]
    fn undersampling_examples() {
        let t = undersample_min_step(2e6, 2e3).unwrap();
        assert_relative_eq!(t, 1.0 / 1.998e6, max_relative = 1e-15);
        assert_relative_eq!(t, 500.5005e-9, max_relative = 1e-7);
        assert_eq!(undersample_min_step(2e6, 0.0).unwrap(), 1.0 / 2e6);
        assert_eq!(undersample_min_step(1.0, 0.5).unwrap(), 2.0);
        assert!(undersample_min_step(1.0, 1.0).is_err());

        let u = undersample_step(2e6, 2e3, 10).unwrap();
        assert_eq!(u.k, 111);
        assert_eq!(u.t_s, 111.0 * u.t_min);
        assert_relative_eq!(u.t_s, 55.556e-6, max_relative = 1e-5);
        assert_eq!(undersample_step(2e6, 2e3, 2).unwrap().k, 999);
        // ratio below one half still yields k = 1
        assert_eq!(undersample_step(2e6, 1.5e6, 10).unwrap().k, 1);
        assert!(undersample_step(2e6, 2e3, 1).is_err());
    }

    #[test]
    fn snr_examples() {
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        assert_relative_eq!(snr_shot_noise(&r, 1), 0.01 / 0.07f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(snr_shot_noise(&r, 1), 0.0378, max_relative = 1e-3);
        assert_eq!(snr_shot_noise(&r, 4), 2.0 * snr_shot_noise(&r, 1));
        assert_relative_eq!(
            snr_shot_noise_chi(0.04, r.chi(), 7),
            snr_shot_noise(&r, 7),
            max_relative = 1e-12
        );
    }

    #[test]
    fn depth_relation() {
        let p = SensorPhysics::default();
        let b1 = brms_from_depth(8e-9, 6e28, &p).unwrap();
        let b2 = brms_from_depth(16e-9, 6e28, &p).unwrap();
        assert_relative_eq!(b2 / b1, 2f64.powf(-1.5), max_relative = 1e-14);
        assert_relative_eq!(depth_from_brms(b1, 6e28, &p).unwrap(), 8e-9, max_relative = 1e-12);
        assert!(brms_from_depth(0.0, 6e28, &p).is_err());
        assert_eq!(GAMMA_H, 2.68e8);
        let inconsistent = SensorPhysics {
            b_rms: Some(2.0 * b1),
            ..physics_8nm()
        };
        assert!(inconsistent.b_rms().is_err());
    }

    #[test]
    fn signal_limits() {
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let p = physics_8nm();
        assert!(qdyne_signal(1e-12, &p, &r, EnvelopeKind::PowerLawDiffusion, 1e-4).unwrap() < 1e-12);
        let free = p.without_decoherence();
        let sat = qdyne_signal(1.0, &free, &r, EnvelopeKind::PowerLawDiffusion, f64::INFINITY).unwrap();
        assert_relative_eq!(sat, r.contrast() / 8.0, max_relative = 1e-12);
        let r2 = ReadoutParams::new(0.06, 0.04).unwrap();
        let s1 = qdyne_snr_rate(20e-6, 3.5e-6, &p, &r, EnvelopeKind::PowerLawDiffusion, 1e-4).unwrap();
        let s2 = qdyne_snr_rate(20e-6, 3.5e-6, &p, &r2, EnvelopeKind::PowerLawDiffusion, 1e-4).unwrap();
        assert_relative_eq!(s2, 2.0 * s1, max_relative = 1e-14);
    }

    #[test]
    fn maximizer_recovers_analytic_peak() {
        let m = maximize_log(|t| Ok(t * (-t).exp()), 1e-3, 1e3, 1e-8).unwrap();
        assert_relative_eq!(m.x, 1.0, max_relative = 1e-4);
        assert!(!m.at_boundary);
        let edge = maximize_log(Ok, 1.0, 2.0, 1e-8).unwrap();
        assert!(edge.at_boundary);
        assert_relative_eq!(edge.x, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn decoherence_free_optimum_has_unit_phase() {
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let p = physics_8nm().without_decoherence();
        let m = optimize_tau(
            TauObjective::SnrRate { tau_o: 0.0 },
            &p,
            &r,
            EnvelopeKind::PowerLawDiffusion,
            f64::INFINITY,
            (1e-7, 1e-3),
        )
        .unwrap();
        let phi = phi_rms_from(m.x, &p).unwrap();
        assert!((0.5..=1.5).contains(&phi), "phi = {phi}");
    }

    #[test]
    fn decoherence_shortens_optimal_tau() {
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let p = physics_8nm();
        let obj = TauObjective::SnrRate { tau_o: 3.5e-6 };
        let full = optimize_tau(obj, &p, &r, EnvelopeKind::PowerLawDiffusion, 100e-6, (1e-7, 1e-3)).unwrap();
        let free = optimize_tau(
            obj,
            &p.without_decoherence(),
            &r,
            EnvelopeKind::PowerLawDiffusion,
            f64::INFINITY,
            (1e-7, 1e-3),
        )
        .unwrap();
        assert!(!full.at_boundary && !free.at_boundary);
        assert!(full.x < free.x);
        let sig = optimize_tau(
            TauObjective::Signal,
            &p,
            &r,
            EnvelopeKind::PowerLawDiffusion,
            100e-6,
            (1e-7, 1e-3),
        )
        .unwrap();
        let sig_free = optimize_tau(
            TauObjective::Signal,
            &p.without_decoherence(),
            &r,
            EnvelopeKind::PowerLawDiffusion,
            f64::INFINITY,
            (1e-7, 1e-3),
        )
        .unwrap();
        assert!(sig.x < sig_free.x);
    }

    #[test]
    fn readout_window_examples() {
        let t: Vec<f64> = (1..=50).map(|i| i as f64 * 20e-9).collect();
        let c0: Vec<f64> = t.iter().map(|&x| 0.04 * (1.0 - (-x / 300e-9).exp())).collect();
        let c1: Vec<f64> = c0.iter().map(|&x| 0.75 * x).collect();
        let tr = ReadoutTrace::new(t.clone(), c0.clone(), c1).unwrap();
        let w = readout_window_optimize(&tr).unwrap();
        assert_eq!(w.t_snr, w.t_fisher);
        assert!(!w.degenerate);
        assert!(w.snr_curve.iter().all(|&s| s <= w.snr_curve[49]));

        let flat = ReadoutTrace::new(t.clone(), c0.clone(), c0.clone()).unwrap();
        let w = readout_window_optimize(&flat).unwrap();
        assert!(w.degenerate);
        assert!(w.snr_curve.iter().all(|&s| s == 0.0));

        let zeros = ReadoutTrace::new(t, vec![0.0; 50], vec![0.0; 50]).unwrap();
        assert!(readout_window_optimize(&zeros).is_err());
    }

    #[test]
    fn readout_csv() {
        let tr = ReadoutTrace::from_csv("# x\nt_ns,counts0,counts1\n100,0.01,0.008\n200,0.02,0.015\n").unwrap();
        assert_eq!(tr.time_axis, vec![100e-9, 200e-9]);
        assert!(ReadoutTrace::from_csv("t,a,b\n1,2,3\n").is_err());
        assert!(ReadoutTrace::from_csv("t_ns,counts0,counts1\n2,1,1\n1,1,1\n").is_err());
    }

    #[test]
    fn drift_compensation() {
        let df = larmor_shift(0.1e-4, GAMMA_H_HZ_PER_T);
        assert_relative_eq!(df, 426.0, max_relative = 1e-12);
        assert_eq!(sample_rate_compensation(2e6, 0.0, 64e9).unwrap(), 0.0);
        let ds = sample_rate_compensation(2e6, df, 64e9).unwrap();
        assert_relative_eq!(ds, 13.632e6, max_relative = 1e-10);
        assert_eq!(sample_rate_compensation(2e6, 2.0 * df, 64e9).unwrap(), 2.0 * ds);
    }
}
