use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::autocorr::AutocorrResult;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierBaseline {
    /// Hz.
    pub peak_frequency: f64,
    /// Half the full width at half maximum (Hz).
    pub half_fwhm: f64,
    pub peak_height: f64,
}

/// Spectrum of the symmetric autocorrelation `v(±k τ̃)`, `k ≥ 1`, on a grid
/// refined by `zero_pad_factor`; returns the peak and FWHM/2.
pub fn fourier_baseline(ac: &AutocorrResult, zero_pad_factor: usize) -> Result<FourierBaseline> {
    if zero_pad_factor == 0 {
        return invalid("zero_pad_factor must be at least 1");
    }
    if ac.len() < 2 {
        return invalid("autocorrelation needs at least two lags");
    }
    let k = ac.len();
    let m = (2 * k + 1).next_power_of_two() * zero_pad_factor;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (j, &v) in ac.values.iter().enumerate() {
        buf[j + 1] = Complex64::new(v, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let spec: Vec<f64> = buf[..=m / 2].iter().map(|z| 2.0 * z.re.abs()).collect();

    let (imax, &smax) = spec
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let mut sorted = spec.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(smax > 3.0 * median) {
        return Err(Error::NoSignal(format!(
            "spectral peak {smax:e} is not above 3x the median {median:e}"
        )));
    }

    let at = |i: isize| spec[i.unsigned_abs().min(spec.len() - 1)];
    let i = imax as isize;
    let (y0, y1, y2) = (at(i - 1), at(i), at(i + 1));
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if imax > 0 && imax < spec.len() - 1 && denom < 0.0 {
        (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let peak_bin = imax as f64 + shift;
    let height = y1 - 0.25 * (y0 - y2) * shift;
    let half = 0.5 * height;

    let right = (imax..spec.len() - 1)
        .find(|&j| spec[j + 1] < half)
        .map(|j| j as f64 + (spec[j] - half) / (spec[j] - spec[j + 1]));
    let left = (1..=imax)
        .rev()
        .find(|&j| spec[j - 1] < half)
        .map(|j| j as f64 - (spec[j] - half) / (spec[j] - spec[j - 1]));
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (None, Some(r)) => 2.0 * (r - peak_bin),
        (Some(l), None) => 2.0 * (peak_bin - l),
        (None, None) => return Err(Error::NoSignal("spectral peak has no half-maximum crossing".into())),
    };
    let df = 1.0 / (m as f64 * ac.spacing);
    Ok(FourierBaseline {
        peak_frequency: peak_bin * df,
        half_fwhm: 0.5 * width * df,
        peak_height: height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::Normalization;
    use std::f64::consts::PI;

    fn ac_from(k: usize, dt: f64, f: impl Fn(f64) -> f64) -> AutocorrResult {
        let lags: Vec<f64> = (1..=k).map(|j| j as f64 * dt).collect();
        AutocorrResult {
            spacing: dt,
            values: lags.iter().map(|&t| f(t)).collect(),
            n_pairs: vec![1; k],
            n_points: 2 * k,
            lags,
            variance: 1.0,
            mean_subtracted: true,
            normalization: Normalization::Biased,
        }
    }

    #[test]
    fn pure_cosine_peak() {
        let (f0, dt, k) = (3210.0, 25e-6, 20_000);
        let ac = ac_from(k, dt, |t| (2.0 * PI * f0 * t).cos());
        let b = fourier_baseline(&ac, 4).unwrap();
        let bin = 1.0 / ((2 * k + 1).next_power_of_two() as f64 * 4.0 * dt);
        assert!((b.peak_frequency - f0).abs() < bin, "{} vs {f0}", b.peak_frequency);
    }

    #[test]
    fn lorentzian_width() {
        let (f0, t_d, dt) = (5000.0, 400e-6, 25e-6);
        let ac = ac_from(4000, dt, |t| (2.0 * PI * f0 * t).cos() * (-t / t_d).exp());
        let b = fourier_baseline(&ac, 8).unwrap();
        let fwhm = 2.0 * b.half_fwhm;
        let expect = 1.0 / (PI * t_d);
        assert!((fwhm / expect - 1.0).abs() < 0.1, "{fwhm} vs {expect}");
        assert!((b.peak_frequency - f0).abs() < 5.0);
    }

    #[test]
    fn flat_spectrum_is_an_error() {
        let ac = ac_from(64, 1e-3, |_| 0.0);
        assert!(matches!(fourier_baseline(&ac, 2), Err(Error::NoSignal(_))));
        assert!(fourier_baseline(&ac, 0).is_err());
    }
}
