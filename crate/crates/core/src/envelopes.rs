//! Correlation envelopes and the phase covariance model.
//!
//! The diffusion envelope is
//!
//! ```text
//! C(z) = 4/√π [ z^{-3/2} − (3/2) z^{-1/2} + √π/4 + 3√z − (3√π/2) z
//!              + √(π/z) erfc(z^{-1/2}) e^{1/z} (−z^{-3/2} + z^{-1/2} − (7/4)√z + (3/2) z^{3/2}) ]
//! ```
//!
//! with `z = t/T_D`. Taken literally it cancels catastrophically at both ends,
//! so it is evaluated in three regimes:
//!
//! * `z < SMALL_Z`: `1 − 6z + Σ b_k z^{k+1/2}` (asymptotic expansion of the
//!   `erfcx` term, truncated well before its smallest term);
//! * `SMALL_Z ≤ z ≤ LARGE_Z`: the formula above with `erfcx(x) = e^{x²} erfc(x)`;
//! * `z > LARGE_Z`: the convergent series `Σ c_m z^{-m/2}`, `m ≥ 3`.
//!
//! Expansion coefficients come from `scripts/envelope_oracle.py` (sympy, 22 digits).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, finite, invalid, Result};
use crate::special::erfcx;

/// Upper edge of the small-z expansion.
pub const SMALL_Z: f64 = 0.01;
/// Lower edge of the large-z series.
pub const LARGE_Z: f64 = 50.0;

/// Coefficients `b_k` of `z^{k+1/2}`, k = 1..=16, in `C(z) = 1 − 6z + Σ b_k z^{k+1/2}`.
#[allow(clippy::excessive_precision)]
const SMALL_Z_COEFFS: [f64; 16] = [
    11.283_791_670_955_125_74,
    -23.695_962_509_005_764_05,
    91.398_712_534_736_518_49,
    -465.456_406_426_898_936_7,
    2_887.945_430_785_077_494,
    -20_993.141_785_322_294_09,
    174_476.333_949_123_066_4,
    -1_629_667.606_592_019_230,
    16_886_358.423_568_620_31,
    -192_138_168.200_446_126_8,
    2_380_842_519.005_528_093,
    -31_907_618_559.254_086_50,
    459_804_540_287.522_623_1,
    -7_089_161_513_053.647_869,
    116_432_127_338_816.594_5,
    -2_029_329_653_768_970.039,
];

/// Coefficients `c_m` of `z^{-m/2}`, m = 3..=48, in the large-z series.
#[allow(clippy::excessive_precision)]
pub(crate) const LARGE_Z_COEFFS: [f64; 46] = [
    1.203_604_444_901_880_078_823,
    -2.5,
    3.094_982_858_319_120_202_687,
    -2.916_666_666_666_666_666_667,
    2.292_579_895_051_200_150_138,
    -1.575,
    0.972_609_652_445_963_700_058_6,
    -0.55,
    0.288_576_490_286_165_053_863_6,
    -0.141_865_079_365_079_365_079_4,
    0.065_838_191_857_880_619_696_28,
    -0.029_017_857_142_857_142_857_14,
    0.012_205_297_599_321_897_412_50,
    -0.004_918_981_481_481_481_481_481,
    0.001_905_974_755_244_020_995_590,
    -0.000_712_081_128_747_795_414_462_1,
    0.000_257_155_324_120_225_054_960_6,
    -0.000_089_962_121_212_121_212_121_21,
    0.000_030_545_872_543_976_718_662_55,
    -0.000_010_083_473_625_140_291_806_96,
    3.241_077_844_666_161_306_511e-6,
    -1.015_734_522_678_967_123_412e-6,
    3.107_526_937_807_222_160_162e-7,
    -9.291_303_934_161_077_018_220e-8,
    2.717_727_206_977_830_474_905e-8,
    -7.784_047_962_619_391_190_820e-9,
    2.184_971_749_530_563_458_732e-9,
    -6.015_450_170_542_763_135_356e-10,
    1.625_504_075_328_172_911_419e-10,
    -4.314_181_156_793_201_611_129e-11,
    1.125_307_911_590_078_324_227e-11,
    -2.886_429_447_794_734_650_218e-12,
    7.284_578_241_984_595_952_383e-13,
    -1.809_772_849_544_346_187_188e-13,
    4.428_213_840_595_782_538_813e-14,
    -1.067_613_899_479_101_700_341e-14,
    2.537_265_382_919_766_998_623e-15,
    -5.946_455_224_468_899_074_544e-16,
    1.374_852_193_993_376_672_647e-16,
    -3.137_008_644_978_072_140_908e-17,
    7.066_191_903_031_485_804_716e-18,
    -1.571_830_948_835_778_458_726e-18,
    3.453_907_525_686_677_767_497e-19,
    -7.499_414_918_310_238_678_124e-20,
    1.609_449_077_853_739_478_317e-20,
    -3.414_885_096_135_611_713_230e-21,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    /// Exact diffusion envelope (short-time `e^{-6z}`, long-time `z^{-3/2}`).
    PowerLawDiffusion,
    /// `C(z) = e^{-z}`.
    Exponential,
}

impl EnvelopeKind {
    pub fn eval(self, z: f64) -> Result<f64> {
        match self {
            EnvelopeKind::PowerLawDiffusion => envelope_power_law(z),
            EnvelopeKind::Exponential => envelope_exponential(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvelopeKind::PowerLawDiffusion => "power-law",
            EnvelopeKind::Exponential => "exponential",
        }
    }
}

impl std::str::FromStr for EnvelopeKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power-law" | "powerlaw" | "power-law-diffusion" | "diffusion" => Ok(EnvelopeKind::PowerLawDiffusion),
            "exp" | "exponential" => Ok(EnvelopeKind::Exponential),
            other => invalid(format!("unknown envelope kind '{other}'")),
        }
    }
}

/// Additive exponential decay plus offset seen in measured autocorrelations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDecay {
    pub amplitude: f64,
    pub t_exp: f64,
    pub offset: f64,
}

impl NuisanceDecay {
    pub fn new(amplitude: f64, t_exp: f64, offset: f64) -> Result<Self> {
        if !(t_exp > 0.0) || !t_exp.is_finite() {
            return invalid(format!("nuisance t_exp must be positive, got {t_exp}"));
        }
        if !amplitude.is_finite() || !offset.is_finite() {
            return invalid("nuisance amplitude and offset must be finite");
        }
        Ok(NuisanceDecay {
            amplitude,
            t_exp,
            offset,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.t_exp).exp() + self.offset
    }
}

/// Covariance law `Φ²rms cos(δt) C(t/T_D)` shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    /// rms accumulated phase per acquisition (rad).
    pub phi_rms: f64,
    /// Angular frequency offset δ (rad/s).
    pub delta: f64,
    /// Diffusion time T_D (s).
    pub t_d: f64,
    pub kind: EnvelopeKind,
    #[serde(default)]
    pub nuisance: Option<NuisanceDecay>,
}

impl CorrelationModel {
    pub fn new(phi_rms: f64, delta: f64, t_d: f64, kind: EnvelopeKind) -> Result<Self> {
        let model = CorrelationModel {
            phi_rms,
            delta,
            t_d,
            kind,
            nuisance: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_nuisance(mut self, nuisance: NuisanceDecay) -> Self {
        self.nuisance = Some(nuisance);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_rms >= 0.0) || !self.phi_rms.is_finite() {
            return invalid(format!("phi_rms must be >= 0, got {}", self.phi_rms));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return invalid(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.t_d > 0.0) || !self.t_d.is_finite() {
            return invalid(format!("t_d must be > 0, got {}", self.t_d));
        }
        Ok(())
    }

    pub fn envelope(&self, t: f64) -> Result<f64> {
        self.kind.eval(t / self.t_d)
    }
}

/// Exact diffusion envelope `C(z)`, `z ≥ 0`.
pub fn envelope_power_law(z: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return domain(format!("envelope argument must be >= 0, got {z}"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    finite(power_law_value(z), "envelope_power_law")
}

/// Branch evaluation without argument checks; `z` must be finite and `> 0`.
pub(crate) fn power_law_value(z: f64) -> f64 {
    if z < SMALL_Z {
        power_law_small(z)
    } else if z <= LARGE_Z {
        power_law_direct(z)
    } else {
        power_law_large(z)
    }
}

pub(crate) fn power_law_small(z: f64) -> f64 {
    let s = z.sqrt();
    // Horner in z for Σ b_k z^{k-1}, then times z^{3/2}.
    let mut acc = 0.0;
    for &b in SMALL_Z_COEFFS.iter().rev() {
        acc = acc * z + b;
    }
    1.0 - 6.0 * z + acc * z * s
}

pub(crate) fn power_law_direct(z: f64) -> f64 {
    let sqrt_pi = PI.sqrt();
    let x = 1.0 / z.sqrt();
    let x2 = 1.0 / z;
    let x3 = x * x2;
    let poly = x3 - 1.5 * x + 0.25 * sqrt_pi + 3.0 / x - 1.5 * sqrt_pi * z;
    let bracket = -x3 + x - 1.75 / x + 1.5 / x3;
    let scaled = erfcx(x);
    4.0 / sqrt_pi * (poly + sqrt_pi * x * scaled * bracket)
}

pub(crate) fn power_law_large(z: f64) -> f64 {
    let x = 1.0 / z.sqrt();
    let mut acc = 0.0;
    for &c in LARGE_Z_COEFFS.iter().rev() {
        acc = acc * x + c;
    }
    acc * x * x * x
}

/// `C(z) = e^{-z}`.
pub fn envelope_exponential(z: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return domain(format!("envelope argument must be >= 0, got {z}"));
    }
    Ok((-z).exp())
}

/// Phase covariance `Φ²rms cos(δt) C(t/T_D)` plus the optional additive
/// nuisance term `A e^{-t/T_exp} + offset`.
pub fn covariance(model: &CorrelationModel, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return domain(format!("covariance lag must be >= 0, got {t}"));
    }
    let signal = if t.is_infinite() {
        0.0
    } else {
        model.phi_rms * model.phi_rms * (model.delta * t).cos() * model.envelope(t)?
    };
    let nuisance = model.nuisance.map_or(0.0, |n| n.eval(t));
    finite(signal + nuisance, "covariance")
}
