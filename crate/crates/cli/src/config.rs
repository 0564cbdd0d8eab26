//! Run configuration: a JSON file (`--config`) overlaid with command-line flags.
//!
//! Every physical quantity is a string carrying its unit, e.g. `"25 us"` or
//! `"5 kHz"`. Flags use the same keys in kebab case (`--phi-rms 0.5`).

use std::path::Path;

use qdyne::estimate::{BlockSpec, Grouping, Normalization};
use qdyne::fisher::AxisSpec;
use qdyne::pipeline::{AnalysisConfig, DeltaWindow, FitOptions};
use qdyne::simulate::CountModel;
use qdyne::{CorrelationModel, EnvelopeKind, ProtocolTiming, ReadoutParams};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};
use crate::units::{parse_quantity, Dim, Flag, Freq, Int, Num, Time};

/// Declares a flag struct `$args` (all `Option<String>`) and a typed config
/// `$cfg` with the same keys.
macro_rules! config {
    ($args:ident => $cfg:ident { $($(#[doc = $doc:literal])* $field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Clone, Default, clap::Args, serde::Serialize)]
        pub struct $args {
            $(
                $(#[doc = $doc])*
                #[arg(long, value_name = "VALUE")]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<String>,
            )*
        }

        #[derive(Debug, Clone, serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $cfg {
            $( #[serde(default)] pub $field: Option<$ty>, )*
        }

        impl $cfg {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];
        }
    };
}
pub(crate) use config;

/// Overlay `flags` on the JSON object in `file`.
///
/// A `"command"` key in the file must name `command`.
pub fn merged(command: &str, file: Option<&Path>, flags: &[&dyn erased::Flags]) -> CliResult<Map<String, Value>> {
    let mut map = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => {
                    return Err(CliError::Config(format!(
                        "{}: config must be a JSON object",
                        path.display()
                    )))
                }
                Err(e) => return Err(CliError::Config(format!("{}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    if let Some(c) = map.remove("command") {
        if c.as_str() != Some(command) {
            return Err(CliError::Config(format!("config is for command {c}, not '{command}'")));
        }
    }
    for f in flags {
        map.extend(f.to_map());
    }
    Ok(map)
}

pub fn parse<C: DeserializeOwned>(map: Map<String, Value>) -> CliResult<C> {
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
}

/// Move the entries named in `keys` out of `map`.
pub fn take(map: &mut Map<String, Value>, keys: &[&str]) -> Map<String, Value> {
    keys.iter()
        .filter_map(|k| map.remove(*k).map(|v| (k.to_string(), v)))
        .collect()
}

pub fn load<C: DeserializeOwned>(command: &str, file: Option<&Path>, flags: &impl Serialize) -> CliResult<C> {
    parse(merged(command, file, &[flags])?)
}

pub mod erased {
    use serde_json::{Map, Value};

    pub trait Flags {
        fn to_map(&self) -> Map<String, Value>;
    }

    impl<T: serde::Serialize> Flags for T {
        fn to_map(&self) -> Map<String, Value> {
            match serde_json::to_value(self).expect("flags serialize") {
                Value::Object(m) => m,
                _ => unreachable!("flag structs serialize to objects"),
            }
        }
    }
}

pub fn required<T>(value: Option<T>, key: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Config(format!("missing required parameter '{key}'")))
}

pub fn envelope_kind(name: Option<&str>) -> CliResult<EnvelopeKind> {
    Ok(name.unwrap_or("power-law").parse::<EnvelopeKind>()?)
}

/// `lo:hi:n[:log]` with bounds of dimension `dim` (`None` for dimensionless).
pub fn parse_range(text: &str, dim: Option<Dim>) -> CliResult<(f64, f64, usize, bool)> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(&"lin") => false,
        Some(other) => {
            return Err(CliError::Config(format!(
                "range '{text}': expected 'log' or 'lin', got '{other}'"
            )))
        }
    };
    if !(3..=4).contains(&parts.len()) {
        return Err(CliError::Config(format!("range '{text}' must look like lo:hi:n[:log]")));
    }
    let value = |s: &str| -> CliResult<f64> {
        match dim {
            Some(d) => parse_quantity(s, d).map_err(CliError::Config),
            None => s
                .parse()
                .map_err(|_| CliError::Config(format!("range '{text}': '{s}' is not a number"))),
        }
    };
    let n = parts[2]
        .parse::<usize>()
        .map_err(|_| CliError::Config(format!("range '{text}': '{}' is not a point count", parts[2])))?;
    Ok((value(parts[0])?, value(parts[1])?, n, log))
}

pub fn range_values(text: &str, dim: Option<Dim>, force_log: bool) -> CliResult<Vec<f64>> {
    let (lo, hi, n, log) = parse_range(text, dim)?;
    let spec = AxisSpec {
        axis: qdyne::fisher::Axis::Chi,
        lo,
        hi,
        n,
        log: log || force_log,
    };
    Ok(spec.values()?)
}

/// Readout from `eta0` with `eta1` or relative contrast `chi`. `eta1 = eta0`
/// is accepted only with `allow_zero_contrast`.
pub fn readout(
    eta0: Option<Num>,
    eta1: Option<Num>,
    chi: Option<Num>,
    allow_zero_contrast: bool,
) -> CliResult<ReadoutParams> {
    let eta0 = required(eta0, "eta0")?.0;
    Ok(match (eta1, chi) {
        (Some(e1), None) if allow_zero_contrast && e1.0 == eta0 => ReadoutParams::without_contrast(eta0)?,
        (Some(e1), None) => ReadoutParams::new(eta0, e1.0)?,
        (None, Some(c)) => ReadoutParams::from_contrast(eta0, c.0)?,
        (Some(_), Some(_)) => return Err(CliError::Config("give either eta1 or chi, not both".into())),
        (None, None) => return Err(CliError::Config("missing required parameter 'eta1' (or 'chi')".into())),
    })
}

pub fn model(
    phi_rms: Option<Num>,
    delta: Option<Freq>,
    t_d: Option<Time>,
    envelope: Option<&str>,
) -> CliResult<CorrelationModel> {
    Ok(CorrelationModel::new(
        required(phi_rms, "phi_rms")?.0,
        required(delta, "delta")?.angular(),
        required(t_d, "t_d")?.0,
        envelope_kind(envelope)?,
    )?)
}

pub fn timing(tau: Option<Time>, tau_o: Option<Time>, total_time: Option<Time>) -> CliResult<ProtocolTiming> {
    Ok(ProtocolTiming::new(
        required(tau, "tau")?.0,
        tau_o.map_or(0.0, |t| t.0),
        required(total_time, "total_time")?.0,
    )?)
}

pub fn count_model(name: Option<&str>) -> CliResult<CountModel> {
    match name.unwrap_or("poisson") {
        "poisson" => Ok(CountModel::Poisson),
        "bernoulli" => Ok(CountModel::Bernoulli),
        other => Err(CliError::Config(format!(
            "unknown count model '{other}' (poisson, bernoulli)"
        ))),
    }
}

config!(AnalysisArgs => AnalysisFile {
    /// Longest autocorrelation lag, e.g. "10 ms".
    max_lag: Time,
    /// biased | unbiased (default unbiased).
    normalization: String,
    /// Slice traces into blocks of this duration.
    block_duration: Time,
    /// Blocks per group (default 1).
    group_size: Int,
    /// average | concatenate (default average).
    grouping: String,
    /// Fit envelope: power-law | exponential (default: the model's).
    fit_envelope: String,
    /// Also fit an exponential decay plus offset.
    include_nuisance: Flag,
    /// Weight lags by their pair counts (default true).
    weighted: Flag,
    /// Multistart count (default 40).
    n_starts: Int,
    /// nyquist | fourier | fixed (default nyquist).
    delta_window: String,
    /// Fourier window half-width in Fourier half-widths (default 3).
    delta_window_half_widths: Num,
    /// Lower δ/2π bound for a fixed window.
    delta_lo: Freq,
    /// Upper δ/2π bound for a fixed window.
    delta_hi: Freq,
    /// Fit the first lags first, then double (default 40; 0 disables).
    initial_lags: Int,
    /// Fourier zero padding factor (default 8).
    zero_pad_factor: Int,
    /// Longest lag entering the Fourier baseline.
    fourier_max_lag: Time,
    /// Seed of the fit multistarts (default 0).
    fit_seed: Int,
});

fn normalization(name: Option<&str>) -> CliResult<Normalization> {
    match name.unwrap_or("unbiased") {
        "biased" => Ok(Normalization::Biased),
        "unbiased" => Ok(Normalization::Unbiased),
        other => Err(CliError::Config(format!(
            "unknown normalization '{other}' (biased, unbiased)"
        ))),
    }
}

impl AnalysisFile {
    pub fn build(&self) -> CliResult<AnalysisConfig> {
        let max_lag = required(self.max_lag, "max_lag")?.0;
        let normalization = normalization(self.normalization.as_deref())?;
        let blocks = match self.block_duration {
            Some(d) => Some(BlockSpec {
                block_duration: d.0,
                group_size: self.group_size.map_or(1, |g| g.0 as usize),
                max_lag,
                normalization,
                grouping: match self.grouping.as_deref().unwrap_or("average") {
                    "average" => Grouping::Average,
                    "concatenate" => Grouping::Concatenate,
                    other => {
                        return Err(CliError::Config(format!(
                            "unknown grouping '{other}' (average, concatenate)"
                        )))
                    }
                },
            }),
            None if self.group_size.is_some() || self.grouping.is_some() => {
                return Err(CliError::Config("group_size and grouping need block_duration".into()))
            }
            None => None,
        };
        let delta_window = match self.delta_window.as_deref().unwrap_or("nyquist") {
            "nyquist" => DeltaWindow::Nyquist,
            "fourier" => DeltaWindow::Fourier {
                half_widths: self.delta_window_half_widths.map_or(3.0, |h| h.0),
            },
            "fixed" => DeltaWindow::Fixed {
                lo: required(self.delta_lo, "delta_lo")?.angular(),
                hi: required(self.delta_hi, "delta_hi")?.angular(),
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown delta_window '{other}' (nyquist, fourier, fixed)"
                )))
            }
        };
        let config = AnalysisConfig {
            blocks,
            max_lag,
            normalization,
            fit: FitOptions {
                envelope: self
                    .fit_envelope
                    .as_deref()
                    .map(|s| envelope_kind(Some(s)))
                    .transpose()?,
                include_nuisance: self.include_nuisance.is_some_and(|f| f.0),
                weighted: self.weighted.is_none_or(|f| f.0),
                n_starts: self.n_starts.map_or(40, |n| n.0 as usize),
                delta_window,
                initial_lags: match self.initial_lags.map_or(40, |n| n.0) {
                    0 => None,
                    n => Some(n as usize),
                },
            },
            zero_pad_factor: self.zero_pad_factor.map_or(8, |z| z.0 as usize),
            fourier_max_lag: self.fourier_max_lag.map(|t| t.0),
            fit_seed: self.fit_seed.map_or(0, |s| s.0),
        };
        config.validate()?;
        Ok(config)
    }
}
