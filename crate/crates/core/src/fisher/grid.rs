//! Two-axis sweeps of `R_δ` and Rayleigh resolvability.

use serde::{Deserialize, Serialize};

use super::{ratio_r_delta, rayleigh_resolvable, ProtocolTiming, RatioMethod, ReadoutParams};
use crate::envelopes::CorrelationModel;
use crate::error::{invalid, Result};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// δ (rad/s).
    Delta,
    /// T_D (s).
    DiffusionTime,
    /// τ̃ (s) of the Qdyne protocol; τ = τ̃ − τ_o.
    TauTilde,
    /// Relative contrast χ of both readouts, at fixed η₀.
    Chi,
    /// T (s) of both protocols.
    TotalTime,
}

impl std::str::FromStr for Axis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Axis::Delta),
            "t-d" | "td" | "diffusion-time" => Ok(Axis::DiffusionTime),
            "tau-tilde" => Ok(Axis::TauTilde),
            "chi" => Ok(Axis::Chi),
            "total-time" | "t" => Ok(Axis::TotalTime),
            other => invalid(format!("unknown axis '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub log: bool,
}

impl AxisSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.n == 0 || !(self.lo.is_finite() && self.hi.is_finite()) || self.hi < self.lo {
            return invalid(format!("bad axis {:?}: need lo <= hi and n >= 1", self.axis));
        }
        if self.n > 1 && self.hi == self.lo {
            return invalid(format!("axis {:?} has {} points on an empty range", self.axis, self.n));
        }
        if self.log && !(self.lo > 0.0) {
            return invalid(format!("log axis {:?} needs lo > 0", self.axis));
        }
        if self.n == 1 {
            return Ok(vec![self.lo]);
        }
        let last = (self.n - 1) as f64;
        Ok((0..self.n)
            .map(|i| {
                let f = i as f64 / last;
                if i == 0 {
                    self.lo
                } else if i == self.n - 1 {
                    self.hi
                } else if self.log {
                    (self.lo.ln() + f * (self.hi.ln() - self.lo.ln())).exp()
                } else {
                    self.lo + f * (self.hi - self.lo)
                }
            })
            .collect())
    }
}

/// Everything not swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBase {
    pub model: CorrelationModel,
    pub readout_cs: ReadoutParams,
    pub readout_qd: ReadoutParams,
    pub timing_cs: ProtocolTiming,
    pub timing_qd: ProtocolTiming,
    /// Keep `δT_D` at this value while T_D or δ is swept along the other axis.
    #[serde(default)]
    pub fixed_delta_td: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub base: GridBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub r_delta: f64,
    pub i_cs: f64,
    pub i_qd: f64,
    pub err_cs: f64,
    pub err_qd: f64,
    pub resolvable_cs: bool,
    pub resolvable_qd: bool,
    /// Set when the cell could not be computed; numeric fields are NaN then.
    pub error: Option<String>,
}

fn apply(base: &mut GridBase, axis: Axis, v: f64) -> Result<()> {
    match axis {
        Axis::Delta => base.model.delta = v,
        Axis::DiffusionTime => base.model.t_d = v,
        Axis::TauTilde => {
            let tau = v - base.timing_qd.tau_o;
            base.timing_qd = ProtocolTiming::new(tau, base.timing_qd.tau_o, base.timing_qd.total_time)?;
        }
        Axis::Chi => {
            base.readout_cs = ReadoutParams::from_contrast(base.readout_cs.eta0, v)?;
            base.readout_qd = ReadoutParams::from_contrast(base.readout_qd.eta0, v)?;
        }
        Axis::TotalTime => {
            base.timing_cs.total_time = v;
            base.timing_qd.total_time = v;
        }
    }
    Ok(())
}

fn cell(spec: &GridSpec, x: f64, y: f64) -> Result<GridCell> {
    let mut base = spec.base;
    apply(&mut base, spec.x.axis, x)?;
    apply(&mut base, spec.y.axis, y)?;
    if let Some(a) = base.fixed_delta_td {
        let swept = [spec.x.axis, spec.y.axis];
        if swept.contains(&Axis::Delta) && !swept.contains(&Axis::DiffusionTime) {
            base.model.t_d = a / base.model.delta;
        } else {
            base.model.delta = a / base.model.t_d;
        }
    }
    base.model.validate()?;
    ProtocolTiming::new(base.timing_cs.tau, base.timing_cs.tau_o, base.timing_cs.total_time)?;
    ProtocolTiming::new(base.timing_qd.tau, base.timing_qd.tau_o, base.timing_qd.total_time)?;
    let r = ratio_r_delta(
        &base.model,
        &base.readout_cs,
        &base.readout_qd,
        &base.timing_cs,
        &base.timing_qd,
        RatioMethod::Quadrature,
    )?;
    let (i_cs, i_qd) = (
        r.i_cs.expect("quadrature sets i_cs"),
        r.i_qd.expect("quadrature sets i_qd"),
    );
    Ok(GridCell {
        x,
        y,
        r_delta: r.value,
        i_cs: i_cs.value,
        i_qd: i_qd.value,
        err_cs: i_cs.abs_error_estimate,
        err_qd: i_qd.abs_error_estimate,
        resolvable_cs: rayleigh_resolvable(i_cs.value, base.model.delta),
        resolvable_qd: rayleigh_resolvable(i_qd.value, base.model.delta),
        error: None,
    })
}

/// Evaluate `R_δ` on the `x × y` grid, row-major with `x` varying fastest.
///
/// Cells that fail are returned flagged; only an invalid spec is an error.
pub fn grid_map(spec: &GridSpec, exec: Execution) -> Result<Vec<GridCell>> {
    if spec.x.axis == spec.y.axis {
        return invalid("grid axes must differ");
    }
    let xs = spec.x.values()?;
    let ys = spec.y.values()?;
    let nx = xs.len();
    Ok(map_indexed(nx * ys.len(), exec, |k| {
        let (x, y) = (xs[k % nx], ys[k / nx]);
        cell(spec, x, y).unwrap_or_else(|e| GridCell {
            x,
            y,
            r_delta: f64::NAN,
            i_cs: f64::NAN,
            i_qd: f64::NAN,
            err_cs: f64::NAN,
            err_qd: f64::NAN,
            resolvable_cs: false,
            resolvable_qd: false,
            error: Some(e.to_string()),
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::EnvelopeKind;
    use crate::fisher::{fisher_total_cs_numeric, fisher_total_qdyne_numeric};
    use std::f64::consts::PI;

    fn base() -> GridBase {
        let model = CorrelationModel::new(1.0, 2.0 * PI * 100.0, 100e-6, EnvelopeKind::PowerLawDiffusion).unwrap();
        let r = ReadoutParams::new(0.04, 0.03).unwrap();
        let t = ProtocolTiming::new(22.9e-6, 2.1e-6, 3600.0).unwrap();
        GridBase {
            model,
            readout_cs: r,
            readout_qd: r,
            timing_cs: t,
            timing_qd: t,
            fixed_delta_td: None,
        }
    }

    #[test]
    fn single_cell_equals_direct_calls() {
        let b = base();
        let spec = GridSpec {
            x: AxisSpec {
                axis: Axis::Delta,
                lo: b.model.delta,
                hi: b.model.delta,
                n: 1,
                log: false,
            },
            y: AxisSpec {
                axis: Axis::TotalTime,
                lo: 3600.0,
                hi: 3600.0,
                n: 1,
                log: false,
            },
            base: b,
        };
        let cells = grid_map(&spec, Execution::Sequential).unwrap();
        assert_eq!(cells.len(), 1);
        let cs = fisher_total_cs_numeric(&b.model, &b.readout_cs, &b.timing_cs)
            .unwrap()
            .value;
        let qd = fisher_total_qdyne_numeric(&b.model, &b.readout_qd, &b.timing_qd)
            .unwrap()
            .value;
        assert_eq!(cells[0].i_cs, cs);
        assert_eq!(cells[0].i_qd, qd);
        assert_eq!(cells[0].r_delta, qd / cs);
    }

    #[test]
    fn parallel_equals_sequential_and_flags_bad_cells() {
        let b = base();
        let spec = GridSpec {
            // τ̃ = 1 µs < τ_o gives an invalid cell.
            x: AxisSpec {
                axis: Axis::TauTilde,
                lo: 1e-6,
                hi: 50e-6,
                n: 3,
                log: true,
            },
            y: AxisSpec {
                axis: Axis::Chi,
                lo: 0.1,
                hi: 0.3,
                n: 2,
                log: false,
            },
            base: b,
        };
        let seq = grid_map(&spec, Execution::Sequential).unwrap();
        let par = grid_map(&spec, Execution::Parallel).unwrap();
        assert_eq!(format!("{seq:?}"), format!("{par:?}"));
        assert!(seq[0].error.is_some());
        assert!(seq[1].error.is_none() && seq[1].r_delta.is_finite());
        assert_eq!((seq[4].x, seq[4].y), (spec.x.values().unwrap()[1], 0.3));
    }

    #[test]
    fn fixed_product_tracks_diffusion_time() {
        let mut b = base();
        b.fixed_delta_td = Some(2.0 * PI);
        let spec = GridSpec {
            x: AxisSpec {
                axis: Axis::DiffusionTime,
                lo: 50e-6,
                hi: 500e-6,
                n: 2,
                log: true,
            },
            y: AxisSpec {
                axis: Axis::TauTilde,
                lo: 10e-6,
                hi: 20e-6,
                n: 2,
                log: false,
            },
            base: b,
        };
        let cells = grid_map(&spec, Execution::Parallel).unwrap();
        for c in &cells {
            assert!(c.error.is_none(), "{:?}", c.error);
            assert!(c.r_delta.is_finite() && c.r_delta > 0.0);
        }
    }

    #[test]
    fn same_axis_twice_is_rejected() {
        let b = base();
        let a = AxisSpec {
            axis: Axis::Chi,
            lo: 0.1,
            hi: 0.2,
            n: 2,
            log: false,
        };
        assert!(grid_map(&GridSpec { x: a, y: a, base: b }, Execution::Sequential).is_err());
    }
}
