use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autocorr::{AutocorrResult, Normalization};
use crate::envelopes::{EnvelopeKind, NuisanceDecay};
use crate::error::{invalid, Result};

const MAX_ITERATIONS: usize = 200;
const FTOL: f64 = 1e-12;
const XTOL: f64 = 1e-10;
const JAC_STEP: f64 = 1e-6;
const AT_BOUND: f64 = 1e-6;

/// Closed interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn check(&self, name: &str, positive: bool) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return invalid(format!(
                "{name} bounds must be finite with lo < hi, got [{}, {}]",
                self.lo, self.hi
            ));
        }
        if positive && !(self.lo > 0.0) {
            return invalid(format!("{name} bounds must be positive"));
        }
        Ok(())
    }
}

/// Box constraints of the fit. `t_d` and `t_exp` are searched on a log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub amplitude: Range,
    pub delta: Range,
    pub t_d: Range,
    pub nuisance_amplitude: Range,
    pub t_exp: Range,
    pub offset: Range,
}

impl FitBounds {
    /// δ over the Nyquist band of the lag grid, T_D over `[τ̃, max_lag]`,
    /// amplitude over `[0, 10·max|ac|]` of the first ten lags.
    pub fn default_for(ac: &AutocorrResult) -> Result<Self> {
        if ac.len() < 2 {
            return invalid("autocorrelation needs at least two lags");
        }
        let head = ac.values.iter().take(10).fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if head > 0.0 { head } else { 1.0 };
        let max_lag = ac.max_lag();
        Ok(FitBounds {
            amplitude: Range::new(0.0, 10.0 * scale),
            delta: Range::new(0.0, std::f64::consts::PI / ac.spacing),
            t_d: Range::new(ac.spacing, max_lag),
            nuisance_amplitude: Range::new(-2.0 * scale, 2.0 * scale),
            t_exp: Range::new(ac.spacing, 10.0 * max_lag),
            offset: Range::new(-scale, scale),
        })
    }

    /// Restrict δ to `center ± half_width`, clipped to the current range.
    pub fn with_delta_window(mut self, center: f64, half_width: f64) -> Self {
        let lo = (center - half_width).max(self.delta.lo);
        let hi = (center + half_width).min(self.delta.hi);
        if lo < hi {
            self.delta = Range::new(lo, hi);
        }
        self
    }

    pub fn validate(&self, include_nuisance: bool) -> Result<()> {
        self.amplitude.check("amplitude", false)?;
        self.delta.check("delta", false)?;
        self.t_d.check("t_d", true)?;
        if include_nuisance {
            self.nuisance_amplitude.check("nuisance amplitude", false)?;
            self.t_exp.check("t_exp", true)?;
            self.offset.check("offset", false)?;
        }
        Ok(())
    }

    /// Position of `params` in the unit box, clamped to it.
    pub fn to_unit(&self, params: &FitParams, include_nuisance: bool) -> Vec<f64> {
        let mut p = vec![params.amplitude, params.delta, params.t_d];
        if include_nuisance {
            let n = params.nuisance.unwrap_or(NuisanceDecay {
                amplitude: 0.0,
                t_exp: self.t_exp.lo,
                offset: 0.0,
            });
            p.extend([n.amplitude, n.t_exp, n.offset]);
        }
        p.iter()
            .zip(self.axes(include_nuisance))
            .map(|(&v, (r, log))| {
                let u = if log {
                    (v.ln() - r.lo.ln()) / (r.hi.ln() - r.lo.ln())
                } else {
                    (v - r.lo) / (r.hi - r.lo)
                };
                if u.is_nan() {
                    0.5
                } else {
                    u.clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    fn axes(&self, include_nuisance: bool) -> Vec<(Range, bool)> {
        let mut v = vec![(self.amplitude, false), (self.delta, false), (self.t_d, true)];
        if include_nuisance {
            v.extend([
                (self.nuisance_amplitude, false),
                (self.t_exp, true),
                (self.offset, false),
            ]);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitModelSpec {
    pub envelope: EnvelopeKind,
    pub include_nuisance: bool,
    pub bounds: FitBounds,
    /// Weight each lag by its pair count.
    #[serde(default)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Free scale of `cos(δt) C(t/T_D)`; absorbs Φ²rms and the readout contrast.
    pub amplitude: f64,
    pub delta: f64,
    pub t_d: f64,
    pub nuisance: Option<NuisanceDecay>,
}

impl FitParams {
    fn from_vec(p: &[f64]) -> Self {
        FitParams {
            amplitude: p[0],
            delta: p[1],
            t_d: p[2],
            nuisance: (p.len() == 6).then(|| NuisanceDecay {
                amplitude: p[3],
                t_exp: p[4],
                offset: p[5],
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// Asymptotic standard errors in the order amplitude, δ, T_D[, A, T_exp, offset].
    pub param_errors: Vec<f64>,
    pub r_squared: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Some parameter ended on its box constraint.
    pub at_bound: bool,
}

struct Problem<'a> {
    lags: &'a [f64],
    data: &'a [f64],
    sqrt_w: Vec<f64>,
    bias: Vec<f64>,
    kind: EnvelopeKind,
    axes: Vec<(Range, bool)>,
}

impl Problem<'_> {
    fn to_param(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.axes)
            .map(|(&u, &(r, log))| {
                if log {
                    (r.lo.ln() + u * (r.hi.ln() - r.lo.ln())).exp()
                } else {
                    r.lo + u * (r.hi - r.lo)
                }
            })
            .collect()
    }

    fn envelope(&self, z: f64) -> f64 {
        // Arguments are finite and nonnegative by construction.
        self.kind.eval(z).unwrap_or(f64::NAN)
    }

    fn model(&self, p: &[f64], out: &mut [f64]) {
        for ((o, &t), &b) in out.iter_mut().zip(self.lags).zip(&self.bias) {
            let mut v = p[0] * (p[1] * t).cos() * self.envelope(t / p[2]);
            if p.len() == 6 {
                v += p[3] * (-t / p[4]).exp() + p[5];
            }
            *o = b * v;
        }
    }

    /// Weighted residuals `√w (y − f)`.
    fn residuals(&self, u: &[f64], out: &mut [f64]) {
        let p = self.to_param(u);
        self.model(&p, out);
        for ((o, &y), &w) in out.iter_mut().zip(self.data).zip(&self.sqrt_w) {
            *o = w * (y - *o);
        }
    }

    /// Central-difference Jacobian of the weighted model in `u`.
    fn jacobian(&self, u: &[f64], scratch: &mut [f64]) -> DMatrix<f64> {
        let n = self.data.len();
        let mut j = DMatrix::zeros(n, u.len());
        let mut up = u.to_vec();
        for c in 0..u.len() {
            up[c] = u[c] + JAC_STEP;
            self.residuals(&up, scratch);
            let plus = scratch.to_vec();
            up[c] = u[c] - JAC_STEP;
            self.residuals(&up, scratch);
            for r in 0..n {
                // Residuals are y − f, so the model derivative flips sign.
                j[(r, c)] = (scratch[r] - plus[r]) / (2.0 * JAC_STEP);
            }
            up[c] = u[c];
        }
        j
    }

    fn cost(r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum()
    }

    fn r_squared(&self, ss_res: f64) -> f64 {
        let wsum: f64 = self.sqrt_w.iter().map(|w| w * w).sum();
        let mean = self.data.iter().zip(&self.sqrt_w).map(|(y, w)| y * w * w).sum::<f64>() / wsum;
        let ss_tot: f64 = self
            .data
            .iter()
            .zip(&self.sqrt_w)
            .map(|(y, w)| (w * (y - mean)).powi(2))
            .sum();
        if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

struct Run {
    u: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

/// Projected Levenberg–Marquardt in the unit box.
fn levenberg_marquardt(problem: &Problem, u0: Vec<f64>) -> Run {
    let n = problem.data.len();
    let mut u = u0;
    let mut r = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    problem.residuals(&u, &mut r);
    let mut cost = Problem::cost(&r);
    let mut lambda = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        if !cost.is_finite() {
            return Run {
                u,
                cost,
                converged: false,
                iterations: it,
            };
        }
        let j = problem.jacobian(&u, &mut scratch);
        let jtj = j.transpose() * &j;
        // Model derivative is −∂r/∂u, so the normal-equation RHS is Jᵀ r.
        let g = j.transpose() * DVector::from_column_slice(&r);
        let dmax = jtj.diagonal().max();
        // Parameters pinned on a bound by the gradient stay there this step.
        let pinned: Vec<bool> = (0..u.len())
            .map(|k| (u[k] <= 0.0 && g[k] < 0.0) || (u[k] >= 1.0 && g[k] > 0.0))
            .collect();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            let mut rhs = g.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax).max(f64::MIN_POSITIVE);
                if pinned[k] {
                    a.row_mut(k).fill(0.0);
                    a.column_mut(k).fill(0.0);
                    a[(k, k)] = 1.0;
                    rhs[k] = 0.0;
                }
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = u
                .iter()
                .zip(step.iter())
                .map(|(a, b)| (a + b).clamp(0.0, 1.0))
                .collect();
            problem.residuals(&trial, &mut scratch);
            let trial_cost = Problem::cost(&scratch);
            if trial_cost.is_finite() && trial_cost <= cost {
                let moved = trial.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let drop = cost - trial_cost;
                u = trial;
                std::mem::swap(&mut r, &mut scratch);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if drop <= FTOL * cost || moved <= XTOL {
                    return Run {
                        u,
                        cost,
                        converged: true,
                        iterations: it,
                    };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left: a (possibly constrained) stationary point.
            return Run {
                u,
                cost,
                converged: true,
                iterations: it,
            };
        }
    }
    Run {
        u,
        cost,
        converged: false,
        iterations: MAX_ITERATIONS,
    }
}

fn standard_errors(problem: &Problem, u: &[f64], cost: f64) -> Vec<f64> {
    let p = problem.to_param(u);
    let n = problem.data.len();
    let k = p.len();
    let mut j = DMatrix::zeros(n, k);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for c in 0..k {
        let h = 1e-6 * p[c].abs().max(1e-300) + if p[c] == 0.0 { 1e-12 } else { 0.0 };
        let mut q = p.clone();
        q[c] = p[c] + h;
        problem.model(&q, &mut plus);
        q[c] = p[c] - h;
        problem.model(&q, &mut minus);
        for r in 0..n {
            j[(r, c)] = problem.sqrt_w[r] * (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    let dof = n.saturating_sub(k).max(1) as f64;
    let s2 = cost / dof;
    match (j.transpose() * &j).try_inverse() {
        Some(cov) => (0..k).map(|c| (s2 * cov[(c, c)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; k],
    }
}

/// Multistart least-squares fit of `amplitude·cos(δt)·C(t/T_D)` (plus
/// `A e^{-t/T_exp} + offset` when requested) to the lags of `ac`.
///
/// Starts are drawn uniformly in the box from `seed`; the converged run with
/// the highest R² wins, or the best run overall when none converged.
pub fn fit_autocorrelation(ac: &AutocorrResult, spec: &FitModelSpec, n_starts: usize, seed: u64) -> Result<FitResult> {
    if n_starts == 0 {
        return invalid("n_starts must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = if spec.include_nuisance { 6 } else { 3 };
    let starts: Vec<Vec<f64>> = (0..n_starts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    fit_autocorrelation_from(ac, spec, &starts)
}

/// Like [`fit_autocorrelation`] but from explicit unit-box starting points.
pub fn fit_autocorrelation_from(ac: &AutocorrResult, spec: &FitModelSpec, starts: &[Vec<f64>]) -> Result<FitResult> {
    if ac.len() < 10 {
        return invalid(format!("fit needs at least 10 lags, got {}", ac.len()));
    }
    if starts.is_empty() {
        return invalid("need at least one start");
    }
    spec.bounds.validate(spec.include_nuisance)?;
    let axes = spec.bounds.axes(spec.include_nuisance);
    if starts
        .iter()
        .any(|s| s.len() != axes.len() || s.iter().any(|u| !(0.0..=1.0).contains(u)))
    {
        return invalid(format!("starts must be {}-vectors in [0, 1]", axes.len()));
    }
    let bias = match ac.normalization {
        Normalization::Unbiased => vec![1.0; ac.len()],
        Normalization::Biased => ac.n_pairs.iter().map(|&m| m as f64 / ac.n_points as f64).collect(),
    };
    let sqrt_w = if spec.weighted {
        let m0 = ac.n_pairs[0] as f64;
        ac.n_pairs.iter().map(|&m| (m as f64 / m0).sqrt()).collect()
    } else {
        vec![1.0; ac.len()]
    };
    let problem = Problem {
        lags: &ac.lags,
        data: &ac.values,
        sqrt_w,
        bias,
        kind: spec.envelope,
        axes,
    };

    let mut best: Option<(Run, f64)> = None;
    for u0 in starts {
        let run = levenberg_marquardt(&problem, u0.clone());
        let r2 = problem.r_squared(run.cost);
        let better = match &best {
            None => true,
            Some((b, br2)) => match (run.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => r2 > *br2,
            },
        };
        if better {
            best = Some((run, r2));
        }
    }
    let (run, r_squared) = best.expect("at least one start");
    let p = problem.to_param(&run.u);
    Ok(FitResult {
        params: FitParams::from_vec(&p),
        param_errors: standard_errors(&problem, &run.u, run.cost),
        r_squared,
        converged: run.converged,
        n_iterations: run.iterations,
        at_bound: run.u.iter().any(|&u| u <= AT_BOUND || u >= 1.0 - AT_BOUND),
    })
}
