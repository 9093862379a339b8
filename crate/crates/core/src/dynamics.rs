//! Method-of-lines integration of the coupled flow and the diagnostics run
//! on its traces.
//!
//! The right-hand side is the exact `L²` gradient flow of the energy on the
//! grid, so `inner(du, u) + inner(dv, v) = −ψ_consistent` and
//! `d/dt φ = −(‖du‖² + ‖dv‖²)` hold at the discrete level.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FieldPair, GridField};
use crate::variational::{EnergyReport, Model, ModelError};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integrator control `{0}` must be positive and finite")]
    BadControl(&'static str),
    #[error("trace needs at least {needed} records, got {got}")]
    ShortTrace { needed: usize, got: usize },
    #[error("series must be non-increasing and non-negative (first violation at index {0})")]
    NotNonIncreasing(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("decay constant C must be positive, got {0}")]
    BadRate(f64),
    #[error("η must be non-negative, got {0}")]
    BadEta(f64),
    #[error("Levine parameters need a > 0, b > 0, T > 0 and σ > 2")]
    BadLevine,
}

/// Writes `(du, dv)` for the state `(u, v)` into the output slices.
///
/// `du = −(1/p) K([u]) L_p u + |v|^σ |u|^{σ−2} u log|uv|`, and symmetrically
/// for `dv` with `q`. Nodes where `uv = 0` contribute no reaction.
pub fn rhs_into(
    model: &Model,
    u: &[f64],
    v: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
) -> Result<(), ModelError> {
    let params = &model.params;
    let kp = model.kernel_p();
    let kq = model.kernel_q();
    let bu = kp.gagliardo_values(u) / params.p;
    let bv = kq.gagliardo_values(v) / params.q;
    let cu = model.k_p.k_eval(bu)? / params.p;
    let cv = model.k_q.k_eval(bv)? / params.q;
    kp.apply_into(u, du);
    kq.apply_into(v, dv);
    let sigma = params.sigma;
    for i in 0..u.len() {
        let (a, b) = (u[i], v[i]);
        let t = (a * b).abs();
        // |v|^σ |u|^{σ−2} u log|uv| = |uv|^σ log|uv| / u
        let (fu, fv) = if t == 0.0 {
            (0.0, 0.0)
        } else {
            let w = t.powf(sigma) * t.ln();
            (w / a, w / b)
        };
        du[i] = -cu * du[i] + fu;
        dv[i] = -cv * dv[i] + fv;
    }
    Ok(())
}

pub fn rhs(model: &Model, pair: &FieldPair) -> Result<(GridField, GridField), ModelError> {
    let m = pair.u.len();
    let mut du = vec![0.0; m];
    let mut dv = vec![0.0; m];
    rhs_into(model, pair.u.values(), pair.v.values(), &mut du, &mut dv)?;
    Ok((pair.u.with_values(du)?, pair.v.with_values(dv)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorControls {
    pub t_end: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub rtol: f64,
    pub blowup_threshold: f64,
    pub max_steps: usize,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        IntegratorControls {
            t_end: 10.0,
            dt_init: 1e-4,
            dt_min: 1e-12,
            rtol: 1e-8,
            blowup_threshold: 1e8,
            max_steps: 500_000,
        }
    }
}

impl IntegratorControls {
    fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [
            ("t_end", self.t_end),
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("rtol", self.rtol),
            ("blowup_threshold", self.blowup_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DynamicsError::BadControl(name));
            }
        }
        if self.max_steps == 0 {
            return Err(DynamicsError::BadControl("max_steps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    /// Step that produced this record; 0 for the initial record.
    pub dt: f64,
    pub energy: EnergyReport,
    /// `‖du‖₂²` at this state.
    pub du_sq: f64,
    pub dv_sq: f64,
    pub maxabs_u: f64,
    pub maxabs_v: f64,
    /// `∫₀ᵗ (‖u_s‖² + ‖v_s‖²) ds`, integrated alongside the state.
    pub dissipation: f64,
    /// `∫₀ᵗ (‖u‖² + ‖v‖²) ds`.
    pub mass_integral: f64,
}

impl StepRecord {
    pub fn l2sq(&self) -> f64 {
        self.energy.l2_u.powi(2) + self.energy.l2_v.powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    CompletedHorizon,
    BlowUp,
    StepUnderflow,
    StepBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    NormThreshold,
    NonFinite,
    DtFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    /// Time of detection for blow-up, or where stepping stopped otherwise.
    pub t_stop: f64,
    pub trigger: Option<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub records: Vec<StepRecord>,
    pub outcome: RunOutcome,
    pub rejected_steps: usize,
    pub final_u: Vec<f64>,
    pub final_v: Vec<f64>,
}

impl SimTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy.phi).collect()
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Augmented system `y = [u, v, D, I]`.
struct Flow<'a> {
    model: &'a Model,
    m: usize,
    hn: f64,
}

impl Flow<'_> {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let m = self.m;
        let (u, rest) = y.split_at(m);
        let v = &rest[..m];
        let (du, rest_out) = out.split_at_mut(m);
        let (dv, tail) = rest_out.split_at_mut(m);
        rhs_into(self.model, u, v, du, dv)?;
        let dsq: f64 = du.iter().chain(dv.iter()).map(|x| x * x).sum();
        let msq: f64 = u.iter().chain(v).map(|x| x * x).sum();
        tail[0] = dsq * self.hn;
        tail[1] = msq * self.hn;
        Ok(())
    }

    fn record(&self, t: f64, dt: f64, y: &[f64], f: &[f64]) -> Result<StepRecord, ModelError> {
        let m = self.m;
        let (u, v) = (&y[..m], &y[m..2 * m]);
        let maxabs = |s: &[f64]| s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let sq = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>() * self.hn;
        Ok(StepRecord {
            t,
            dt,
            energy: self.model.energy_values(u, v)?,
            du_sq: sq(&f[..m]),
            dv_sq: sq(&f[m..2 * m]),
            maxabs_u: maxabs(u),
            maxabs_v: maxabs(v),
            dissipation: y[2 * m],
            mass_integral: y[2 * m + 1],
        })
    }

    /// Per-component error scale: field blocks share `1 + max|·|`, the two
    /// integrals use their own magnitude.
    fn error_norm(&self, y0: &[f64], y1: &[f64], err: &[f64], rtol: f64) -> f64 {
        let m = self.m;
        let field_scale = y0[..2 * m]
            .iter()
            .chain(&y1[..2 * m])
            .fold(0.0f64, |a, x| a.max(x.abs()));
        let mut worst =
            err[..2 * m].iter().fold(0.0f64, |a, e| a.max(e.abs())) / (rtol * (1.0 + field_scale));
        for k in [2 * m, 2 * m + 1] {
            let scale = y0[k].abs().max(y1[k].abs());
            worst = worst.max(err[k].abs() / (rtol * (1.0 + scale)));
        }
        worst
    }
}

/// Adaptive Dormand–Prince 5(4) with first-same-as-last reuse.
///
/// A record is stored at every accepted step. The run stops at `t_end`, when
/// the sup norm of either component exceeds `blowup_threshold`, when the
/// step falls below `dt_min`, or after `max_steps` accepted steps. A step
/// whose stages produce non-finite values is rejected and retried with a
/// smaller step; if that drives the step under `dt_min` the trigger is
/// reported as non-finite.
pub fn integrate(
    model: &Model,
    pair: &FieldPair,
    controls: &IntegratorControls,
) -> Result<SimTrace, DynamicsError> {
    controls.validate()?;
    let m = pair.u.len();
    let n = 2 * m + 2;
    let flow = Flow {
        model,
        m,
        hn: model.grid().cell_measure(),
    };
    let mut y = Vec::with_capacity(n);
    y.extend_from_slice(pair.u.values());
    y.extend_from_slice(pair.v.values());
    y.extend_from_slice(&[0.0, 0.0]);

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    flow.eval(&y, &mut k[0])?;
    let mut records = vec![flow.record(0.0, 0.0, &y, &k[0])?];
    let mut t = 0.0;
    let mut dt = controls.dt_init.min(controls.t_end);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    let mut last_nonfinite = false;

    let finish = |kind, trigger, t_stop, records, rejected, y: &[f64]| SimTrace {
        records,
        outcome: RunOutcome {
            kind,
            t_stop,
            trigger,
        },
        rejected_steps: rejected,
        final_u: y[..m].to_vec(),
        final_v: y[m..2 * m].to_vec(),
    };

    loop {
        if t >= controls.t_end {
            return Ok(finish(
                OutcomeKind::CompletedHorizon,
                None,
                t,
                records,
                rejected,
                &y,
            ));
        }
        if accepted >= controls.max_steps {
            return Ok(finish(
                OutcomeKind::StepBudget,
                None,
                t,
                records,
                rejected,
                &y,
            ));
        }
        if dt < controls.dt_min {
            let last = records.last().expect("initial record");
            let growing = records.len() >= 2 && {
                let prev = &records[records.len() - 2];
                last.l2sq() > prev.l2sq()
            };
            let (kind, trigger) = if last_nonfinite {
                (OutcomeKind::BlowUp, Trigger::NonFinite)
            } else if last.energy.psi_consistent < 0.0 || growing {
                (OutcomeKind::BlowUp, Trigger::DtFloor)
            } else {
                (OutcomeKind::StepUnderflow, Trigger::DtFloor)
            };
            return Ok(finish(kind, Some(trigger), t, records, rejected, &y));
        }
        let h = dt.min(controls.t_end - t);
        let mut finite = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                stage[i] = y[i] + h * acc;
            }
            if stage.iter().any(|x| !x.is_finite()) {
                finite = false;
                break;
            }
            flow.eval(&stage, &mut k[s])?;
            if k[s].iter().any(|x| !x.is_finite()) {
                finite = false;
                break;
            }
        }
        if !finite {
            rejected += 1;
            last_nonfinite = true;
            dt = h * 0.25;
            continue;
        }
        // stage 7 sits at t + h with the 5th-order weights, so `stage` is y_{n+1}
        y_new.copy_from_slice(&stage);
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += (B5[s] - B4[s]) * k[s][i];
            }
            err[i] = h * e;
        }
        let en = flow.error_norm(&y, &y_new, &err, controls.rtol);
        if !en.is_finite() {
            rejected += 1;
            last_nonfinite = true;
            dt = h * 0.25;
            continue;
        }
        let factor = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };
        if en > 1.0 {
            rejected += 1;
            last_nonfinite = false;
            dt = h * factor.min(1.0);
            continue;
        }
        last_nonfinite = false;
        t = if controls.t_end - t - h <= 1e-14 * controls.t_end {
            controls.t_end
        } else {
            t + h
        };
        std::mem::swap(&mut y, &mut y_new);
        k.swap(0, 6);
        accepted += 1;
        let rec = flow.record(t, h, &y, &k[0])?;
        let over =
            rec.maxabs_u > controls.blowup_threshold || rec.maxabs_v > controls.blowup_threshold;
        let nonfinite = !rec.energy.phi.is_finite();
        records.push(rec);
        if over || nonfinite {
            let trigger = if over {
                Trigger::NormThreshold
            } else {
                Trigger::NonFinite
            };
            return Ok(finish(
                OutcomeKind::BlowUp,
                Some(trigger),
                t,
                records,
                rejected,
                &y,
            ));
        }
        dt = h * factor;
    }
}

/// Largest step-to-step rise of φ, in units of `1 + |φ(0)|`.
pub fn max_energy_rise(trace: &SimTrace) -> f64 {
    let Some(first) = trace.records.first() else {
        return 0.0;
    };
    let scale = 1.0 + first.energy.phi.abs();
    trace
        .records
        .windows(2)
        .map(|w| (w[1].energy.phi - w[0].energy.phi) / scale)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Steps where `‖u‖² + ‖v‖²` drops by more than `slack·(1 + ‖·‖²)` although
/// `ψ_consistent < 0` at both ends. Returns the record indices.
pub fn norm_growth_violations(trace: &SimTrace, slack: f64) -> Vec<usize> {
    trace
        .records
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].energy.psi_consistent < 0.0 && w[1].energy.psi_consistent < 0.0)
        .filter(|(_, w)| w[1].l2sq() < w[0].l2sq() - slack * (1.0 + w[0].l2sq()))
        .map(|(i, _)| i + 1)
        .collect()
}

/// `r(t) = D(t) + φ(t) − φ(0)` per record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSeries {
    pub residual: Vec<f64>,
    pub max_abs: f64,
    pub max_positive: f64,
}

pub fn energy_identity_residual(trace: &SimTrace) -> Result<ResidualSeries, DynamicsError> {
    if trace.records.len() < 2 {
        return Err(DynamicsError::ShortTrace {
            needed: 2,
            got: trace.records.len(),
        });
    }
    let phi0 = trace.records[0].energy.phi;
    let residual: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.dissipation + r.energy.phi - phi0)
        .collect();
    let max_abs = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let max_positive = residual.iter().fold(0.0f64, |a, r| a.max(*r));
    Ok(ResidualSeries {
        residual,
        max_abs,
        max_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    Exponential,
    Polynomial,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub kind: FitKind,
    /// `μ` in `φ ≈ A e^{−μt}`.
    pub exp_rate: f64,
    pub exp_residual: f64,
    /// `γ` in `φ ≈ A (1+t)^{−γ}`.
    pub poly_exponent: f64,
    pub poly_residual: f64,
    /// Residual of the rejected model over that of the chosen one.
    pub ratio: f64,
    pub tail_records: usize,
    pub note: Option<String>,
}

/// Least-squares line through `(x, y)`; returns `(slope, rms residual)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (my + slope * (a - mx));
            r * r
        })
        .sum();
    (slope, (rss / n).sqrt())
}

/// Fits exponential and polynomial decay to the last `tail_fraction` of a
/// `(t, φ)` series and keeps the better model.
pub fn decay_fit_series(
    t: &[f64],
    phi: &[f64],
    tail_fraction: f64,
) -> Result<DecayFit, DynamicsError> {
    if t.len() != phi.len() {
        return Err(DynamicsError::LengthMismatch(t.len(), phi.len()));
    }
    let frac = tail_fraction.clamp(0.0, 1.0);
    let start = ((1.0 - frac) * t.len() as f64).floor() as usize;
    let (tt, pp) = (&t[start.min(t.len())..], &phi[start.min(t.len())..]);
    let inconclusive = |note: &str, n: usize| DecayFit {
        kind: FitKind::Inconclusive,
        exp_rate: f64::NAN,
        exp_residual: f64::NAN,
        poly_exponent: f64::NAN,
        poly_residual: f64::NAN,
        ratio: f64::NAN,
        tail_records: n,
        note: Some(note.to_string()),
    };
    if tt.len() < 3 {
        return Ok(inconclusive("fewer than 3 tail records", tt.len()));
    }
    if pp.iter().any(|&x| !(x > 0.0)) {
        return Ok(inconclusive("non-positive energy in tail", tt.len()));
    }
    let logs: Vec<f64> = pp.iter().map(|x| x.ln()).collect();
    let log_t: Vec<f64> = tt.iter().map(|x| x.ln_1p()).collect();
    let (se, re) = line_fit(tt, &logs);
    let (sp, rp) = line_fit(&log_t, &logs);
    let spread = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - logs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut fit = DecayFit {
        kind: FitKind::Inconclusive,
        exp_rate: -se,
        exp_residual: re,
        poly_exponent: -sp,
        poly_residual: rp,
        ratio: 1.0,
        tail_records: tt.len(),
        note: None,
    };
    if spread <= 1e-12 * (1.0 + logs[0].abs()) {
        fit.note = Some("energy constant on tail; both slopes vanish".to_string());
        return Ok(fit);
    }
    let (better, worse, kind) = if re < rp {
        (re, rp, FitKind::Exponential)
    } else {
        (rp, re, FitKind::Polynomial)
    };
    if worse - better <= 1e-12 * worse {
        fit.note = Some("fits tie".to_string());
        return Ok(fit);
    }
    fit.kind = kind;
    fit.ratio = if better > 0.0 {
        worse / better
    } else {
        f64::INFINITY
    };
    Ok(fit)
}

pub fn decay_fit(trace: &SimTrace, tail_fraction: f64) -> Result<DecayFit, DynamicsError> {
    decay_fit_series(&trace.times(), &trace.phis(), tail_fraction)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KomornikReport {
    pub hypothesis_holds: bool,
    pub conclusion_holds: bool,
    /// Sample times where the integral hypothesis fails.
    pub hypothesis_violations: Vec<f64>,
    /// Sample times where the decay envelope is exceeded.
    pub conclusion_violations: Vec<f64>,
    /// Tail integrals `∫_t^∞ R^{1+η}` per sample.
    pub tail_integrals: Vec<f64>,
}

const KOMORNIK_SLACK: f64 = 1e-10;

/// Integral of an exponential through `(0, g0)` and `(ds, g1)`.
fn exp_panel(g0: f64, g1: f64, ds: f64) -> f64 {
    if g0 <= 0.0 || g1 <= 0.0 {
        return 0.5 * (g0 + g1) * ds;
    }
    let r = g1 / g0;
    let lr = r.ln();
    if lr.abs() < 1e-12 {
        0.5 * (g0 + g1) * ds
    } else {
        (g1 - g0) * ds / lr
    }
}

/// Checks the integral inequality `∫_t^∞ R^{1+η} ≤ (1/C) R(0)^η R(t)` at every
/// sample and the decay envelope it implies.
///
/// Integrals are taken in the clock `s` where the extremal decay is a pure
/// exponential (`s = t` for `η = 0`, `s = log(1+ηCt)/(ηC)` otherwise), with
/// piecewise-exponential interpolation between samples and the last panel's
/// rate extended to infinity. A non-decaying last panel makes the tail
/// diverge, so the hypothesis fails there.
pub fn komornik_check(
    t: &[f64],
    r: &[f64],
    eta: f64,
    c: f64,
) -> Result<KomornikReport, DynamicsError> {
    if t.len() != r.len() {
        return Err(DynamicsError::LengthMismatch(t.len(), r.len()));
    }
    if t.len() < 2 {
        return Err(DynamicsError::ShortTrace {
            needed: 2,
            got: t.len(),
        });
    }
    if !(c > 0.0) {
        return Err(DynamicsError::BadRate(c));
    }
    if !(eta >= 0.0) {
        return Err(DynamicsError::BadEta(eta));
    }
    for i in 0..r.len() {
        if r[i] < 0.0 || (i > 0 && r[i] > r[i - 1]) {
            return Err(DynamicsError::NotNonIncreasing(i));
        }
    }
    let clock = |x: f64| {
        if eta == 0.0 {
            x
        } else {
            (eta * c * x).ln_1p() / (eta * c)
        }
    };
    let g: Vec<f64> = t
        .iter()
        .zip(r)
        .map(|(&x, &rv)| {
            let base = rv.powf(1.0 + eta);
            if eta == 0.0 {
                base
            } else {
                base * (1.0 + eta * c * x)
            }
        })
        .collect();
    let s: Vec<f64> = t.iter().map(|&x| clock(x)).collect();
    let n = t.len();
    let (gl, gp) = (g[n - 1], g[n - 2]);
    let ds_last = s[n - 1] - s[n - 2];
    let mut tail = if gl == 0.0 {
        0.0
    } else if gp > gl && ds_last > 0.0 {
        let rate = (gp / gl).ln() / ds_last;
        gl / rate
    } else {
        f64::INFINITY
    };
    let mut tails = vec![0.0; n];
    tails[n - 1] = tail;
    for i in (0..n - 1).rev() {
        tail += exp_panel(g[i], g[i + 1], s[i + 1] - s[i]);
        tails[i] = tail;
    }
    let r0 = r[0];
    let mut hyp = Vec::new();
    let mut concl = Vec::new();
    for i in 0..n {
        let bound = r0.powf(eta) * r[i] / c;
        if !(tails[i] <= bound * (1.0 + KOMORNIK_SLACK)) {
            hyp.push(t[i]);
        }
        let env = if eta == 0.0 {
            r0 * (1.0 - c * t[i]).exp()
        } else {
            r0 * ((1.0 + eta) / (1.0 + eta * c * t[i])).powf(1.0 / eta)
        };
        if r[i] > env * (1.0 + KOMORNIK_SLACK) {
            concl.push(t[i]);
        }
    }
    Ok(KomornikReport {
        hypothesis_holds: hyp.is_empty(),
        conclusion_holds: concl.is_empty(),
        hypothesis_violations: hyp,
        conclusion_violations: concl,
        tail_integrals: tails,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevineReport {
    pub t: Vec<f64>,
    pub l: Vec<f64>,
    pub l_prime: Vec<f64>,
    pub l_second: Vec<f64>,
    /// `L″L − (σ/2)(L′)²`.
    pub g: Vec<f64>,
    /// Most negative `G / (L″L + (σ/2)L′²)`; 0 if `G ≥ 0` throughout.
    pub worst_relative: f64,
    /// `L(0)/((σ/2 − 1)L′(0))`.
    pub horizon_estimate: f64,
    /// True when the trace did not end in blow-up.
    pub informational: bool,
}

/// Concavity functional along a trace with
/// `L(t) = ∫₀ᵗ(‖u‖²+‖v‖²) + (T−t)(‖u₀‖²+‖v₀‖²) + (at+b)²`,
/// `L′ = ‖u‖²+‖v‖² − (‖u₀‖²+‖v₀‖²) + 2a(at+b)` and `L″ = −2ψ + 2a²`.
pub fn levine_diagnostic(
    trace: &SimTrace,
    a: f64,
    b: f64,
    horizon: f64,
    sigma: f64,
) -> Result<LevineReport, DynamicsError> {
    if !(a > 0.0 && b > 0.0 && horizon > 0.0 && sigma > 2.0) {
        return Err(DynamicsError::BadLevine);
    }
    let first = trace
        .records
        .first()
        .ok_or(DynamicsError::ShortTrace { needed: 1, got: 0 })?;
    let e0 = first.l2sq();
    let alpha = sigma / 2.0;
    let mut out = LevineReport {
        t: Vec::new(),
        l: Vec::new(),
        l_prime: Vec::new(),
        l_second: Vec::new(),
        g: Vec::new(),
        worst_relative: 0.0,
        horizon_estimate: 0.0,
        informational: trace.outcome.kind != OutcomeKind::BlowUp,
    };
    for rec in &trace.records {
        let t = rec.t;
        let lin = a * t + b;
        let l = rec.mass_integral + (horizon - t) * e0 + lin * lin;
        let lp = rec.l2sq() - e0 + 2.0 * a * lin;
        let lpp = -2.0 * rec.energy.psi_consistent + 2.0 * a * a;
        let g = lpp * l - alpha * lp * lp;
        let scale = (lpp * l).abs() + alpha * lp * lp;
        if scale > 0.0 {
            out.worst_relative = out.worst_relative.min(g / scale);
        }
        out.t.push(t);
        out.l.push(l);
        out.l_prime.push(lp);
        out.l_second.push(lpp);
        out.g.push(g);
    }
    out.horizon_estimate = out.l[0] / ((alpha - 1.0) * out.l_prime[0]);
    Ok(out)
}

pub const TRACE_HEADER: &str = "t,dt,phi,psi_consistent,psi_printed,bracket_u,bracket_v,coupling_mass,log_coupling,l2_u,l2_v,maxabs_u,maxabs_v,D,residual";

pub fn write_trace_csv<W: Write>(trace: &SimTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    let phi0 = trace.records.first().map(|r| r.energy.phi).unwrap_or(0.0);
    for r in &trace.records {
        let e = &r.energy;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.dt,
            e.phi,
            e.psi_consistent,
            e.psi_printed,
            e.bracket_u,
            e.bracket_v,
            e.coupling_mass,
            e.log_coupling,
            e.l2_u,
            e.l2_v,
            r.maxabs_u,
            r.maxabs_v,
            r.dissipation,
            r.dissipation + e.phi - phi0
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        build_grid, inner, random_smooth_field, sample_field, validate_params, Preset, RawParams,
        ValidationMode,
    };
    use crate::kirchhoff::KirchhoffFn;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn model(nodes: usize) -> Model {
        let params = validate_params(
            RawParams {
                n: 1,
                s: 0.5,
                p: 3.0,
                q: 3.5,
                sigma: 4.0,
                beta: 0.0,
            },
            ValidationMode::Strict,
        )
        .unwrap();
        let g = Arc::new(build_grid(&[1.0], &[nodes]).unwrap());
        let k = KirchhoffFn::constant(1.0).unwrap();
        Model::new(params, g, k.clone(), k).unwrap()
    }

    fn sine_pair(m: &Model, amp: f64) -> FieldPair {
        FieldPair::new(
            sample_field(m.grid(), Preset::Sine, amp),
            sample_field(m.grid(), Preset::Sine, amp),
        )
        .unwrap()
    }

    #[test]
    fn rhs_of_zero_is_zero() {
        let m = model(8);
        let (du, dv) = rhs(&m, &sine_pair(&m, 0.0)).unwrap();
        assert!(du.is_zero() && dv.is_zero());
    }

    #[test]
    fn rhs_without_v_is_pure_diffusion() {
        let m = model(12);
        let u = sample_field(m.grid(), Preset::Bump, 1.3);
        let pair = FieldPair::new(u.clone(), GridField::zeros(Arc::clone(m.grid()))).unwrap();
        let (du, dv) = rhs(&m, &pair).unwrap();
        let lu = m.kernel_p().apply(&u).unwrap();
        for (a, b) in du.values().iter().zip(lu.values()) {
            assert!((a + b / 3.0).abs() <= 1e-14 * (1.0 + b.abs()));
        }
        assert!(dv.is_zero());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn energy_chain(seed in any::<u64>(), amp in 0.1f64..3.0) {
            let m = model(16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_smooth_field(m.grid(), 4, &mut rng).scaled(amp);
            let v = random_smooth_field(m.grid(), 4, &mut rng).scaled(amp);
            let pair = FieldPair::new(u, v).unwrap();
            let (du, dv) = rhs(&m, &pair).unwrap();
            let lhs = inner(&du, &pair.u).unwrap() + inner(&dv, &pair.v).unwrap();
            let r = m.energy(&pair).unwrap();
            prop_assert!((lhs + r.psi_consistent).abs() <= 1e-10 * (1.0 + r.psi_scale()));
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(8);
        let c = IntegratorControls {
            t_end: 1.0,
            ..Default::default()
        };
        let tr = integrate(&m, &sine_pair(&m, 0.0), &c).unwrap();
        assert_eq!(tr.outcome.kind, OutcomeKind::CompletedHorizon);
        assert!(tr
            .records
            .iter()
            .all(|r| r.maxabs_u == 0.0 && r.maxabs_v == 0.0));
        let res = energy_identity_residual(&tr).unwrap();
        assert_eq!(res.max_abs, 0.0);
    }

    #[test]
    fn small_data_decays_with_monotone_energy() {
        let m = model(16);
        let c = IntegratorControls {
            t_end: 2.0,
            ..Default::default()
        };
        let tr = integrate(&m, &sine_pair(&m, 0.5), &c).unwrap();
        assert_eq!(tr.outcome.kind, OutcomeKind::CompletedHorizon);
        assert!((tr.records.last().unwrap().t - 2.0).abs() < 1e-12);
        let phi0 = tr.records[0].energy.phi;
        for w in tr.records.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].energy.phi <= w[0].energy.phi + 1e-7 * (1.0 + phi0.abs()));
            assert!(w[1].dissipation >= w[0].dissipation);
        }
        let res = energy_identity_residual(&tr).unwrap();
        assert!(res.max_abs <= 1e-5 * (1.0 + phi0.abs()));
    }

    #[test]
    fn large_data_blows_up() {
        let m = model(16);
        let c = IntegratorControls {
            t_end: 10.0,
            ..Default::default()
        };
        let tr = integrate(&m, &sine_pair(&m, 3.0), &c).unwrap();
        assert_eq!(tr.outcome.kind, OutcomeKind::BlowUp);
        assert!(tr.outcome.t_stop < 10.0);
        for w in tr.records.windows(2) {
            if w[0].energy.psi_consistent < 0.0 {
                assert!(w[1].l2sq() >= w[0].l2sq() * (1.0 - 1e-10));
            }
        }
    }

    #[test]
    fn bad_controls_rejected() {
        let m = model(4);
        let c = IntegratorControls {
            rtol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&m, &sine_pair(&m, 1.0), &c),
            Err(DynamicsError::BadControl("rtol"))
        ));
    }

    #[test]
    fn deterministic_traces() {
        let m = model(12);
        let c = IntegratorControls {
            t_end: 0.5,
            ..Default::default()
        };
        let a = integrate(&m, &sine_pair(&m, 1.0), &c).unwrap();
        let b = integrate(&m, &sine_pair(&m, 1.0), &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_fits() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let e: Vec<f64> = t.iter().map(|x| (1.0 - 3.0 * x).exp()).collect();
        let f = decay_fit_series(&t, &e, 0.5).unwrap();
        assert_eq!(f.kind, FitKind::Exponential);
        assert!((f.exp_rate - 3.0).abs() < 0.03);
        let p: Vec<f64> = t.iter().map(|x| (1.0 + x).powi(-2)).collect();
        let f = decay_fit_series(&t, &p, 0.5).unwrap();
        assert_eq!(f.kind, FitKind::Polynomial);
        assert!((f.poly_exponent - 2.0).abs() < 0.02);
        let c = vec![0.7; t.len()];
        assert_eq!(
            decay_fit_series(&t, &c, 0.5).unwrap().kind,
            FitKind::Inconclusive
        );
        let mut neg = p.clone();
        *neg.last_mut().unwrap() = -1.0;
        assert_eq!(
            decay_fit_series(&t, &neg, 0.5).unwrap().kind,
            FitKind::Inconclusive
        );
    }

    #[test]
    fn komornik_equality_families() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.02).collect();
        let (a, c) = (2.0, 1.5);
        let r: Vec<f64> = t.iter().map(|x| a * (1.0 - c * x).exp()).collect();
        let rep = komornik_check(&t, &r, 0.0, c).unwrap();
        assert!(rep.hypothesis_holds && rep.conclusion_holds);
        let eta = 1.0;
        let r: Vec<f64> = t
            .iter()
            .map(|x| a * ((1.0 + eta) / (1.0 + eta * c * x)).powf(1.0 / eta))
            .collect();
        let rep = komornik_check(&t, &r, eta, c).unwrap();
        assert!(
            rep.hypothesis_holds && rep.conclusion_holds,
            "{:?}",
            rep.hypothesis_violations.first()
        );
        let flat = vec![1.0; t.len()];
        let rep = komornik_check(&t, &flat, 0.0, c).unwrap();
        assert!(!rep.hypothesis_holds);
        let up: Vec<f64> = t.iter().map(|x| 1.0 + x).collect();
        assert!(matches!(
            komornik_check(&t, &up, 0.0, c),
            Err(DynamicsError::NotNonIncreasing(1))
        ));
    }

    #[test]
    fn levine_initial_values() {
        let m = model(12);
        let c = IntegratorControls {
            t_end: 0.1,
            ..Default::default()
        };
        let tr = integrate(&m, &sine_pair(&m, 1.0), &c).unwrap();
        let e0 = tr.records[0].l2sq();
        let (a, b, big_t) = (0.3, 5.0, 2.0);
        let rep = levine_diagnostic(&tr, a, b, big_t, 4.0).unwrap();
        assert!((rep.l[0] - (big_t * e0 + b * b)).abs() < 1e-14);
        assert!((rep.l_prime[0] - 2.0 * a * b).abs() < 1e-14);
        assert!((rep.horizon_estimate - rep.l[0] / (1.0 * 2.0 * a * b)).abs() < 1e-12);
        assert!(rep.informational);
    }

    #[test]
    fn trace_csv_header() {
        let m = model(4);
        let c = IntegratorControls {
            t_end: 0.01,
            ..Default::default()
        };
        let tr = integrate(&m, &sine_pair(&m, 0.5), &c).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(text.lines().count(), tr.records.len() + 1);
    }
}
