//! Energy and Nehari functionals, fibering rays, the potential-well depth
//! and the classification of initial data.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fracops::{FracKernel, OpError};
use crate::grid::{
    discrete_norm, random_smooth_field, sample_field, FieldPair, GridDomain, GridError, GridField,
    ModelParams, Preset,
};
use crate::kirchhoff::{KirchhoffError, KirchhoffFn};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OpError),
    #[error(transparent)]
    Kirchhoff(#[from] KirchhoffError),
    #[error("parameter dimension N={params} does not match grid dimension {grid}")]
    DimensionMismatch { params: usize, grid: usize },
    #[error("fibering root not bracketed in [{lo:e}, {hi:e}]")]
    NotBracketed { lo: f64, hi: f64 },
    #[error("the zero pair has no fibering ray")]
    ZeroPair,
    #[error("no Nehari point found among {0} sampled directions")]
    NoNehariPoint(usize),
    #[error("seminorm of {0} vanishes")]
    ZeroSeminorm(&'static str),
    #[error("blow-up time bound needs σ > 2, got {0}")]
    SigmaTooSmall(f64),
    #[error("fibering scan needs a non-empty, positive, sorted ε grid")]
    BadScanGrid,
    #[error("embedding estimate needs r < p_s* (r = {r}, p_s* = {p_star})")]
    SupercriticalExponent { r: f64, p_star: f64 },
}

/// Which Nehari functional to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PsiVariant {
    /// `ε d/dε φ(εu, εv)` at `ε = 1`.
    #[default]
    Consistent,
    /// Full Gagliardo sums and `|uv|^{σ+1}` in the coupling term.
    Printed,
}

impl FromStr for PsiVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consistent" => Ok(PsiVariant::Consistent),
            "printed" => Ok(PsiVariant::Printed),
            other => Err(format!(
                "unknown psi variant `{other}` (expected consistent or printed)"
            )),
        }
    }
}

impl fmt::Display for PsiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsiVariant::Consistent => "consistent",
            PsiVariant::Printed => "printed",
        })
    }
}

/// Everything needed to evaluate the functionals on one grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub k_p: KirchhoffFn,
    pub k_q: KirchhoffFn,
    kernel_p: FracKernel,
    kernel_q: FracKernel,
}

impl Model {
    pub fn new(
        params: ModelParams,
        grid: Arc<GridDomain>,
        k_p: KirchhoffFn,
        k_q: KirchhoffFn,
    ) -> Result<Self, ModelError> {
        if params.n != grid.dim() {
            return Err(ModelError::DimensionMismatch {
                params: params.n,
                grid: grid.dim(),
            });
        }
        let kernel_p = FracKernel::new(Arc::clone(&grid), params.p, params.s)?;
        let kernel_q = FracKernel::new(grid, params.q, params.s)?;
        Ok(Model {
            params,
            k_p,
            k_q,
            kernel_p,
            kernel_q,
        })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        self.kernel_p.grid()
    }

    pub fn kernel_p(&self) -> &FracKernel {
        &self.kernel_p
    }

    pub fn kernel_q(&self) -> &FracKernel {
        &self.kernel_q
    }

    pub fn field(&self, values: Vec<f64>) -> Result<GridField, GridError> {
        GridField::new(Arc::clone(self.grid()), values)
    }

    pub fn pair(&self, u: Vec<f64>, v: Vec<f64>) -> Result<FieldPair, GridError> {
        FieldPair::new(self.field(u)?, self.field(v)?)
    }

    /// Fibering pieces of a pair: every functional along `ε ↦ (εu, εv)`
    /// follows from these in closed form.
    pub fn ray(&self, u: &[f64], v: &[f64]) -> Ray<'_> {
        let c = coupling_integrals(u, v, self.params.sigma, self.grid().cell_measure());
        Ray {
            model: self,
            gag_u: self.kernel_p.gagliardo_values(u),
            gag_v: self.kernel_q.gagliardo_values(v),
            coupling: c,
            l2sq: (dot_self(u) + dot_self(v)) * self.grid().cell_measure(),
        }
    }

    pub fn energy_values(&self, u: &[f64], v: &[f64]) -> Result<EnergyReport, ModelError> {
        let mut report = self.ray(u, v).report(1.0)?;
        let hn = self.grid().cell_measure();
        report.l2_u = (dot_self(u) * hn).sqrt();
        report.l2_v = (dot_self(v) * hn).sqrt();
        Ok(report)
    }

    pub fn energy(&self, pair: &FieldPair) -> Result<EnergyReport, ModelError> {
        self.check(pair)?;
        self.energy_values(pair.u.values(), pair.v.values())
    }

    fn check(&self, pair: &FieldPair) -> Result<(), ModelError> {
        if pair.u.domain().as_ref() != self.grid().as_ref()
            || pair.v.domain().as_ref() != self.grid().as_ref()
        {
            return Err(GridError::DomainMismatch.into());
        }
        Ok(())
    }
}

fn dot_self(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Nodal sums of the coupling integrand, each already multiplied by `h^N`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Coupling {
    /// `Σ |uv|^σ`
    pub mass: f64,
    /// `Σ |uv|^σ log|uv|`
    pub log: f64,
    /// `Σ |uv|^{σ+1}`
    pub mass_printed: f64,
    /// `Σ |uv|^{σ+1} log|uv|`
    pub log_printed: f64,
}

pub fn coupling_integrals(u: &[f64], v: &[f64], sigma: f64, hn: f64) -> Coupling {
    let mut c = Coupling::default();
    for (a, b) in u.iter().zip(v) {
        let t = (a * b).abs();
        if t == 0.0 {
            continue;
        }
        let ts = t.powf(sigma);
        let lt = t.ln();
        c.mass += ts;
        c.log += ts * lt;
        c.mass_printed += ts * t;
        c.log_printed += ts * t * lt;
    }
    c.mass *= hn;
    c.log *= hn;
    c.mass_printed *= hn;
    c.log_printed *= hn;
    c
}

/// `Σ |u_i|^σ |v_i|^σ log|u_i v_i| h^N` with `0·log 0 = 0`.
pub fn log_coupling(u: &GridField, v: &GridField, sigma: f64) -> Result<f64, GridError> {
    if !u.same_domain(v) {
        return Err(GridError::DomainMismatch);
    }
    Ok(coupling_integrals(u.values(), v.values(), sigma, u.domain().cell_measure()).log)
}

/// Functionals at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct EnergyReport {
    pub bracket_u: f64,
    pub bracket_v: f64,
    pub gagliardo_u: f64,
    pub gagliardo_v: f64,
    pub k_u: f64,
    pub k_v: f64,
    pub khat_u: f64,
    pub khat_v: f64,
    pub coupling_mass: f64,
    pub log_coupling: f64,
    pub phi: f64,
    pub psi_consistent: f64,
    pub psi_printed: f64,
    pub l2_u: f64,
    pub l2_v: f64,
}

impl EnergyReport {
    pub fn psi(&self, variant: PsiVariant) -> f64 {
        match variant {
            PsiVariant::Consistent => self.psi_consistent,
            PsiVariant::Printed => self.psi_printed,
        }
    }

    /// The two magnitudes whose difference forms `ψ_consistent`.
    pub fn psi_scale(&self) -> f64 {
        (self.k_u * self.bracket_u + self.k_v * self.bracket_v).abs()
            + (2.0 * self.log_coupling).abs()
    }
}

/// A pair viewed as a fibering ray.
#[derive(Debug, Clone, Copy)]
pub struct Ray<'a> {
    model: &'a Model,
    pub gag_u: f64,
    pub gag_v: f64,
    pub coupling: Coupling,
    /// `‖u‖₂² + ‖v‖₂²` of the unscaled pair.
    pub l2sq: f64,
}

impl Ray<'_> {
    pub fn is_zero(&self) -> bool {
        self.gag_u == 0.0 && self.gag_v == 0.0 && self.l2sq == 0.0
    }

    /// Functionals of `(εu, εv)`. The `l2` fields are left at zero.
    pub fn report(&self, eps: f64) -> Result<EnergyReport, ModelError> {
        let m = self.model;
        let ModelParams { p, q, sigma, .. } = m.params;
        let (gu, gv) = if eps == 1.0 {
            (self.gag_u, self.gag_v)
        } else {
            (eps.powf(p) * self.gag_u, eps.powf(q) * self.gag_v)
        };
        let (bu, bv) = (gu / p, gv / q);
        let c = &self.coupling;
        let (mass, log, log_printed) = if eps == 1.0 {
            (c.mass, c.log, c.log_printed)
        } else {
            let le = eps.ln();
            let e2s = eps.powf(2.0 * sigma);
            let e2s2 = e2s * eps * eps;
            (
                e2s * c.mass,
                e2s * (c.log + 2.0 * le * c.mass),
                e2s2 * (c.log_printed + 2.0 * le * c.mass_printed),
            )
        };
        let k_u = m.k_p.k_eval(bu)?;
        let k_v = m.k_q.k_eval(bv)?;
        let khat_u = m.k_p.k_antideriv(bu)?;
        let khat_v = m.k_q.k_antideriv(bv)?;
        Ok(EnergyReport {
            bracket_u: bu,
            bracket_v: bv,
            gagliardo_u: gu,
            gagliardo_v: gv,
            k_u,
            k_v,
            khat_u,
            khat_v,
            coupling_mass: mass,
            log_coupling: log,
            phi: khat_u / p + khat_v / q + mass / (sigma * sigma) - log / sigma,
            psi_consistent: k_u * bu + k_v * bv - 2.0 * log,
            psi_printed: k_u * gu + k_v * gv - 2.0 * log_printed,
            l2_u: 0.0,
            l2_v: 0.0,
        })
    }

    pub fn phi(&self, eps: f64) -> Result<f64, ModelError> {
        Ok(self.report(eps)?.phi)
    }

    pub fn psi(&self, eps: f64, variant: PsiVariant) -> Result<f64, ModelError> {
        Ok(self.report(eps)?.psi(variant))
    }
}

pub fn energy_phi(model: &Model, u: &GridField, v: &GridField) -> Result<EnergyReport, ModelError> {
    model.energy(&FieldPair::new(u.clone(), v.clone())?)
}

pub fn nehari_psi(
    model: &Model,
    u: &GridField,
    v: &GridField,
    variant: PsiVariant,
) -> Result<f64, ModelError> {
    Ok(energy_phi(model, u, v)?.psi(variant))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberingRow {
    pub eps: f64,
    pub phi: f64,
    pub psi_consistent: f64,
    pub psi_printed: f64,
}

pub fn fibering_scan(
    model: &Model,
    pair: &FieldPair,
    eps_grid: &[f64],
) -> Result<Vec<FiberingRow>, ModelError> {
    if eps_grid.is_empty()
        || eps_grid.iter().any(|&e| !(e > 0.0))
        || eps_grid.windows(2).any(|w| w[1] < w[0])
    {
        return Err(ModelError::BadScanGrid);
    }
    if pair.is_zero() {
        return Err(ModelError::ZeroPair);
    }
    let ray = model.ray(pair.u.values(), pair.v.values());
    eps_grid
        .iter()
        .map(|&eps| {
            let r = ray.report(eps)?;
            Ok(FiberingRow {
                eps,
                phi: r.phi,
                psi_consistent: r.psi_consistent,
                psi_printed: r.psi_printed,
            })
        })
        .collect()
}

/// `count` points geometrically spaced on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketControls {
    pub eps_min: f64,
    pub eps_max: f64,
    pub rel_tol: f64,
}

impl Default for BracketControls {
    fn default() -> Self {
        BracketControls {
            eps_min: 1e-8,
            eps_max: 1e8,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonStar {
    pub eps: f64,
    /// `ψ(ε*u, ε*v)`.
    pub residual: f64,
    /// Sum of the magnitudes of the competing terms at `ε*`.
    pub scale: f64,
}

/// Root of `ε ↦ ψ(εu, εv)`.
///
/// Starting from `ε = 1` the bracket is widened by doubling or halving until
/// the sign changes, then bisected in `log ε`.
pub fn find_epsilon_star(
    model: &Model,
    pair: &FieldPair,
    variant: PsiVariant,
    controls: &BracketControls,
) -> Result<EpsilonStar, ModelError> {
    if pair.is_zero() {
        return Err(ModelError::ZeroPair);
    }
    epsilon_star_on_ray(
        &model.ray(pair.u.values(), pair.v.values()),
        variant,
        controls,
    )
}

pub fn epsilon_star_on_ray(
    ray: &Ray<'_>,
    variant: PsiVariant,
    controls: &BracketControls,
) -> Result<EpsilonStar, ModelError> {
    let not_bracketed = ModelError::NotBracketed {
        lo: controls.eps_min,
        hi: controls.eps_max,
    };
    if ray.is_zero() {
        return Err(ModelError::ZeroPair);
    }
    let psi = |e: f64| ray.psi(e, variant);
    let (mut lo, mut hi);
    if psi(1.0)? > 0.0 {
        hi = 1.0;
        loop {
            lo = hi;
            hi *= 2.0;
            if hi > controls.eps_max {
                return Err(not_bracketed);
            }
            if psi(hi)? < 0.0 {
                break;
            }
        }
    } else {
        lo = 1.0;
        loop {
            hi = lo;
            lo *= 0.5;
            if lo < controls.eps_min {
                return Err(not_bracketed);
            }
            if psi(lo)? > 0.0 {
                break;
            }
        }
    }
    while hi / lo - 1.0 > controls.rel_tol {
        let mid = (lo * hi).sqrt();
        let val = psi(mid)?;
        if val > 0.0 {
            lo = mid;
        } else if val < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
        }
    }
    let eps = (lo * hi).sqrt();
    let r = ray.report(eps)?;
    let scale = match variant {
        PsiVariant::Consistent => r.psi_scale(),
        PsiVariant::Printed => {
            (r.k_u * r.gagliardo_u + r.k_v * r.gagliardo_v).abs()
                + (r.k_u * r.gagliardo_u + r.k_v * r.gagliardo_v - r.psi_printed).abs()
        }
    };
    Ok(EpsilonStar {
        eps,
        residual: r.psi(variant),
        scale,
    })
}

/// Direction sampling for the well-depth estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub directions: usize,
    pub seed: u64,
    /// Sine modes per axis in random directions.
    pub modes: usize,
    /// Coordinate-descent sweeps on the best direction; 0 disables refinement.
    pub refine_sweeps: usize,
}

impl Default for WellSpec {
    fn default() -> Self {
        WellSpec {
            directions: 200,
            seed: 0,
            modes: 4,
            refine_sweeps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellSample {
    pub index: usize,
    pub source: String,
    pub amplitude_ratio: f64,
    pub eps_star: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellEstimate {
    /// Smallest sampled Nehari value; an upper estimate of the true depth.
    pub d: f64,
    /// `d` before refinement.
    pub d_sampled: f64,
    pub best_u: Vec<f64>,
    pub best_v: Vec<f64>,
    pub sample_count: usize,
    pub failures: usize,
    pub samples: Vec<WellSample>,
}

impl WellEstimate {
    /// Running minimum over the samples in sampling order.
    pub fn running_min(&self) -> Vec<f64> {
        let mut cur = f64::INFINITY;
        self.samples
            .iter()
            .map(|s| {
                if let Some(phi) = s.phi {
                    cur = cur.min(phi);
                }
                cur
            })
            .collect()
    }
}

const PRESET_DIRECTIONS: [(Preset, Preset); 4] = [
    (Preset::Sine, Preset::Sine),
    (Preset::Bump, Preset::Bump),
    (Preset::Sine, Preset::Bump),
    (Preset::Bump, Preset::Sine),
];

fn direction(
    grid: &Arc<GridDomain>,
    spec: &WellSpec,
    index: usize,
) -> (String, f64, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let ratio: f64 = (rng.random_range(-1.5f64..1.5)).exp();
    if index < PRESET_DIRECTIONS.len() {
        let (a, b) = PRESET_DIRECTIONS[index];
        let u = sample_field(grid, a, 1.0).into_values();
        let v = sample_field(grid, b, ratio).into_values();
        return (format!("{a}/{b}"), ratio, u, v);
    }
    let u = random_smooth_field(grid, spec.modes, &mut rng).into_values();
    let v = random_smooth_field(grid, spec.modes, &mut rng).scaled_values(ratio);
    ("random".to_string(), ratio, u, v)
}

trait ScaledValues {
    fn scaled_values(self, f: f64) -> Vec<f64>;
}

impl ScaledValues for GridField {
    fn scaled_values(self, f: f64) -> Vec<f64> {
        self.into_values().into_iter().map(|x| x * f).collect()
    }
}

fn nehari_phi(
    model: &Model,
    u: &[f64],
    v: &[f64],
    controls: &BracketControls,
) -> Option<(f64, f64)> {
    let ray = model.ray(u, v);
    let star = epsilon_star_on_ray(&ray, PsiVariant::Consistent, controls).ok()?;
    let phi = ray.phi(star.eps).ok()?;
    phi.is_finite().then_some((star.eps, phi))
}

/// Samples direction pairs, projects each onto the Nehari set along its ray
/// and keeps the smallest energy.
///
/// Direction `k` draws from its own ChaCha stream, so the result does not
/// depend on thread scheduling.
pub fn estimate_well_depth(model: &Model, spec: &WellSpec) -> Result<WellEstimate, ModelError> {
    let grid = Arc::clone(model.grid());
    let controls = BracketControls::default();
    let work = |k: usize| {
        let (source, ratio, u, v) = direction(&grid, spec, k);
        let hit = nehari_phi(model, &u, &v, &controls);
        (
            WellSample {
                index: k,
                source,
                amplitude_ratio: ratio,
                eps_star: hit.map(|h| h.0),
                phi: hit.map(|h| h.1),
            },
            u,
            v,
        )
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = (0..spec.directions).into_par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..spec.directions).map(work).collect();

    let mut best: Option<(f64, usize)> = None;
    for (i, (s, _, _)) in results.iter().enumerate() {
        if let Some(phi) = s.phi {
            if best.is_none_or(|(b, _)| phi < b) {
                best = Some((phi, i));
            }
        }
    }
    let failures = results.iter().filter(|r| r.0.phi.is_none()).count();
    let (d_sampled, idx) = best.ok_or(ModelError::NoNehariPoint(spec.directions))?;
    let (_, bu, bv) = &results[idx];
    let eps = results[idx].0.eps_star.unwrap_or(1.0);
    let mut best_u: Vec<f64> = bu.iter().map(|x| x * eps).collect();
    let mut best_v: Vec<f64> = bv.iter().map(|x| x * eps).collect();
    let mut d = d_sampled;
    if spec.refine_sweeps > 0 {
        let (u, v, value) = refine(model, best_u, best_v, d, spec.refine_sweeps, &controls);
        best_u = u;
        best_v = v;
        d = value;
    }
    Ok(WellEstimate {
        d,
        d_sampled,
        best_u,
        best_v,
        sample_count: spec.directions,
        failures,
        samples: results.into_iter().map(|r| r.0).collect(),
    })
}

/// Coordinate descent on nodal values; every trial point is re-projected
/// onto the Nehari set and accepted only if its energy drops.
fn refine(
    model: &Model,
    mut u: Vec<f64>,
    mut v: Vec<f64>,
    mut best: f64,
    sweeps: usize,
    controls: &BracketControls,
) -> (Vec<f64>, Vec<f64>, f64) {
    let m = u.len();
    let mut step = 0.1
        * u.iter()
            .chain(&v)
            .fold(0.0f64, |a, x| a.max(x.abs()))
            .max(1e-12);
    for _ in 0..sweeps {
        let mut improved = false;
        for idx in 0..2 * m {
            for sign in [1.0, -1.0] {
                let (mut tu, mut tv) = (u.clone(), v.clone());
                if idx < m {
                    tu[idx] += sign * step;
                } else {
                    tv[idx - m] += sign * step;
                }
                if let Some((eps, phi)) = nehari_phi(model, &tu, &tv, controls) {
                    if phi < best {
                        best = phi;
                        u = tu.into_iter().map(|x| x * eps).collect();
                        v = tv.into_iter().map(|x| x * eps).collect();
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (u, v, best)
}

/// `(1/(q(β+1)) − 1/σ) / (1/p − 1/σ)`.
pub fn d_star_factor(params: &ModelParams) -> f64 {
    let ModelParams {
        p, q, sigma, beta, ..
    } = *params;
    (1.0 / (q * (beta + 1.0)) - 1.0 / sigma) / (1.0 / p - 1.0 / sigma)
}

/// `d_* = (d − C)·(1/(q(β+1)) − 1/σ)/(1/p − 1/σ)` with `C = ∫|u₀v₀|^σ / σ`.
pub fn compute_d_star(model: &Model, d: f64, pair: &FieldPair) -> f64 {
    let hn = model.grid().cell_measure();
    let c = coupling_integrals(pair.u.values(), pair.v.values(), model.params.sigma, hn).mass
        / model.params.sigma;
    d_star_from_mass(&model.params, d, c)
}

pub fn d_star_from_mass(params: &ModelParams, d: f64, c: f64) -> f64 {
    (d - c) * d_star_factor(params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogCouplingGap {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; non-negative when the bound holds.
    pub slack: f64,
    pub checked: bool,
    pub note: Option<String>,
}

/// Compares the log-coupling integral with its seminorm bound.
///
/// Seminorms are `gagliardo_sum^{1/r}` for `r ∈ {p, q}`. The check is
/// skipped when either critical exponent is infinite.
pub fn lemma33_gap(
    model: &Model,
    pair: &FieldPair,
    s_const: f64,
) -> Result<LogCouplingGap, ModelError> {
    let params = &model.params;
    let (u, v) = (pair.u.values(), pair.v.values());
    let grid = Arc::clone(model.grid());
    let kp = model.kernel_p();
    let kq = model.kernel_q();
    let semi_up = kp.gagliardo_values(u).powf(1.0 / params.p);
    let semi_vq = kq.gagliardo_values(v).powf(1.0 / params.q);
    if semi_up == 0.0 {
        return Err(ModelError::ZeroSeminorm("u"));
    }
    if semi_vq == 0.0 {
        return Err(ModelError::ZeroSeminorm("v"));
    }
    let semi_vp = kp.gagliardo_values(v).powf(1.0 / params.p);
    let semi_uq = kq.gagliardo_values(u).powf(1.0 / params.q);
    let hn = grid.cell_measure();
    let sigma = params.sigma;
    let lhs = coupling_integrals(u, v, sigma, hn).log;
    let int_sigma = |w: &[f64]| w.iter().map(|x| x.abs().powf(sigma)).sum::<f64>() * hn;
    let (ps, qs) = (params.p_star(), params.q_star());
    let mut rhs = semi_up.ln() * int_sigma(u) + semi_vq.ln() * int_sigma(v);
    let mut power_terms = semi_up.powf(sigma) + semi_vq.powf(sigma);
    let checked = ps.is_finite() && qs.is_finite();
    if checked {
        power_terms += semi_up.powf(ps) + semi_vp.powf(ps) + semi_uq.powf(qs) + semi_vq.powf(qs);
    }
    rhs += s_const * power_terms;
    Ok(LogCouplingGap {
        lhs,
        rhs,
        slack: rhs - lhs,
        checked,
        note: (!checked).then(|| "critical exponent infinite; bound not checked".to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub samples: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            samples: 64,
            ascent_steps: 200,
            seed: 0,
        }
    }
}

fn embedding_ratio(kernel: &FracKernel, values: &[f64], r: f64) -> Option<f64> {
    let g = kernel.gagliardo_values(values);
    if !(g > 0.0) {
        return None;
    }
    let f = GridField::new(Arc::clone(kernel.grid()), values.to_vec()).ok()?;
    Some(discrete_norm(&f, r).ok()? / g.powf(1.0 / kernel.p()))
}

/// Lower bound for the embedding constant `‖u‖_r ≤ S [u]_{s,p}`: the best
/// ratio over presets, random smooth fields and a random-perturbation ascent
/// from the best of them.
pub fn estimate_embedding_constant(
    grid: &Arc<GridDomain>,
    p: f64,
    s: f64,
    r: f64,
    spec: &EmbeddingSpec,
) -> Result<f64, ModelError> {
    let p_star = crate::grid::critical_exponent(grid.dim(), s, p);
    if !(r < p_star) || r < 1.0 {
        return Err(ModelError::SupercriticalExponent { r, p_star });
    }
    let kernel = FracKernel::new(Arc::clone(grid), p, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |vals: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if let Some(ratio) = embedding_ratio(&kernel, &vals, r) {
            if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
                *best = Some((ratio, vals));
            }
        }
    };
    for preset in [Preset::Sine, Preset::Bump, Preset::Indicator] {
        consider(sample_field(grid, preset, 1.0).into_values(), &mut best);
    }
    for _ in 0..spec.samples {
        consider(
            random_smooth_field(grid, 4, &mut rng).into_values(),
            &mut best,
        );
    }
    let (mut value, mut vals) = best.ok_or(GridError::Dimension(0))?;
    let mut step = 0.1;
    for _ in 0..spec.ascent_steps {
        let trial: Vec<f64> = vals
            .iter()
            .map(|x| x + step * rng.random_range(-1.0..1.0))
            .collect();
        match embedding_ratio(&kernel, &trial, r) {
            Some(ratio) if ratio > value => {
                value = ratio;
                vals = trial;
            }
            _ => step *= 0.9,
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    GlobalDecay,
    BlowUp,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    Exponential,
    Polynomial,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedDecay {
    pub kind: DecayKind,
    /// Exponent of the `(1 + t)` envelope for the polynomial case.
    pub exponent: Option<f64>,
}

/// Decay regime from `q` and `β`: exponential when `q ≤ 2/(β+1)`.
pub fn predicted_decay(params: &ModelParams) -> PredictedDecay {
    let qb = params.q * (params.beta + 1.0);
    if qb <= 2.0 {
        PredictedDecay {
            kind: DecayKind::Exponential,
            exponent: None,
        }
    } else {
        PredictedDecay {
            kind: DecayKind::Polynomial,
            exponent: Some(qb / (qb - 2.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub phi0: f64,
    /// `None` at the origin, where the Nehari functional is excluded.
    pub psi0: Option<f64>,
    pub psi_variant: PsiVariant,
    pub d: f64,
    pub d_star: f64,
    pub predicted_decay: PredictedDecay,
    /// `None` encodes `+∞`.
    pub t_max_bound: Option<f64>,
    pub note: Option<String>,
}

/// Places the initial pair relative to the (estimated) well.
pub fn classify_initial_data(
    model: &Model,
    pair: &FieldPair,
    d: f64,
    variant: PsiVariant,
) -> Result<Classification, ModelError> {
    let report = model.energy(pair)?;
    let d_star = compute_d_star(model, d, pair);
    let na = PredictedDecay {
        kind: DecayKind::NotApplicable,
        exponent: None,
    };
    if pair.is_zero() {
        return Ok(Classification {
            verdict: Verdict::Indeterminate,
            phi0: report.phi,
            psi0: None,
            psi_variant: variant,
            d,
            d_star,
            predicted_decay: na,
            t_max_bound: None,
            note: Some("zero initial data: origin excluded, psi undefined".to_string()),
        });
    }
    let phi0 = report.phi;
    let psi0 = report.psi(variant);
    let sigma = model.params.sigma;
    let l2sq = report.l2_u.powi(2) + report.l2_v.powi(2);
    let (verdict, predicted, bound) = if phi0 < d_star && psi0 >= 0.0 {
        (Verdict::GlobalDecay, predicted_decay(&model.params), None)
    } else if phi0 < d_star {
        let bound = blowup_time_bound(l2sq, phi0, d_star, sigma)
            .ok()
            .filter(|b| b.is_finite());
        (Verdict::BlowUp, na, bound)
    } else {
        (Verdict::Indeterminate, na, None)
    };
    let note =
        (!model.params.theorem_regime).then(|| "parameters outside the theorem regime".to_string());
    Ok(Classification {
        verdict,
        phi0,
        psi0: Some(psi0),
        psi_variant: variant,
        d,
        d_star,
        predicted_decay: predicted,
        t_max_bound: bound,
        note,
    })
}

/// `4(σ−1)(‖u₀‖² + ‖v₀‖²) / (σ (d_* − φ₀)(σ−2)²)`, or `+∞` when `d_* ≤ φ₀`.
pub fn blowup_time_bound(l2sq: f64, phi0: f64, d_star: f64, sigma: f64) -> Result<f64, ModelError> {
    if !(sigma > 2.0) {
        return Err(ModelError::SigmaTooSmall(sigma));
    }
    if d_star <= phi0 {
        return Ok(f64::INFINITY);
    }
    Ok(4.0 * (sigma - 1.0) * l2sq / (sigma * (d_star - phi0) * (sigma - 2.0).powi(2)))
}

/// Scalar logarithm bounds: for `t > 1`, `log t ≤ t^η/(ηe)`; for
/// `t ∈ (0, 1]`, `t^η |log t| ≤ 1/(ηe)`. Returns `(lhs, rhs)`.
pub fn log_bound(t: f64, eta: f64) -> (f64, f64) {
    let e = std::f64::consts::E;
    if t > 1.0 {
        (t.ln(), t.powf(eta) / (eta * e))
    } else {
        (t.powf(eta) * t.ln().abs(), 1.0 / (eta * e))
    }
}

/// Lower bound `φ − ψ/σ ≥ (1/(q(β+1)) − 1/σ)(K_u B_u + K_v B_v)` in the
/// consistent convention. Returns `(lhs, rhs)`.
pub fn lemma35_lower_bound(report: &EnergyReport, params: &ModelParams) -> (f64, f64) {
    let coef = 1.0 / (params.q * (params.beta + 1.0)) - 1.0 / params.sigma;
    (
        report.phi - report.psi_consistent / params.sigma,
        coef * (report.k_u * report.bracket_u + report.k_v * report.bracket_v),
    )
}
