//! Box domains, cell-centred uniform grids and nodal fields.
//!
//! A [`GridField`] stores one value per cell centre. The function it
//! represents is understood to vanish everywhere outside the box, so no
//! ghost nodes are stored and every quadrature is a weighted sum over nodes.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw exponent tuple as it appears in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    /// Every inequality of the admissibility condition must hold.
    #[default]
    Strict,
    /// Only the basic ranges are enforced; used for kernel-level work.
    OperationsOnly,
}

/// One named inequality of the admissibility condition on `(N, s, p, q, σ, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    MaxBelowSigma,
    SigmaPlusOneBelowPStar,
    TwoSigmaBelowP,
    TwoSigmaBelowQ,
    TwoSigmaBelowPStar,
    TwoSigmaBelowQStar,
    OneBelowP,
    PBelowQ,
    QBelowSigma,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::MaxBelowSigma => "max(2, p(β+1), q(β+1)) < σ",
            Inequality::SigmaPlusOneBelowPStar => "σ + 1 < p_s*",
            Inequality::TwoSigmaBelowP => "2σ ≤ p(1 + 2/N)",
            Inequality::TwoSigmaBelowQ => "2σ ≤ q(1 + 2/N)",
            Inequality::TwoSigmaBelowPStar => "2σ ≤ p_s*",
            Inequality::TwoSigmaBelowQStar => "2σ ≤ q_s*",
            Inequality::OneBelowP => "1 < p",
            Inequality::PBelowQ => "p < q",
            Inequality::QBelowSigma => "q < σ",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` must be finite")]
    NonFinite { name: &'static str },
    #[error("spatial dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("fractional order s must lie in (0, 1), got {0}")]
    FractionalOrder(f64),
    #[error("exponent `{name}` must exceed 1, got {value}")]
    ExponentTooSmall { name: &'static str, value: f64 },
    #[error("Kirchhoff index β must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("admissibility condition violated: {0}")]
    Violated(Inequality),
}

/// Validated exponent/geometry tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub beta: f64,
    /// True when every inequality of the admissibility condition holds.
    pub theorem_regime: bool,
}

/// Fractional critical exponent `N r / (N − s r)`, or `+∞` when `N ≤ s r`.
pub fn critical_exponent(n: usize, s: f64, r: f64) -> f64 {
    let nf = n as f64;
    if nf > s * r {
        nf * r / (nf - s * r)
    } else {
        f64::INFINITY
    }
}

impl ModelParams {
    pub fn p_star(&self) -> f64 {
        critical_exponent(self.n, self.s, self.p)
    }

    pub fn q_star(&self) -> f64 {
        critical_exponent(self.n, self.s, self.q)
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            n: self.n,
            s: self.s,
            p: self.p,
            q: self.q,
            sigma: self.sigma,
            beta: self.beta,
        }
    }
}

/// Returns the first violated inequality, checked in a fixed order.
fn first_violation(raw: &RawParams) -> Option<Inequality> {
    let RawParams {
        n,
        s,
        p,
        q,
        sigma,
        beta,
    } = *raw;
    let p_star = critical_exponent(n, s, p);
    let q_star = critical_exponent(n, s, q);
    let lift = 1.0 + 2.0 / n as f64;
    let checks = [
        (
            2f64.max(p * (beta + 1.0)).max(q * (beta + 1.0)) < sigma,
            Inequality::MaxBelowSigma,
        ),
        (sigma + 1.0 < p_star, Inequality::SigmaPlusOneBelowPStar),
        (2.0 * sigma <= p * lift, Inequality::TwoSigmaBelowP),
        (2.0 * sigma <= q * lift, Inequality::TwoSigmaBelowQ),
        (2.0 * sigma <= p_star, Inequality::TwoSigmaBelowPStar),
        (2.0 * sigma <= q_star, Inequality::TwoSigmaBelowQStar),
        (1.0 < p, Inequality::OneBelowP),
        (p < q, Inequality::PBelowQ),
        (q < sigma, Inequality::QBelowSigma),
    ];
    checks.iter().find(|(ok, _)| !ok).map(|&(_, which)| which)
}

/// Validates an exponent tuple.
///
/// In strict mode the full admissibility condition must hold and the first
/// violated inequality is reported by name. In operations-only mode only the
/// basic ranges are checked and `theorem_regime` records whether the full
/// condition happens to hold.
pub fn validate_params(raw: RawParams, mode: ValidationMode) -> Result<ModelParams, ParamError> {
    for (name, value) in [
        ("s", raw.s),
        ("p", raw.p),
        ("q", raw.q),
        ("sigma", raw.sigma),
        ("beta", raw.beta),
    ] {
        if !value.is_finite() {
            return Err(ParamError::NonFinite { name });
        }
    }
    if raw.n != 1 && raw.n != 2 {
        return Err(ParamError::Dimension(raw.n));
    }
    if !(raw.s > 0.0 && raw.s < 1.0) {
        return Err(ParamError::FractionalOrder(raw.s));
    }
    for (name, value) in [("p", raw.p), ("q", raw.q), ("sigma", raw.sigma)] {
        if value <= 1.0 {
            return Err(ParamError::ExponentTooSmall { name, value });
        }
    }
    if raw.beta < 0.0 {
        return Err(ParamError::NegativeBeta(raw.beta));
    }
    let violation = first_violation(&raw);
    if mode == ValidationMode::Strict {
        if let Some(which) = violation {
            return Err(ParamError::Violated(which));
        }
    }
    Ok(ModelParams {
        n: raw.n,
        s: raw.s,
        p: raw.p,
        q: raw.q,
        sigma: raw.sigma,
        beta: raw.beta,
        theorem_regime: violation.is_none(),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("extent and node-count lists differ in length ({extents} vs {counts})")]
    AxisMismatch { extents: usize, counts: usize },
    #[error("axis {axis} needs at least 2 nodes, got {count}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("axis {axis} has non-positive extent {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("spacing differs between axes ({h0} vs {h1}); only uniform grids are supported")]
    NonUniformSpacing { h0: f64, h1: f64 },
    #[error("fields live on different grids")]
    DomainMismatch,
    #[error("norm exponent must be ≥ 1 or infinite, got {0}")]
    BadNormExponent(f64),
    #[error("unknown preset `{0}` (expected constant, sine, bump or indicator)")]
    UnknownPreset(String),
    #[error("value count {got} does not match node count {expected}")]
    ValueCount { expected: usize, got: usize },
}

/// Cell-centred uniform grid over the box `Π_k (0, extent_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    h: f64,
    // node-major, `dim` coordinates per node; x varies fastest
    coords: Vec<f64>,
}

pub fn build_grid(extents: &[f64], counts: &[usize]) -> Result<GridDomain, GridError> {
    let dim = extents.len();
    if dim != 1 && dim != 2 {
        return Err(GridError::Dimension(dim));
    }
    if counts.len() != dim {
        return Err(GridError::AxisMismatch {
            extents: dim,
            counts: counts.len(),
        });
    }
    for (axis, (&extent, &count)) in extents.iter().zip(counts).enumerate() {
        if count < 2 {
            return Err(GridError::TooFewNodes { axis, count });
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(GridError::BadExtent { axis, extent });
        }
    }
    let h = extents[0] / counts[0] as f64;
    if dim == 2 {
        let h1 = extents[1] / counts[1] as f64;
        if (h - h1).abs() > 1e-12 * h.max(h1) {
            return Err(GridError::NonUniformSpacing { h0: h, h1 });
        }
    }
    let total: usize = counts.iter().product();
    let mut coords = Vec::with_capacity(total * dim);
    match dim {
        1 => coords.extend((0..counts[0]).map(|i| (i as f64 + 0.5) * h)),
        _ => {
            for iy in 0..counts[1] {
                for ix in 0..counts[0] {
                    coords.push((ix as f64 + 0.5) * h);
                    coords.push((iy as f64 + 0.5) * h);
                }
            }
        }
    }
    Ok(GridDomain {
        dim,
        extents: extents.to_vec(),
        counts: counts.to_vec(),
        h,
        coords,
    })
}

impl GridDomain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Quadrature weight of a single cell, `h^N`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Lebesgue measure of the box.
    pub fn measure(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.node(i), self.node(j));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Same grid with every node shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> GridDomain {
        let mut out = self.clone();
        for node in out.coords.chunks_mut(self.dim) {
            for (x, o) in node.iter_mut().zip(offset) {
                *x += o;
            }
        }
        out
    }
}

/// Named analytic profiles used for initial data and direction sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Constant,
    /// First Dirichlet mode per axis.
    Sine,
    /// Smooth bump supported on the whole box, peak value 1.
    Bump,
    /// Indicator of the central half of the box along every axis.
    Indicator,
}

impl FromStr for Preset {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Preset::Constant),
            "sine" => Ok(Preset::Sine),
            "bump" => Ok(Preset::Bump),
            "indicator" => Ok(Preset::Indicator),
            other => Err(GridError::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Constant => "constant",
            Preset::Sine => "sine",
            Preset::Bump => "bump",
            Preset::Indicator => "indicator",
        })
    }
}

impl Preset {
    fn profile_1d(self, x: f64, extent: f64) -> f64 {
        let xi = x / extent;
        match self {
            Preset::Constant => 1.0,
            Preset::Sine => (PI * xi).sin(),
            Preset::Bump => {
                let r = 2.0 * xi - 1.0;
                if r.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
            Preset::Indicator => {
                if (0.25..=0.75).contains(&xi) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn eval(self, point: &[f64], extents: &[f64]) -> f64 {
        point
            .iter()
            .zip(extents)
            .map(|(&x, &l)| self.profile_1d(x, l))
            .product()
    }
}

/// Nodal values of a function on a grid, zero outside the box.
#[derive(Debug, Clone)]
pub struct GridField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != domain.len() {
            return Err(GridError::ValueCount {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(GridField { domain, values })
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.len();
        GridField {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.len()).map(|i| f(domain.node(i))).collect();
        GridField { domain, values }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> GridField {
        GridField {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<GridField, GridError> {
        GridField::new(Arc::clone(&self.domain), values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn same_domain(&self, other: &GridField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    /// Writes `x[,y],value` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match self.domain.dim() {
            1 => writeln!(out, "x,value")?,
            _ => writeln!(out, "x,y,value")?,
        }
        for (i, v) in self.values.iter().enumerate() {
            let node = self.domain.node(i);
            for x in node {
                write!(out, "{x},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// The pair `(u, v)` on a shared grid.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub u: GridField,
    pub v: GridField,
}

impl FieldPair {
    pub fn new(u: GridField, v: GridField) -> Result<Self, GridError> {
        if !u.same_domain(&v) {
            return Err(GridError::DomainMismatch);
        }
        Ok(FieldPair { u, v })
    }

    pub fn scaled(&self, factor: f64) -> FieldPair {
        FieldPair {
            u: self.u.scaled(factor),
            v: self.v.scaled(factor),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero()
    }
}

/// Nodal evaluation of `amplitude × preset`.
pub fn sample_field(grid: &Arc<GridDomain>, preset: Preset, amplitude: f64) -> GridField {
    let extents = grid.extents().to_vec();
    GridField::from_fn(Arc::clone(grid), |x| amplitude * preset.eval(x, &extents))
}

/// Random sine series `Σ c_k Π sin(k π x / L)` with `c_k ~ N(0,1)/k²`, scaled
/// to unit sup norm. Vanishes on the boundary of the box.
pub fn random_smooth_field<R: Rng + ?Sized>(
    grid: &Arc<GridDomain>,
    modes: usize,
    rng: &mut R,
) -> GridField {
    let modes = modes.max(1);
    let dim = grid.dim();
    let shape: Vec<usize> = vec![modes; dim];
    let total: usize = shape.iter().product();
    let mut coeffs = Vec::with_capacity(total);
    for idx in 0..total {
        let (kx, ky) = (idx % modes + 1, idx / modes + 1);
        let decay = if dim == 1 {
            (kx * kx) as f64
        } else {
            (kx * kx + ky * ky) as f64
        };
        let c: f64 = rng.sample(StandardNormal);
        coeffs.push(c / decay);
    }
    let extents = grid.extents().to_vec();
    let field = GridField::from_fn(Arc::clone(grid), |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let kx = (idx % modes + 1) as f64;
                let mut value = c * (kx * PI * x[0] / extents[0]).sin();
                if dim == 2 {
                    let ky = (idx / modes + 1) as f64;
                    value *= (ky * PI * x[1] / extents[1]).sin();
                }
                value
            })
            .sum()
    });
    let m = field.max_abs();
    if m > 0.0 {
        field.scaled(1.0 / m)
    } else {
        field
    }
}

/// Discrete `L^r` norm `(Σ |u_i|^r h^N)^{1/r}`, or the max norm for `r = ∞`.
pub fn discrete_norm(u: &GridField, r: f64) -> Result<f64, GridError> {
    if r.is_nan() || r < 1.0 {
        return Err(GridError::BadNormExponent(r));
    }
    if r.is_infinite() {
        return Ok(u.max_abs());
    }
    let scale = u.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    // factor out the max to keep |u|^r in range for large r
    let sum: f64 = u.values().iter().map(|v| (v.abs() / scale).powf(r)).sum();
    Ok(scale * (sum * u.domain().cell_measure()).powf(1.0 / r))
}

/// Discrete `L²` pairing `Σ u_i w_i h^N`.
pub fn inner(u: &GridField, w: &GridField) -> Result<f64, GridError> {
    if !u.same_domain(w) {
        return Err(GridError::DomainMismatch);
    }
    Ok(dot(u.values(), w.values()) * u.domain().cell_measure())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw(s: f64, p: f64, q: f64, sigma: f64, beta: f64) -> RawParams {
        RawParams {
            n: 1,
            s,
            p,
            q,
            sigma,
            beta,
        }
    }

    #[test]
    fn reference_params_are_admissible() {
        let m = validate_params(raw(0.5, 3.0, 3.5, 4.0, 0.0), ValidationMode::Strict).unwrap();
        assert!(m.theorem_regime);
        assert!(m.p_star().is_infinite());
        assert!(m.q_star().is_infinite());
    }

    #[test]
    fn sigma_too_small_names_the_max_inequality() {
        let err =
            validate_params(raw(0.5, 3.0, 3.5, 3.0, 0.0), ValidationMode::Strict).unwrap_err();
        assert_eq!(err, ParamError::Violated(Inequality::MaxBelowSigma));
        assert!(err.to_string().contains("max(2"));
    }

    #[test]
    fn operations_only_flags_non_theorem_regime() {
        let m =
            validate_params(raw(0.5, 2.0, 2.0, 4.0, 0.0), ValidationMode::OperationsOnly).unwrap();
        assert!(!m.theorem_regime);
        assert!(validate_params(raw(0.5, 2.0, 2.0, 4.0, 0.0), ValidationMode::Strict).is_err());
    }

    #[test]
    fn basic_ranges_always_enforced() {
        assert!(matches!(
            validate_params(raw(1.0, 3.0, 3.5, 4.0, 0.0), ValidationMode::OperationsOnly),
            Err(ParamError::FractionalOrder(_))
        ));
        assert!(matches!(
            validate_params(raw(0.5, 1.0, 3.5, 4.0, 0.0), ValidationMode::OperationsOnly),
            Err(ParamError::ExponentTooSmall { name: "p", .. })
        ));
        assert!(matches!(
            validate_params(
                raw(0.5, f64::NAN, 3.5, 4.0, 0.0),
                ValidationMode::OperationsOnly
            ),
            Err(ParamError::NonFinite { name: "p" })
        ));
        let mut r = raw(0.5, 3.0, 3.5, 4.0, 0.0);
        r.n = 3;
        assert_eq!(
            validate_params(r, ValidationMode::Strict),
            Err(ParamError::Dimension(3))
        );
    }

    #[test]
    fn finite_critical_exponent_in_two_dimensions() {
        assert!((critical_exponent(2, 0.5, 3.0) - 12.0).abs() < 1e-12);
        assert!(critical_exponent(1, 0.5, 3.0).is_infinite());
    }

    #[test]
    fn cell_centres_in_one_dimension() {
        let g = build_grid(&[1.0], &[4]).unwrap();
        assert_eq!(g.spacing(), 0.25);
        let xs: Vec<f64> = (0..4).map(|i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);

        let g = build_grid(&[1.0], &[2]).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!((g.node(0)[0], g.node(1)[0]), (0.25, 0.75));
    }

    #[test]
    fn square_grid_measure() {
        let g = build_grid(&[1.0, 1.0], &[3, 3]).unwrap();
        assert_eq!(g.len(), 9);
        assert!((g.spacing() - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.cell_measure() - 1.0 / 9.0).abs() < 1e-15);
        for i in 0..g.len() {
            assert!(g.node(i).iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn grid_errors() {
        assert_eq!(
            build_grid(&[1.0], &[0]),
            Err(GridError::TooFewNodes { axis: 0, count: 0 })
        );
        assert!(matches!(
            build_grid(&[1.0, 2.0], &[4, 4]),
            Err(GridError::NonUniformSpacing { .. })
        ));
        assert!(build_grid(&[1.0, 2.0], &[4, 8]).is_ok());
    }

    #[test]
    fn presets() {
        let g = Arc::new(build_grid(&[1.0], &[8]).unwrap());
        assert!(sample_field(&g, Preset::Constant, 0.0).is_zero());
        let s = sample_field(&g, Preset::Sine, 1.0);
        for (i, v) in s.values().iter().enumerate() {
            assert!((v - (PI * g.node(i)[0]).sin()).abs() < 1e-15);
        }
        let b1 = sample_field(&g, Preset::Bump, 1.0);
        let b3 = sample_field(&g, Preset::Bump, 3.0);
        for (a, b) in b1.values().iter().zip(b3.values()) {
            assert!((3.0 * a - b).abs() < 1e-15);
        }
        assert!(matches!(
            "gauss".parse::<Preset>(),
            Err(GridError::UnknownPreset(_))
        ));
    }

    #[test]
    fn norm_examples() {
        let g = Arc::new(build_grid(&[1.0], &[2]).unwrap());
        let z = GridField::zeros(Arc::clone(&g));
        assert_eq!(discrete_norm(&z, 3.0).unwrap(), 0.0);
        let u = GridField::new(Arc::clone(&g), vec![1.0, 0.0]).unwrap();
        assert!((discrete_norm(&u, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(discrete_norm(&u, f64::INFINITY).unwrap(), 1.0);
        assert!(discrete_norm(&u, 0.5).is_err());

        let g = Arc::new(build_grid(&[1.0], &[10]).unwrap());
        let one = sample_field(&g, Preset::Constant, 1.0);
        assert!((discrete_norm(&one, 2.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inner_examples() {
        let g = Arc::new(build_grid(&[1.0], &[2]).unwrap());
        let u = GridField::new(Arc::clone(&g), vec![1.0, 0.0]).unwrap();
        let w = GridField::new(Arc::clone(&g), vec![0.0, 1.0]).unwrap();
        assert_eq!(inner(&u, &w).unwrap(), 0.0);
        assert_eq!(inner(&u, &GridField::zeros(Arc::clone(&g))).unwrap(), 0.0);
        let other = Arc::new(build_grid(&[1.0], &[3]).unwrap());
        assert_eq!(
            inner(&u, &GridField::zeros(other)).unwrap_err(),
            GridError::DomainMismatch
        );
        let g = Arc::new(build_grid(&[1.0], &[16]).unwrap());
        let one = sample_field(&g, Preset::Constant, 1.0);
        assert!((inner(&one, &one).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = Arc::new(build_grid(&[1.0, 1.0], &[2, 2]).unwrap());
        let f = sample_field(&g, Preset::Constant, 2.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0.25,0.25,2");
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn norm_interpolation(values in field_strategy(24), a in 1.05f64..3.0, b in 0.1f64..4.0, mu in 0.05f64..0.95) {
            let g = Arc::new(build_grid(&[1.0], &[24]).unwrap());
            let u = GridField::new(g, values).unwrap();
            let p0 = a;
            let p1 = a + b;
            let pm = 1.0 / ((1.0 - mu) / p0 + mu / p1);
            let lhs = discrete_norm(&u, pm).unwrap();
            let rhs = discrete_norm(&u, p0).unwrap().powf(1.0 - mu) * discrete_norm(&u, p1).unwrap().powf(mu);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn norm_homogeneity(values in field_strategy(16), lambda in -50.0f64..50.0, r in 1.0f64..8.0) {
            let g = Arc::new(build_grid(&[1.0], &[16]).unwrap());
            let u = GridField::new(g, values).unwrap();
            let lhs = discrete_norm(&u.scaled(lambda), r).unwrap();
            let rhs = lambda.abs() * discrete_norm(&u, r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1e-300) * 4.0);
        }

        #[test]
        fn inner_symmetric_and_positive(a in field_strategy(12), b in field_strategy(12)) {
            let g = Arc::new(build_grid(&[2.0], &[12]).unwrap());
            let u = GridField::new(Arc::clone(&g), a).unwrap();
            let w = GridField::new(g, b).unwrap();
            prop_assert_eq!(inner(&u, &w).unwrap(), inner(&w, &u).unwrap());
            let uu = inner(&u, &u).unwrap();
            prop_assert!(uu >= 0.0);
            prop_assert_eq!(uu == 0.0, u.is_zero());
            let n2 = discrete_norm(&u, 2.0).unwrap();
            prop_assert!((uu - n2 * n2).abs() <= 1e-12 * uu.max(1e-300));
        }
    }

    #[test]
    fn random_fields_vanish_near_boundary_and_are_normalised() {
        let g = Arc::new(build_grid(&[1.0, 1.0], &[12, 12]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_smooth_field(&g, 4, &mut rng);
        assert!((f.max_abs() - 1.0).abs() < 1e-15);
    }
}
