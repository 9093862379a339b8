//! Kirchhoff coefficients `K`, their antiderivatives `K̂(z) = ∫₀ᶻ K`, and
//! sampled checks of the monotonicity hypotheses and the derived algebra.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KirchhoffError {
    #[error("Kirchhoff argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("invalid Kirchhoff parameters: {0}")]
    BadParameters(String),
    #[error("adaptive quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },
    #[error("hypothesis sample is empty")]
    EmptySample,
}

/// The coefficient family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KirchhoffKind {
    /// `a + b z^c`; `b = 0` gives a constant coefficient.
    AffinePower { a: f64, b: f64, c: f64 },
    /// `log(1 + z)`.
    Log1p,
    /// Piecewise-linear interpolation of `(z, K)` nodes, constant outside.
    Tabulated { z: Vec<f64>, k: Vec<f64> },
}

/// A coefficient together with its declared homogeneity index `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffFn {
    #[serde(flatten)]
    pub kind: KirchhoffKind,
    pub beta: f64,
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_DEPTH: u32 = 48;

impl KirchhoffFn {
    pub fn affine_power(a: f64, b: f64, c: f64, beta: f64) -> Result<Self, KirchhoffError> {
        KirchhoffFn {
            kind: KirchhoffKind::AffinePower { a, b, c },
            beta,
        }
        .validated()
    }

    pub fn constant(a: f64) -> Result<Self, KirchhoffError> {
        Self::affine_power(a, 0.0, 0.0, 0.0)
    }

    pub fn log1p(beta: f64) -> Result<Self, KirchhoffError> {
        KirchhoffFn {
            kind: KirchhoffKind::Log1p,
            beta,
        }
        .validated()
    }

    pub fn tabulated(z: Vec<f64>, k: Vec<f64>, beta: f64) -> Result<Self, KirchhoffError> {
        KirchhoffFn {
            kind: KirchhoffKind::Tabulated { z, k },
            beta,
        }
        .validated()
    }

    /// Checks parameter ranges; used after deserialisation too.
    pub fn validated(self) -> Result<Self, KirchhoffError> {
        let bad = |msg: &str| Err(KirchhoffError::BadParameters(msg.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        match &self.kind {
            KirchhoffKind::AffinePower { a, b, c } => {
                if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                    return bad("a, b, c must be finite");
                }
                if *a <= 0.0 || *b < 0.0 || *c < 0.0 {
                    return bad("affine-power needs a > 0, b ≥ 0, c ≥ 0");
                }
            }
            KirchhoffKind::Log1p => {}
            KirchhoffKind::Tabulated { z, k } => {
                if z.is_empty() || z.len() != k.len() {
                    return bad("tabulated K needs equally many z and K nodes");
                }
                if z.iter().chain(k).any(|x| !x.is_finite()) {
                    return bad("tabulated nodes must be finite");
                }
                if z[0] < 0.0 || z.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("tabulated z nodes must be non-negative and strictly increasing");
                }
                if k.iter().any(|&x| x < 0.0) {
                    return bad("tabulated K values must be non-negative");
                }
            }
        }
        Ok(self)
    }

    /// `K(z)` without the sign check; callers guarantee `z ≥ 0`.
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match &self.kind {
            KirchhoffKind::AffinePower { a, b, c } => {
                if *b == 0.0 {
                    *a
                } else {
                    a + b * z.powf(*c)
                }
            }
            KirchhoffKind::Log1p => z.ln_1p(),
            KirchhoffKind::Tabulated { z: zs, k } => interp(zs, k, z),
        }
    }

    pub fn k_eval(&self, z: f64) -> Result<f64, KirchhoffError> {
        if z < 0.0 || z.is_nan() {
            return Err(KirchhoffError::NegativeArgument(z));
        }
        Ok(self.value(z))
    }

    pub fn k_antideriv(&self, z: f64) -> Result<f64, KirchhoffError> {
        if z < 0.0 || z.is_nan() {
            return Err(KirchhoffError::NegativeArgument(z));
        }
        if z == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            KirchhoffKind::AffinePower { a, b, c } => {
                if *b == 0.0 {
                    Ok(a * z)
                } else {
                    Ok(a * z + b * z.powf(c + 1.0) / (c + 1.0))
                }
            }
            KirchhoffKind::Log1p => Ok(log1p_antideriv(z)),
            KirchhoffKind::Tabulated { z: zs, .. } => {
                // integrate piece by piece so each panel sees a smooth integrand
                let mut knots: Vec<f64> = vec![0.0];
                knots.extend(zs.iter().copied().filter(|&x| x > 0.0 && x < z));
                knots.push(z);
                let mut total = 0.0;
                for w in knots.windows(2) {
                    total += adaptive_simpson(|t| self.value(t), w[0], w[1], QUAD_TOL)?;
                }
                Ok(total)
            }
        }
    }
}

fn interp(zs: &[f64], k: &[f64], z: f64) -> f64 {
    if z <= zs[0] {
        return k[0];
    }
    let last = zs.len() - 1;
    if z >= zs[last] {
        return k[last];
    }
    let idx = zs.partition_point(|&x| x <= z) - 1;
    let t = (z - zs[idx]) / (zs[idx + 1] - zs[idx]);
    k[idx] + t * (k[idx + 1] - k[idx])
}

/// `(1+z) log(1+z) − z`, switching to its Taylor series near 0 where the
/// closed form cancels.
fn log1p_antideriv(z: f64) -> f64 {
    if z < 0.1 {
        // Σ_{n≥1} (−1)^{n+1} z^{n+1} / (n(n+1))
        let mut sum = 0.0;
        let mut zp = z * z;
        for n in 1..=24 {
            let nf = n as f64;
            let term = zp / (nf * (nf + 1.0));
            sum += if n % 2 == 1 { term } else { -term };
            zp *= z;
        }
        sum
    } else {
        (1.0 + z) * z.ln_1p() - z
    }
}

/// Adaptive Simpson quadrature to absolute-plus-relative tolerance `tol`.
pub fn adaptive_simpson(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, KirchhoffError> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = tol * (1.0 + whole.abs());
    simpson_step(&f, a, b, fa, fm, fb, whole, scale, QUAD_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, KirchhoffError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return Err(KirchhoffError::Quadrature { lo: a, hi: b });
    }
    Ok(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Log-spaced sample on `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            z_min: 1e-6,
            z_max: 1e6,
            count: 241,
        }
    }
}

impl SampleSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.z_min];
        }
        let (lo, hi) = (self.z_min.ln(), self.z_max.ln());
        (0..self.count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub magnitude: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub h1_pass: bool,
    pub h2_pass: bool,
    pub worst_h1: Option<Violation>,
    pub worst_h2: Option<Violation>,
    pub samples: usize,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.h1_pass && self.h2_pass
    }
}

pub const SLACK: f64 = 1e-12;

fn slack_exceeded(excess: f64, a: f64, b: f64) -> bool {
    excess > SLACK * (1.0 + a.abs().max(b.abs()))
}

/// Pairwise check that `K` is non-decreasing and `K(z)/z^β` non-increasing
/// over the sample.
pub fn check_hypotheses(
    k: &KirchhoffFn,
    beta: f64,
    spec: &SampleSpec,
) -> Result<HypothesisReport, KirchhoffError> {
    if spec.count == 0 || !(spec.z_min > 0.0 && spec.z_max >= spec.z_min) {
        return Err(KirchhoffError::EmptySample);
    }
    let zs = spec.points();
    let ks: Vec<f64> = zs.iter().map(|&z| k.value(z)).collect();
    let gs: Vec<f64> = zs
        .iter()
        .zip(&ks)
        .map(|(&z, &kz)| kz / z.powf(beta))
        .collect();
    let mut worst_h1: Option<Violation> = None;
    let mut worst_h2: Option<Violation> = None;
    let record = |slot: &mut Option<Violation>, magnitude: f64, z_lo: f64, z_hi: f64| {
        if slot.is_none_or(|w| magnitude > w.magnitude) {
            *slot = Some(Violation {
                magnitude,
                z_lo,
                z_hi,
            });
        }
    };
    for i in 0..zs.len() {
        for j in (i + 1)..zs.len() {
            let drop = ks[i] - ks[j];
            if slack_exceeded(drop, ks[i], ks[j]) {
                record(&mut worst_h1, drop, zs[i], zs[j]);
            }
            let rise = gs[j] - gs[i];
            if slack_exceeded(rise, gs[i], gs[j]) {
                record(&mut worst_h2, rise, zs[i], zs[j]);
            }
        }
    }
    Ok(HypothesisReport {
        h1_pass: worst_h1.is_none(),
        h2_pass: worst_h2.is_none(),
        worst_h1,
        worst_h2,
        samples: zs.len(),
    })
}

/// One item of the Kirchhoff algebra suite. `residual` is `lhs − rhs` of the
/// `≤` form, so positive values beyond slack are violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgebraEntry {
    pub item: u8,
    pub applicable: bool,
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub hypotheses: HypothesisReport,
    pub entries: Vec<AlgebraEntry>,
}

impl AlgebraReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

fn leq(item: u8, applicable: bool, lhs: f64, rhs: f64) -> AlgebraEntry {
    let residual = lhs - rhs;
    AlgebraEntry {
        item,
        applicable,
        pass: !applicable || !slack_exceeded(residual, lhs, rhs),
        residual: if applicable { residual } else { 0.0 },
    }
}

/// Evaluates the seven scaling/positivity/antiderivative inequalities at one
/// `(μ, z)`. Item 1 reads `μ^β K(z) ≤ K(μz)` and item 5 bounds `K̂(z)`.
///
/// In the sandwich (item 3) `μ` plays the role of the reference point, so it
/// is skipped at `μ = 0`. When `K` fails its hypotheses on the default sample
/// every entry is reported as not applicable.
pub fn lemma32_suite(
    k: &KirchhoffFn,
    beta: f64,
    mu: f64,
    z: f64,
) -> Result<AlgebraReport, KirchhoffError> {
    if mu < 0.0 || mu.is_nan() {
        return Err(KirchhoffError::NegativeArgument(mu));
    }
    let hypotheses = check_hypotheses(k, beta, &SampleSpec::default())?;
    let on = hypotheses.passed();
    let kz = k.k_eval(z)?;
    let kmz = k.k_eval(mu * z)?;
    let hz = k.k_antideriv(z)?;
    let hmz = k.k_antideriv(mu * z)?;
    let mb = mu.powf(beta);
    let mb1 = mu.powf(beta + 1.0);
    let small = mu <= 1.0;
    let big = mu >= 1.0;

    let mut entries = Vec::with_capacity(8);
    entries.push(leq(1, on && small, mb * kz, kmz));
    entries.push(leq(2, on && big, kmz, mb * kz));
    let sandwich = on && mu > 0.0;
    let (lo, hi) = if sandwich {
        let km = k.value(mu) / mb;
        let zb = z.powf(beta);
        (km * mb.min(zb), km * mb.max(zb))
    } else {
        (0.0, 0.0)
    };
    let lower = leq(3, sandwich, lo, kz);
    let upper = leq(3, sandwich, kz, hi);
    entries.push(if lower.residual >= upper.residual {
        lower
    } else {
        upper
    });
    // positivity; residual is −K(z) so a non-positive value is flagged
    let positive = on && z > 0.0;
    entries.push(AlgebraEntry {
        item: 4,
        applicable: positive,
        pass: !positive || kz > 0.0,
        residual: if positive { -kz } else { 0.0 },
    });
    let lower5 = leq(5, on, z * kz / (beta + 1.0), hz);
    let upper5 = leq(5, on, hz, z * kz);
    entries.push(if lower5.residual >= upper5.residual {
        lower5
    } else {
        upper5
    });
    entries.push(leq(6, on && small, mb1 * hz, hmz));
    entries.push(leq(7, on && big, hmz, mb1 * hz));
    Ok(AlgebraReport {
        hypotheses,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let k = KirchhoffFn::affine_power(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(k.k_eval(2.0).unwrap(), 3.0);
        assert_eq!(k.k_eval(0.0).unwrap(), 1.0);
        assert_eq!(KirchhoffFn::log1p(1.0).unwrap().k_eval(0.0).unwrap(), 0.0);
        assert!(matches!(
            k.k_eval(-1.0),
            Err(KirchhoffError::NegativeArgument(_))
        ));
    }

    #[test]
    fn antiderivative_examples() {
        let k = KirchhoffFn::affine_power(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((k.k_antideriv(2.0).unwrap() - 4.0).abs() < 1e-15);
        let l = KirchhoffFn::log1p(1.0).unwrap();
        assert!((l.k_antideriv(1.0).unwrap() - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert_eq!(l.k_antideriv(0.0).unwrap(), 0.0);
        // series and closed form agree just below the switch
        let z = 0.099f64;
        let closed = (1.0 + z) * z.ln_1p() - z;
        assert!((log1p_antideriv(z) - closed).abs() < 1e-13 * closed);
        // near zero the leading term dominates
        assert!((l.k_antideriv(1e-8).unwrap() - 0.5e-16).abs() < 1e-24);
    }

    #[test]
    fn tabulated_matches_closed_form_for_linear_table() {
        let t = KirchhoffFn::tabulated(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 4.0], 1.0).unwrap();
        let a = KirchhoffFn::affine_power(1.0, 1.0, 1.0, 1.0).unwrap();
        for z in [0.3, 1.0, 2.2, 3.0] {
            assert!((t.k_antideriv(z).unwrap() - a.k_antideriv(z).unwrap()).abs() < 1e-10);
        }
        // constant past the last node
        assert!((t.k_antideriv(4.0).unwrap() - (a.k_antideriv(3.0).unwrap() + 4.0)).abs() < 1e-10);
        assert!(KirchhoffFn::tabulated(vec![1.0, 0.5], vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(KirchhoffFn::affine_power(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(KirchhoffFn::affine_power(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(KirchhoffFn::log1p(-0.5).is_err());
        assert!(KirchhoffFn::constant(2.0).is_ok());
    }

    #[test]
    fn hypothesis_examples() {
        let k = KirchhoffFn::affine_power(1.0, 1.0, 2.0, 2.0).unwrap();
        let spec = SampleSpec::default();
        let r = check_hypotheses(&k, 2.0, &spec).unwrap();
        assert!(r.h1_pass && r.h2_pass);
        let r = check_hypotheses(&k, 1.0, &spec).unwrap();
        assert!(r.h1_pass && !r.h2_pass);
        assert!(r.worst_h2.unwrap().magnitude > 0.0);
        let l = KirchhoffFn::log1p(1.0).unwrap();
        assert!(check_hypotheses(&l, 1.0, &spec).unwrap().passed());
        let c = KirchhoffFn::constant(1.0).unwrap();
        assert!(check_hypotheses(&c, 0.0, &spec).unwrap().passed());
        let empty = SampleSpec {
            z_min: 1.0,
            z_max: 2.0,
            count: 0,
        };
        assert_eq!(
            check_hypotheses(&c, 0.0, &empty),
            Err(KirchhoffError::EmptySample)
        );
    }

    #[test]
    fn algebra_examples() {
        let c = KirchhoffFn::constant(1.0).unwrap();
        let r = lemma32_suite(&c, 0.0, 0.3, 2.0).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.entries[4].residual, 0.0);

        let k = KirchhoffFn::affine_power(1.0, 1.0, 1.0, 1.0).unwrap();
        let r = lemma32_suite(&k, 1.0, 2.0, 1.0).unwrap();
        assert!(r.all_pass());
        assert!((r.entries[1].residual - (3.0 - 4.0)).abs() < 1e-15);

        let r = lemma32_suite(&k, 1.0, 1.0, 0.7).unwrap();
        for idx in [0, 1, 5, 6] {
            assert!(r.entries[idx].applicable);
            assert!(r.entries[idx].residual.abs() < 1e-15);
        }
    }

    #[test]
    fn failing_hypotheses_are_reported_not_checked() {
        let k = KirchhoffFn::affine_power(1.0, 1.0, 2.0, 1.0).unwrap();
        let r = lemma32_suite(&k, 1.0, 3.0, 2.0).unwrap();
        assert!(!r.hypotheses.h2_pass);
        assert!(r.entries.iter().all(|e| !e.applicable && e.pass));
    }

    proptest! {
        #[test]
        fn antiderivative_differentiates_to_k(z in 0.01f64..50.0, c in 0.0f64..3.0) {
            for k in [KirchhoffFn::affine_power(1.3, 0.7, c, c).unwrap(), KirchhoffFn::log1p(1.0).unwrap()] {
                let d = 1e-5 * z;
                let fd = (k.k_antideriv(z + d).unwrap() - k.k_antideriv(z - d).unwrap()) / (2.0 * d);
                let kz = k.value(z);
                prop_assert!((fd - kz).abs() <= 1e-6 * kz.max(1e-3));
            }
        }

        #[test]
        fn antiderivative_is_midpoint_convex(a in 0.0f64..20.0, b in 0.0f64..20.0) {
            for k in [KirchhoffFn::affine_power(1.0, 2.0, 1.5, 1.5).unwrap(), KirchhoffFn::log1p(1.0).unwrap()] {
                let mid = k.k_antideriv(0.5 * (a + b)).unwrap();
                let avg = 0.5 * (k.k_antideriv(a).unwrap() + k.k_antideriv(b).unwrap());
                prop_assert!(mid <= avg + 1e-12 * (1.0 + avg));
            }
        }
    }
}
