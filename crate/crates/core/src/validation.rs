//! Seeded invariant suites behind `validate`, plus checks shared with the
//! acceptance tests.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::dynamics::{
    energy_identity_residual, integrate, komornik_check, levine_diagnostic, max_energy_rise,
    norm_growth_violations, rhs, IntegratorControls, OutcomeKind,
};
use crate::fracops::{apply_naive, FracKernel};
use crate::grid::{
    build_grid, discrete_norm, inner, random_smooth_field, sample_field, validate_params,
    FieldPair, GridDomain, GridField, Preset, RawParams, ValidationMode,
};
use crate::kirchhoff::{check_hypotheses, lemma32_suite, KirchhoffFn, SampleSpec};
use crate::variational::{
    classify_initial_data, estimate_embedding_constant, estimate_well_depth, find_epsilon_star,
    geometric_grid, lemma33_gap, lemma35_lower_bound, log_bound, BracketControls, EmbeddingSpec,
    Model, PsiVariant, Verdict, WellSpec,
};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("unknown suite `{0}`; known suites: {known}", known = SUITES.join(", "))]
    UnknownSuite(String),
    #[error("suite `{suite}` could not run: {message}")]
    Setup {
        suite: &'static str,
        message: String,
    },
}

/// Suites run by scope `all`.
pub const SUITES: &[&str] = &[
    "operator",
    "lemma21",
    "lemma23",
    "lemma31",
    "lemma32",
    "lemma33",
    "lemma34",
    "lemma35",
    "theorem31",
    "dynamics",
    "blowup",
    NEGATIVE_CONTROL,
];

/// Asserts the fibering identity with the printed Nehari functional, which is
/// expected to fail. Only runs when named explicitly.
pub const NEGATIVE_CONTROL: &str = "negative-control";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub invariant: String,
    pub passed: bool,
    /// Reported but never counted as a failure.
    pub exhibit: bool,
    pub samples: usize,
    pub violations: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub suites: Vec<SuiteReport>,
    pub passed: usize,
    pub failed: usize,
    pub exhibits: usize,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = (&'static str, &Check)> {
        self.suites
            .iter()
            .flat_map(|s| s.checks.iter().map(move |c| (s.suite, c)))
            .filter(|(_, c)| !c.passed && !c.exhibit)
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

/// Resolves a scope string: `all` or a comma-separated list of suite names.
pub fn parse_scope(scope: &str) -> Result<Vec<&'static str>, ValidationError> {
    let scope = scope.trim();
    if scope.is_empty() || scope == "all" {
        return Ok(SUITES
            .iter()
            .copied()
            .filter(|s| *s != NEGATIVE_CONTROL)
            .collect());
    }
    scope
        .split(',')
        .map(|name| {
            let name = name.trim();
            SUITES
                .iter()
                .copied()
                .find(|s| *s == name)
                .ok_or_else(|| ValidationError::UnknownSuite(name.to_string()))
        })
        .collect()
}

pub fn run_validation(scope: &str) -> Result<ValidationReport, ValidationError> {
    let names = parse_scope(scope)?;
    let mut suites = Vec::with_capacity(names.len());
    for name in names {
        let checks = match name {
            "operator" => operator_suite(),
            "lemma21" => interpolation_suite(1000),
            "lemma23" => komornik_suite(),
            "lemma31" => log_bound_suite(100_000),
            "lemma32" => kirchhoff_suite(1000),
            "lemma33" => log_coupling_suite(),
            "lemma34" => fibering_suite(20, PsiVariant::Consistent),
            "lemma35" => d_star_suite(),
            "theorem31" => well_depth_suite(),
            "dynamics" => dynamics_suite(),
            "blowup" => blowup_suite(),
            NEGATIVE_CONTROL => negative_control_suite(),
            _ => unreachable!("parse_scope only returns known names"),
        }
        .map_err(|message| ValidationError::Setup {
            suite: name,
            message,
        })?;
        suites.push(SuiteReport {
            suite: name,
            checks,
        });
    }
    let all = suites.iter().flat_map(|s| &s.checks);
    let exhibits = all.clone().filter(|c| c.exhibit).count();
    let passed = all.clone().filter(|c| !c.exhibit && c.passed).count();
    let failed = all.filter(|c| !c.exhibit && !c.passed).count();
    Ok(ValidationReport {
        suites,
        passed,
        failed,
        exhibits,
    })
}

type SuiteResult = Result<Vec<Check>, String>;

fn check(invariant: &str, samples: usize, violations: usize, detail: String) -> Check {
    Check {
        invariant: invariant.to_string(),
        passed: violations == 0,
        exhibit: false,
        samples,
        violations,
        detail,
    }
}

fn exhibit(invariant: &str, samples: usize, violations: usize, detail: String) -> Check {
    Check {
        exhibit: true,
        ..check(invariant, samples, violations, detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_values<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn reference_model(nodes: usize) -> Result<Model, String> {
    let mut cfg = ExperimentConfig::reference(1.0);
    cfg.grid.counts = vec![nodes];
    cfg.build().map(|e| e.model).map_err(err)
}

// ---------------------------------------------------------------------------
// operator

/// Worst relative mismatch of `⟨Lu, w⟩ h^N` against the bilinear form.
pub fn duality_error(kernel: &FracKernel, u: &[f64], w: &[f64]) -> f64 {
    let mut lu = vec![0.0; u.len()];
    kernel.apply_into(u, &mut lu);
    let hn = kernel.grid().cell_measure();
    let lhs: f64 = lu.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * hn;
    let rhs = kernel.bilinear_values(u, w);
    let scale: f64 = lu.iter().zip(w).map(|(a, b)| (a * b).abs()).sum::<f64>() * hn;
    (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Worst relative mismatch between `h^N Lu` and a central difference of the
/// bracket, over the first `probes` nodes.
pub fn bracket_gradient_error(kernel: &FracKernel, u: &[f64], probes: usize) -> f64 {
    let mut lu = vec![0.0; u.len()];
    kernel.apply_into(u, &mut lu);
    let hn = kernel.grid().cell_measure();
    let p = kernel.p();
    let norm = lu.iter().fold(0.0f64, |a, x| a.max(x.abs())) * hn;
    let mut worst = 0.0f64;
    let mut x = u.to_vec();
    for i in 0..probes.min(u.len()) {
        let step = 1e-5 * (1.0 + u[i].abs());
        x[i] = u[i] + step;
        let up = kernel.gagliardo_values(&x) / p;
        x[i] = u[i] - step;
        let down = kernel.gagliardo_values(&x) / p;
        x[i] = u[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((fd - hn * lu[i]).abs() / norm.max(f64::MIN_POSITIVE));
    }
    worst
}

/// Worst relative mismatch of the blocked applies against the plain loop.
pub fn tiling_error(kernel: &FracKernel, u: &GridField) -> f64 {
    let naive = apply_naive(u, kernel.p(), kernel.s());
    let mut tiled = vec![0.0; u.len()];
    let mut sym = vec![0.0; u.len()];
    kernel.apply_into(u.values(), &mut tiled);
    kernel.apply_symmetric_into(u.values(), &mut sym);
    let scale = naive
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    naive
        .iter()
        .zip(tiled.iter().zip(&sym))
        .map(|(n, (t, s))| (n - t).abs().max((n - s).abs()) / scale)
        .fold(0.0, f64::max)
}

fn operator_suite() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let grids: Vec<Arc<GridDomain>> = vec![
        Arc::new(build_grid(&[1.0], &[64]).map_err(err)?),
        Arc::new(build_grid(&[1.0, 1.0], &[16, 16]).map_err(err)?),
    ];
    let mut duality = (0, 0, 0.0f64);
    let mut gradient = (0, 0, 0.0f64);
    let mut tiling = (0, 0, 0.0f64);
    for grid in &grids {
        for p in [2.0, 3.0, 3.5] {
            let kernel = FracKernel::new(Arc::clone(grid), p, 0.5).map_err(err)?;
            for _ in 0..5 {
                let u = random_values(grid.len(), &mut rng);
                let w = random_values(grid.len(), &mut rng);
                let e = duality_error(&kernel, &u, &w);
                duality = (
                    duality.0 + 1,
                    duality.1 + usize::from(e > 1e-12),
                    duality.2.max(e),
                );
                let smooth = random_smooth_field(grid, 4, &mut rng);
                let e = bracket_gradient_error(&kernel, smooth.values(), 8);
                gradient = (
                    gradient.0 + 1,
                    gradient.1 + usize::from(e > 1e-5),
                    gradient.2.max(e),
                );
                let field = GridField::new(Arc::clone(grid), u).map_err(err)?;
                let e = tiling_error(&kernel, &field);
                tiling = (
                    tiling.0 + 1,
                    tiling.1 + usize::from(e > 1e-12),
                    tiling.2.max(e),
                );
            }
        }
    }
    Ok(vec![
        check(
            "duality <Lu,w> = bilinear form",
            duality.0,
            duality.1,
            format!("worst relative error {:.3e}", duality.2),
        ),
        check(
            "bracket gradient = h^N Lu",
            gradient.0,
            gradient.1,
            format!("worst relative error {:.3e}", gradient.2),
        ),
        check(
            "blocked apply = naive loop",
            tiling.0,
            tiling.1,
            format!("worst relative error {:.3e}", tiling.2),
        ),
    ])
}

// ---------------------------------------------------------------------------
// lemma21: norm interpolation

/// Counts interpolation violations over `fields` random fields and exponent
/// triples. Returns `(violations, worst relative excess)`.
pub fn interpolation_violations(fields: usize, seed: u64) -> Result<(usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids = [
        Arc::new(build_grid(&[1.0], &[32]).map_err(err)?),
        Arc::new(build_grid(&[2.0, 2.0], &[6, 6]).map_err(err)?),
    ];
    let mut bad = 0;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..fields {
        let grid = &grids[k % grids.len()];
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let u = GridField::new(
            Arc::clone(grid),
            random_values(grid.len(), &mut rng)
                .into_iter()
                .map(|x| x * scale)
                .collect(),
        )
        .map_err(err)?;
        let p0 = rng.random_range(1.0..4.0);
        let p1 = p0 + rng.random_range(0.1..8.0);
        let mu: f64 = rng.random_range(0.01..0.99);
        let pm = 1.0 / ((1.0 - mu) / p0 + mu / p1);
        let lhs = discrete_norm(&u, pm).map_err(err)?;
        let rhs = discrete_norm(&u, p0).map_err(err)?.powf(1.0 - mu)
            * discrete_norm(&u, p1).map_err(err)?.powf(mu);
        let excess = (lhs - rhs) / rhs.max(f64::MIN_POSITIVE);
        worst = worst.max(excess);
        if excess > 1e-12 {
            bad += 1;
        }
    }
    Ok((bad, worst))
}

fn interpolation_suite(fields: usize) -> SuiteResult {
    let (bad, worst) = interpolation_violations(fields, 2)?;
    Ok(vec![check(
        "||u||_{p_mu} <= ||u||_{p0}^{1-mu} ||u||_{p1}^mu",
        fields,
        bad,
        format!("largest relative excess {worst:.3e}"),
    )])
}

// ---------------------------------------------------------------------------
// lemma23: Komornik families

/// Synthetic equality families: `η = 0` exponential and `η = 1` algebraic.
pub fn komornik_families() -> Result<Vec<(f64, bool, bool)>, String> {
    let c = 0.7;
    let r0 = 2.0;
    let t: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
    let mut out = Vec::new();
    let exp: Vec<f64> = t.iter().map(|&x| r0 * (-c * x).exp()).collect();
    let rep = komornik_check(&t, &exp, 0.0, c).map_err(err)?;
    out.push((0.0, rep.hypothesis_holds, rep.conclusion_holds));
    let eta = 1.0;
    let alg: Vec<f64> = t
        .iter()
        .map(|&x| r0 * (1.0 / (1.0 + eta * c * x)).powf(1.0 / eta))
        .collect();
    let rep = komornik_check(&t, &alg, eta, c).map_err(err)?;
    out.push((eta, rep.hypothesis_holds, rep.conclusion_holds));
    Ok(out)
}

fn komornik_suite() -> SuiteResult {
    let mut checks = Vec::new();
    for (eta, hyp, concl) in komornik_families()? {
        checks.push(check(
            &format!("decay envelope from integral inequality (eta = {eta})"),
            1,
            usize::from(!(hyp && concl)),
            format!("hypothesis {hyp}, conclusion {concl}"),
        ));
    }
    let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let flat = vec![1.0; t.len()];
    let rep = komornik_check(&t, &flat, 0.0, 1.0).map_err(err)?;
    checks.push(check(
        "constant series fails the integral hypothesis",
        1,
        usize::from(rep.hypothesis_holds),
        format!("{} hypothesis violations", rep.hypothesis_violations.len()),
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// lemma31: scalar log bounds

/// Returns `(violations, worst relative excess)` over `samples` draws.
pub fn log_bound_violations(samples: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = 10f64.powf(rng.random_range(-8.0..8.0));
        let eta = rng.random_range(0.01..3.0);
        let (lhs, rhs) = log_bound(t, eta);
        let excess = (lhs - rhs) / rhs;
        worst = worst.max(excess);
        if excess > 1e-12 {
            bad += 1;
        }
    }
    (bad, worst)
}

fn log_bound_suite(samples: usize) -> SuiteResult {
    let (bad, worst) = log_bound_violations(samples, 31);
    Ok(vec![check(
        "log t <= t^eta/(e eta) and t^eta |log t| <= 1/(e eta)",
        samples,
        bad,
        format!("largest relative excess {worst:.3e}"),
    )])
}

// ---------------------------------------------------------------------------
// lemma32: Kirchhoff algebra

pub fn builtin_kirchhoff() -> Vec<(&'static str, KirchhoffFn)> {
    vec![
        (
            "affine-power 1+z",
            KirchhoffFn::affine_power(1.0, 1.0, 1.0, 1.0).expect("valid"),
        ),
        ("log1p", KirchhoffFn::log1p(1.0).expect("valid")),
    ]
}

/// Per item, the number of violations over `pairs` random `(μ, z)` draws.
pub fn kirchhoff_violations(
    k: &KirchhoffFn,
    pairs: usize,
    seed: u64,
) -> Result<([usize; 7], [usize; 7]), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = [0usize; 7];
    let mut applicable = [0usize; 7];
    for _ in 0..pairs {
        let mu = 10f64.powf(rng.random_range(-3.0..3.0));
        let z = 10f64.powf(rng.random_range(-4.0..4.0));
        let rep = lemma32_suite(k, k.beta, mu, z).map_err(err)?;
        if !rep.hypotheses.passed() {
            return Err("built-in coefficient fails its hypotheses".to_string());
        }
        for e in rep.entries {
            let i = usize::from(e.item - 1);
            applicable[i] += usize::from(e.applicable);
            bad[i] += usize::from(!e.pass);
        }
    }
    Ok((bad, applicable))
}

fn kirchhoff_suite(pairs: usize) -> SuiteResult {
    let mut checks = Vec::new();
    for (name, k) in builtin_kirchhoff() {
        let hyp = check_hypotheses(&k, k.beta, &SampleSpec::default()).map_err(err)?;
        checks.push(check(
            &format!("{name}: K non-decreasing, K(z)/z^beta non-increasing"),
            hyp.samples,
            usize::from(!hyp.h1_pass) + usize::from(!hyp.h2_pass),
            format!("{:?} {:?}", hyp.worst_h1, hyp.worst_h2),
        ));
        let (bad, applicable) = kirchhoff_violations(&k, pairs, 32)?;
        for item in 0..7 {
            checks.push(check(
                &format!("{name}: algebra item {}", item + 1),
                applicable[item],
                bad[item],
                format!("{} of {pairs} draws applicable", applicable[item]),
            ));
        }
    }
    let bad_k =
        KirchhoffFn::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0], 0.0).map_err(err)?;
    let hyp = check_hypotheses(&bad_k, 0.0, &SampleSpec::default()).map_err(err)?;
    checks.push(check(
        "non-monotone K is flagged",
        1,
        usize::from(hyp.h1_pass),
        format!("{:?}", hyp.worst_h1),
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// lemma33: log-coupling bound (exhibit: the embedding constant is a lower estimate)

fn log_coupling_suite() -> SuiteResult {
    let raw = RawParams {
        n: 1,
        s: 0.25,
        p: 3.0,
        q: 3.5,
        sigma: 4.0,
        beta: 0.0,
    };
    let params = validate_params(raw, ValidationMode::OperationsOnly).map_err(err)?;
    let grid = Arc::new(build_grid(&[1.0], &[32]).map_err(err)?);
    let k = KirchhoffFn::constant(1.0).map_err(err)?;
    let model = Model::new(params, Arc::clone(&grid), k.clone(), k).map_err(err)?;
    let spec = EmbeddingSpec::default();
    let mut s_const = 0.0f64;
    for (p, r) in [(params.p, params.sigma), (params.q, params.sigma)] {
        s_const =
            s_const.max(estimate_embedding_constant(&grid, p, params.s, r, &spec).map_err(err)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut bad = 0;
    let mut worst = f64::INFINITY;
    let n = 50;
    for _ in 0..n {
        let u = random_smooth_field(&grid, 4, &mut rng).scaled(rng.random_range(0.1..3.0));
        let v = random_smooth_field(&grid, 4, &mut rng).scaled(rng.random_range(0.1..3.0));
        let gap = lemma33_gap(&model, &FieldPair::new(u, v).map_err(err)?, s_const).map_err(err)?;
        worst = worst.min(gap.slack);
        bad += usize::from(gap.slack < 0.0);
    }
    Ok(vec![exhibit(
        "log-coupling integral bounded by seminorm terms",
        n,
        bad,
        format!("S estimate {s_const:.4}, smallest slack {worst:.3e}"),
    )])
}

// ---------------------------------------------------------------------------
// lemma34: fibering map

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberingCheck {
    pub eps_star: f64,
    pub sign_changes: usize,
    /// ψ positive below ε* and negative above.
    pub sign_pattern: bool,
    /// Cells between the scan's φ maximiser and ε*.
    pub argmax_offset: usize,
    /// Worst `|ε dφ/dε − ψ| / scale` over the probe points.
    pub identity_error: f64,
}

impl FiberingCheck {
    pub fn passed(&self, identity_tol: f64) -> bool {
        self.sign_changes == 1
            && self.sign_pattern
            && self.argmax_offset <= 1
            && self.identity_error <= identity_tol
    }
}

/// ε*, the ψ sign structure on a 401-point scan over `[ε*/10, 10ε*]`, the φ
/// maximiser, and the fibering identity `ψ(εu, εv) = ε d/dε φ(εu, εv)` by
/// central differences at `ε ∈ {ε*/2, ε*, 2ε*}`. ε* is always found with the
/// consistent functional; `variant` selects the ψ used in the identity.
pub fn fibering_check(
    model: &Model,
    pair: &FieldPair,
    variant: PsiVariant,
) -> Result<FiberingCheck, String> {
    let star = find_epsilon_star(
        model,
        pair,
        PsiVariant::Consistent,
        &BracketControls::default(),
    )
    .map_err(err)?;
    let e = star.eps;
    let eps = geometric_grid(e / 10.0, e * 10.0, 401);
    let ray = model.ray(pair.u.values(), pair.v.values());
    let mut psi = Vec::with_capacity(eps.len());
    let mut phi = Vec::with_capacity(eps.len());
    for &x in &eps {
        let r = ray.report(x).map_err(err)?;
        psi.push(r.psi_consistent);
        phi.push(r.phi);
    }
    let sign_changes = psi
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    let sign_pattern = eps
        .iter()
        .zip(&psi)
        .filter(|(&x, _)| (x / e - 1.0).abs() > 1e-8)
        .all(|(&x, &y)| if x < e { y > 0.0 } else { y < 0.0 });
    let argmax = phi
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &y)| if y > acc.1 { (i, y) } else { acc },
        )
        .0;
    let nearest = eps
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| {
            let d = (x / e).ln().abs();
            if d < acc.1 {
                (i, d)
            } else {
                acc
            }
        })
        .0;
    let mut identity_error = 0.0f64;
    for x in [0.5 * e, e, 2.0 * e] {
        let h = 1e-4 * x;
        let fd = x * (ray.phi(x + h).map_err(err)? - ray.phi(x - h).map_err(err)?) / (2.0 * h);
        let r = ray.report(x).map_err(err)?;
        let scale = r.psi_scale().max(f64::MIN_POSITIVE);
        identity_error = identity_error.max((fd - r.psi(variant)).abs() / scale);
    }
    Ok(FiberingCheck {
        eps_star: e,
        sign_changes,
        sign_pattern,
        argmax_offset: argmax.abs_diff(nearest),
        identity_error,
    })
}

/// Random smooth direction pairs with amplitude ratios spread over `e^{±1.5}`.
pub fn random_pairs(model: &Model, count: usize, seed: u64) -> Result<Vec<FieldPair>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::clone(model.grid());
    (0..count)
        .map(|_| {
            let u = random_smooth_field(&grid, 4, &mut rng);
            let ratio = rng.random_range(-1.5f64..1.5).exp();
            let v = random_smooth_field(&grid, 4, &mut rng).scaled(ratio);
            FieldPair::new(u, v).map_err(err)
        })
        .collect()
}

fn fibering_suite(pairs: usize, variant: PsiVariant) -> SuiteResult {
    let model = reference_model(48)?;
    let mut structure = 0;
    let mut identity = 0;
    let mut worst = 0.0f64;
    for pair in random_pairs(&model, pairs, 34)? {
        let c = fibering_check(&model, &pair, variant)?;
        structure += usize::from(!(c.sign_changes == 1 && c.sign_pattern && c.argmax_offset <= 1));
        identity += usize::from(c.identity_error > 1e-5);
        worst = worst.max(c.identity_error);
    }
    let label = match variant {
        PsiVariant::Consistent => "psi = eps dphi/deps (consistent)",
        PsiVariant::Printed => "psi = eps dphi/deps (printed)",
    };
    let mut checks = Vec::new();
    if variant == PsiVariant::Consistent {
        checks.push(check(
            "unique eps*, +/0/- sign pattern, phi maximal at eps*",
            pairs,
            structure,
            String::new(),
        ));
    }
    checks.push(check(
        label,
        pairs,
        identity,
        format!("worst relative error {worst:.3e}"),
    ));
    Ok(checks)
}

fn negative_control_suite() -> SuiteResult {
    fibering_suite(5, PsiVariant::Printed)
}

// ---------------------------------------------------------------------------
// lemma35: d_* and the lower bound

fn d_star_suite() -> SuiteResult {
    let model = reference_model(48)?;
    let well = estimate_well_depth(
        &model,
        &WellSpec {
            directions: 64,
            ..WellSpec::default()
        },
    )
    .map_err(err)?;
    let mut below = 0;
    let mut lower = 0;
    let pairs = random_pairs(&model, 50, 35)?;
    for pair in &pairs {
        let c = classify_initial_data(&model, pair, well.d, PsiVariant::Consistent).map_err(err)?;
        below += usize::from(!(c.d_star < well.d));
        let rep = model.energy(pair).map_err(err)?;
        let (lhs, rhs) = lemma35_lower_bound(&rep, &model.params);
        lower += usize::from(lhs < rhs - 1e-12 * (1.0 + rhs.abs()));
    }
    Ok(vec![
        check(
            "d_* < d for theorem-regime params",
            pairs.len(),
            below,
            format!("d = {:.6}", well.d),
        ),
        exhibit(
            "phi - psi/sigma >= (1/(q(beta+1)) - 1/sigma)(K_u B_u + K_v B_v)",
            pairs.len(),
            lower,
            "violations come from negative log-coupling at small amplitude".to_string(),
        ),
    ])
}

// ---------------------------------------------------------------------------
// theorem31: positive well depth

fn well_depth_suite() -> SuiteResult {
    let model = reference_model(48)?;
    let well = estimate_well_depth(&model, &WellSpec::default()).map_err(err)?;
    Ok(vec![check(
        "well depth d > 0",
        well.sample_count,
        usize::from(!(well.d > 0.0)),
        format!(
            "d = {:.6} from {} directions, {} failures",
            well.d, well.sample_count, well.failures
        ),
    )])
}

// ---------------------------------------------------------------------------
// dynamics

fn dynamics_suite() -> SuiteResult {
    let model = reference_model(48)?;
    let mut worst = 0.0f64;
    let pairs = random_pairs(&model, 20, 40)?;
    for pair in &pairs {
        let (du, dv) = rhs(&model, pair).map_err(err)?;
        let chain = inner(&du, &pair.u).map_err(err)? + inner(&dv, &pair.v).map_err(err)?;
        let rep = model.energy(pair).map_err(err)?;
        worst =
            worst.max((chain + rep.psi_consistent).abs() / rep.psi_scale().max(f64::MIN_POSITIVE));
    }
    let mut checks = vec![check(
        "<du,u> + <dv,v> = -psi_consistent",
        pairs.len(),
        usize::from(worst > 1e-10),
        format!("worst relative error {worst:.3e}"),
    )];

    let zero = FieldPair::new(
        GridField::zeros(Arc::clone(model.grid())),
        GridField::zeros(Arc::clone(model.grid())),
    )
    .map_err(err)?;
    let controls = IntegratorControls {
        t_end: 1.0,
        ..IntegratorControls::default()
    };
    let tr = integrate(&model, &zero, &controls).map_err(err)?;
    let moved = tr.final_u.iter().chain(&tr.final_v).any(|&x| x != 0.0);
    checks.push(check(
        "zero data stays zero",
        1,
        usize::from(moved || tr.outcome.kind != OutcomeKind::CompletedHorizon),
        format!("{:?}", tr.outcome.kind),
    ));

    let pair = FieldPair::new(
        sample_field(model.grid(), Preset::Sine, 0.5),
        sample_field(model.grid(), Preset::Sine, 0.5),
    )
    .map_err(err)?;
    let tr = integrate(&model, &pair, &IntegratorControls::default()).map_err(err)?;
    let rise = max_energy_rise(&tr);
    checks.push(check(
        "phi non-increasing along accepted steps",
        tr.records.len(),
        usize::from(rise > 1e-7),
        format!("largest rise {rise:.3e} x (1+|phi0|)"),
    ));
    let res = energy_identity_residual(&tr).map_err(err)?;
    let phi0 = tr.records[0].energy.phi;
    checks.push(check(
        "dissipation identity residual <= 1e-5 (1+|phi0|)",
        tr.records.len(),
        usize::from(res.max_abs > 1e-5 * (1.0 + phi0.abs())),
        format!("max |r| = {:.3e}", res.max_abs),
    ));
    let d_drop = tr
        .records
        .windows(2)
        .filter(|w| w[1].dissipation < w[0].dissipation)
        .count();
    checks.push(check(
        "D non-decreasing",
        tr.records.len(),
        d_drop,
        String::new(),
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// blowup

fn blowup_suite() -> SuiteResult {
    let model = reference_model(48)?;
    let well = estimate_well_depth(&model, &WellSpec::default()).map_err(err)?;
    let pair = FieldPair::new(
        sample_field(model.grid(), Preset::Sine, 3.0),
        sample_field(model.grid(), Preset::Sine, 3.0),
    )
    .map_err(err)?;
    let class =
        classify_initial_data(&model, &pair, well.d, PsiVariant::Consistent).map_err(err)?;
    if class.verdict != Verdict::BlowUp {
        return Ok(vec![check(
            "reference blow-up data classified BlowUp",
            1,
            1,
            format!("{:?}", class.verdict),
        )]);
    }
    let bound = class.t_max_bound.unwrap_or(f64::INFINITY);
    let controls = IntegratorControls {
        t_end: if bound.is_finite() { 2.0 * bound } else { 10.0 },
        ..IntegratorControls::default()
    };
    let tr = integrate(&model, &pair, &controls).map_err(err)?;
    let blown = tr.outcome.kind == OutcomeKind::BlowUp;
    let mut checks = vec![check(
        "detected blow-up time <= T_max bound",
        1,
        usize::from(!(blown && tr.outcome.t_stop <= bound)),
        format!("t_detect {:.6e}, bound {:.6e}", tr.outcome.t_stop, bound),
    )];
    let viol = norm_growth_violations(&tr, 1e-10);
    checks.push(check(
        "||u||^2+||v||^2 non-decreasing while psi < 0",
        tr.records.len(),
        viol.len(),
        String::new(),
    ));
    let gap = class.d_star - class.phi0;
    let a = gap.max(0.0).sqrt();
    let e0 = tr.records[0].l2sq();
    let sigma = model.params.sigma;
    let b = 2.0 * e0 / (a * (sigma / 2.0 - 1.0));
    if a > 0.0 {
        let lev = levine_diagnostic(&tr, a, b, bound, sigma).map_err(err)?;
        let neg = lev.g.iter().filter(|&&g| g < 0.0).count();
        checks.push(exhibit(
            "concavity functional G = L''L - (sigma/2)L'^2 >= 0",
            lev.g.len(),
            neg,
            format!(
                "worst relative G {:.3e}, horizon estimate {:.6e}",
                lev.worst_relative, lev.horizon_estimate
            ),
        ));
    }
    Ok(checks)
}
