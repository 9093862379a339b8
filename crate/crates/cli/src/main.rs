#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod plot;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kirchwell::config::{Experiment, ExperimentConfig};
use kirchwell::dynamics::{
    decay_fit, energy_identity_residual, integrate, write_trace_csv, DecayFit, OutcomeKind,
    SimTrace, Trigger,
};
use kirchwell::grid::GridField;
use kirchwell::validation::run_validation;
use kirchwell::variational::{
    classify_initial_data, estimate_well_depth, fibering_scan, find_epsilon_star, BracketControls,
    Classification, FiberingRow, ModelError, PsiVariant, WellEstimate,
};
use plot::{figure, Panel, Series};
use serde::Serialize;
use serde_json::json;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_BLOWUP: u8 = 10;

#[derive(Parser)]
#[command(
    name = "kirchwell",
    version,
    about = "Fractional Kirchhoff parabolic system laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the initial data, integrate and write trace, outcome and plots.
    Simulate(Common),
    /// Print the classification of the initial data as JSON.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Amplitude sweep `LO:HI:COUNT`; both initial fields are scaled by each factor.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Scan the fibering map of the initial pair.
    Fibering {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps_min: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Estimate the potential-well depth from sampled directions.
    WellDepth(Common),
    /// Run the invariant suites.
    Validate {
        /// `all` or a comma-separated list of suite names.
        #[arg(long, default_value = "all")]
        scope: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Root output directory; artifacts go to `<DIR>/seed-<N>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    psi_variant: Option<VariantArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Consistent,
    Printed,
}

impl From<VariantArg> for PsiVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Consistent => PsiVariant::Consistent,
            VariantArg::Printed => PsiVariant::Printed,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

struct Loaded {
    config: ExperimentConfig,
    experiment: Experiment,
    variant: PsiVariant,
    dir: PathBuf,
}

fn load(common: &Common) -> Outcome<Loaded> {
    let path = &common.config;
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))
        .map_err(config_err)?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))
        .map_err(config_err)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(v) = common.psi_variant {
        config.psi_variant = v.into();
    }
    if let Some(out) = &common.out {
        config.out_dir = out.to_string_lossy().into_owned();
    }
    let experiment = config
        .build()
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(config_err)?;
    let dir = Path::new(&config.out_dir).join(format!("seed-{}", config.seed));
    Ok(Loaded {
        variant: config.psi_variant,
        config,
        experiment,
        dir,
    })
}

/// Writes `bytes` next to `path` under a temporary name, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| anyhow!("no parent directory for {}", path.display()))?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    text.push('\n');
    write_atomic(&dir.join(name), text.as_bytes()).map_err(runtime_err)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Outcome<()> {
    write_atomic(&dir.join(name), text.as_bytes()).map_err(runtime_err)
}

fn field_csv(field: &GridField) -> Outcome<String> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf).map_err(runtime_err)?;
    String::from_utf8(buf).map_err(runtime_err)
}

fn well(loaded: &Loaded) -> Outcome<WellEstimate> {
    estimate_well_depth(&loaded.experiment.model, &loaded.config.well_spec()).map_err(runtime_err)
}

fn classification_json(c: &Classification) -> serde_json::Value {
    json!({
        "verdict": c.verdict,
        "phi0": c.phi0,
        "psi0": c.psi0,
        "psi_variant": c.psi_variant,
        "d": c.d,
        "d_star": c.d_star,
        "predicted_decay": c.predicted_decay,
        "t_max_bound": c.t_max_bound,
    })
}

// ---------------------------------------------------------------------------
// fibering

struct FiberingResult {
    rows: Vec<FiberingRow>,
    eps_star: Option<(f64, f64)>,
    note: Option<String>,
}

fn fibering(loaded: &Loaded, eps: &[f64]) -> Outcome<FiberingResult> {
    let Experiment { model, pair } = &loaded.experiment;
    let rows = fibering_scan(model, pair, eps).map_err(runtime_err)?;
    let (lo, hi) = (eps[0], eps[eps.len() - 1]);
    let controls = BracketControls::default();
    let star = match find_epsilon_star(model, pair, PsiVariant::Consistent, &controls) {
        Ok(s) if s.eps >= lo && s.eps <= hi => {
            let phi = model
                .ray(pair.u.values(), pair.v.values())
                .phi(s.eps)
                .map_err(runtime_err)?;
            Ok(Some((s.eps, phi)))
        }
        Ok(_) | Err(ModelError::NotBracketed { .. }) => Ok(None),
        Err(e) => Err(runtime_err(e)),
    }?;
    let note = star
        .is_none()
        .then(|| format!("eps* not bracketed in [{lo:.3e}, {hi:.3e}]"));
    Ok(FiberingResult {
        rows,
        eps_star: star,
        note,
    })
}

fn fibering_csv(rows: &[FiberingRow]) -> String {
    let mut s = String::from("eps,phi,psi_consistent,psi_printed\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.eps, r.phi, r.psi_consistent, r.psi_printed
        ));
    }
    s
}

fn fibering_svg(res: &FiberingResult) -> String {
    let eps: Vec<f64> = res.rows.iter().map(|r| r.eps).collect();
    let col = |f: fn(&FiberingRow) -> f64| res.rows.iter().map(f).collect::<Vec<f64>>();
    let markers: Vec<(f64, String)> = res
        .eps_star
        .iter()
        .map(|&(e, phi)| (e, format!("eps* = {e:.4}, phi = {phi:.4}")))
        .collect();
    figure(&[
        Panel {
            title: "Fibering map phi(eps u, eps v)".into(),
            x_label: "eps".into(),
            y_label: "phi".into(),
            log_x: true,
            series: vec![Series::new("phi", &eps, &col(|r| r.phi))],
            markers: markers.clone(),
            note: res.note.clone(),
            ..Panel::default()
        },
        Panel {
            title: "Nehari functional along the ray".into(),
            x_label: "eps".into(),
            y_label: "psi".into(),
            log_x: true,
            series: vec![
                Series::new("psi consistent", &eps, &col(|r| r.psi_consistent)),
                Series::new("psi printed", &eps, &col(|r| r.psi_printed)),
                Series::new("zero", &[eps[0], eps[eps.len() - 1]], &[0.0, 0.0]),
            ],
            markers,
            note: res.note.clone(),
            ..Panel::default()
        },
    ])
}

fn write_fibering(dir: &Path, res: &FiberingResult) -> Outcome<()> {
    write_text(dir, "fibering.csv", &fibering_csv(&res.rows))?;
    write_text(dir, "fibering.svg", &fibering_svg(res))?;
    write_json(
        dir,
        "fibering.json",
        &json!({
            "eps_star": res.eps_star.map(|s| s.0),
            "phi_at_eps_star": res.eps_star.map(|s| s.1),
            "note": res.note,
        }),
    )
}

fn run_fibering(
    common: &Common,
    eps_min: Option<f64>,
    eps_max: Option<f64>,
    count: Option<usize>,
) -> Outcome<u8> {
    let mut loaded = load(common)?;
    let range = &mut loaded.config.fibering;
    range.eps_min = eps_min.unwrap_or(range.eps_min);
    range.eps_max = eps_max.unwrap_or(range.eps_max);
    range.count = count.unwrap_or(range.count);
    if !(range.eps_min > 0.0 && range.eps_max > range.eps_min && range.count >= 2) {
        return Err(config_err(anyhow!("invalid eps range")));
    }
    let res = fibering(&loaded, &loaded.config.fibering.grid())?;
    write_fibering(&loaded.dir, &res)?;
    match res.eps_star {
        Some((e, phi)) => println!("eps* = {e}, phi(eps*) = {phi}"),
        None => println!("{}", res.note.as_deref().unwrap_or("")),
    }
    println!("artifacts in {}", loaded.dir.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// well depth

fn run_well_depth(common: &Common) -> Outcome<u8> {
    let loaded = load(common)?;
    let est = well(&loaded)?;
    let running = est.running_min();
    let mut csv = String::from("index,source,amplitude_ratio,eps_star,phi,running_min\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (s, m) in est.samples.iter().zip(&running) {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.index,
            s.source,
            s.amplitude_ratio,
            opt(s.eps_star),
            opt(s.phi),
            m
        ));
    }
    let dir = &loaded.dir;
    write_text(dir, "well_depth.csv", &csv)?;
    let idx: Vec<f64> = (0..running.len()).map(|i| i as f64).collect();
    write_text(
        dir,
        "well_depth.svg",
        &figure(&[Panel {
            title: "Smallest sampled Nehari energy".into(),
            x_label: "direction".into(),
            y_label: "running min phi".into(),
            series: vec![Series::new("running min", &idx, &running)],
            ..Panel::default()
        }]),
    )?;
    let summary = json!({
        "d": est.d,
        "d_sampled": est.d_sampled,
        "sample_count": est.sample_count,
        "failures": est.failures,
        "seed": loaded.config.seed,
    });
    write_json(dir, "well_depth.json", &summary)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(runtime_err)?
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// classify

fn parse_sweep(spec: &str) -> Outcome<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || config_err(anyhow!("sweep must look like LO:HI:COUNT, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 2 || !(hi > lo) {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

fn run_classify(common: &Common, sweep: Option<&str>) -> Outcome<u8> {
    let loaded = load(common)?;
    let factors = sweep.map(parse_sweep).transpose()?;
    let d = well(&loaded)?.d;
    let Experiment { model, pair } = &loaded.experiment;
    let value = match factors {
        None => {
            let c = classify_initial_data(model, pair, d, loaded.variant).map_err(runtime_err)?;
            classification_json(&c)
        }
        Some(fs) => {
            let mut rows = Vec::with_capacity(fs.len());
            for f in fs {
                let c = classify_initial_data(model, &pair.scaled(f), d, loaded.variant)
                    .map_err(runtime_err)?;
                let mut row = classification_json(&c);
                row["amplitude_scale"] = json!(f);
                rows.push(row);
            }
            serde_json::Value::Array(rows)
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&value).map_err(runtime_err)?
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate

fn outcome_json(trace: &SimTrace, bound: Option<f64>, fit: Option<&DecayFit>) -> serde_json::Value {
    let mut v = json!({
        "kind": trace.outcome.kind,
        "t_max_bound": bound,
        "decay_fit": fit,
    });
    if trace.outcome.kind == OutcomeKind::BlowUp {
        v["t_detect"] = json!(trace.outcome.t_stop);
        v["trigger"] = json!(trace.outcome.trigger.unwrap_or(Trigger::DtFloor));
    }
    v
}

fn trace_plots(dir: &Path, trace: &SimTrace) -> Outcome<()> {
    let t = trace.times();
    let phi = trace.phis();
    let l2: Vec<f64> = trace.records.iter().map(|r| r.l2sq()).collect();
    let phi_panel = |log_y: bool, title: &str| Panel {
        title: title.into(),
        x_label: "t".into(),
        y_label: "phi".into(),
        log_y,
        series: vec![Series::new("phi", &t, &phi)],
        note: (log_y && phi.iter().any(|&p| p <= 0.0))
            .then(|| "non-positive values omitted".to_string()),
        ..Panel::default()
    };
    write_text(
        dir,
        "phi_linear.svg",
        &figure(&[phi_panel(false, "Energy phi(t)")]),
    )?;
    write_text(
        dir,
        "phi_log.svg",
        &figure(&[phi_panel(true, "Energy phi(t), log scale")]),
    )?;
    write_text(
        dir,
        "l2_norm.svg",
        &figure(&[Panel {
            title: "||u||^2 + ||v||^2".into(),
            x_label: "t".into(),
            y_label: "squared L2 norm".into(),
            series: vec![Series::new("||u||^2+||v||^2", &t, &l2)],
            ..Panel::default()
        }]),
    )
}

fn run_simulate(common: &Common) -> Outcome<u8> {
    let loaded = load(common)?;
    let Experiment { model, pair } = &loaded.experiment;
    let dir = &loaded.dir;
    let est = well(&loaded)?;
    let class = classify_initial_data(model, pair, est.d, loaded.variant).map_err(runtime_err)?;
    let trace = integrate(model, pair, &loaded.config.integrator).map_err(runtime_err)?;
    let fit = match trace.outcome.kind {
        OutcomeKind::CompletedHorizon => {
            Some(decay_fit(&trace, loaded.config.tail_fraction).map_err(runtime_err)?)
        }
        _ => None,
    };
    let residual = energy_identity_residual(&trace).ok();

    let mut csv = Vec::new();
    write_trace_csv(&trace, &mut csv).map_err(runtime_err)?;
    write_text(
        dir,
        "trace.csv",
        &String::from_utf8(csv).map_err(runtime_err)?,
    )?;
    write_text(dir, "u0.csv", &field_csv(&pair.u)?)?;
    write_text(dir, "v0.csv", &field_csv(&pair.v)?)?;
    let u_end = pair
        .u
        .with_values(trace.final_u.clone())
        .map_err(runtime_err)?;
    let v_end = pair
        .v
        .with_values(trace.final_v.clone())
        .map_err(runtime_err)?;
    write_text(dir, "u_final.csv", &field_csv(&u_end)?)?;
    write_text(dir, "v_final.csv", &field_csv(&v_end)?)?;
    write_json(dir, "config.json", &loaded.config)?;

    let outcome = outcome_json(&trace, class.t_max_bound, fit.as_ref());
    write_json(dir, "outcome.json", &outcome)?;
    write_json(dir, "classification.json", &classification_json(&class))?;
    trace_plots(dir, &trace)?;
    let fib = fibering(&loaded, &loaded.config.fibering.grid())?;
    write_fibering(dir, &fib)?;

    let blowup = trace.outcome.kind == OutcomeKind::BlowUp;
    let summary = json!({
        "classification": classification_json(&class),
        "classification_note": class.note,
        "outcome": outcome,
        "decay_fit": fit,
        "bound_comparisons": {
            "blowup_time": blowup.then(|| json!({
                "t_detect": trace.outcome.t_stop,
                "t_max_bound": class.t_max_bound,
                "within_bound": class.t_max_bound.is_none_or(|b| trace.outcome.t_stop <= b),
            })),
            "decay_exponent": fit.as_ref().map(|f| json!({
                "fitted": f.poly_exponent,
                "predicted_envelope": class.predicted_decay.exponent,
            })),
        },
        "energy_identity": residual.as_ref().map(|r| json!({"max_abs": r.max_abs, "max_positive": r.max_positive})),
        "steps": {"accepted": trace.records.len().saturating_sub(1), "rejected": trace.rejected_steps},
        "well_depth": {"d": est.d, "directions": est.sample_count, "failures": est.failures},
    });
    write_json(dir, "summary.json", &summary)?;

    println!(
        "{:?}: stopped at t = {} ({} records); artifacts in {}",
        trace.outcome.kind,
        trace.outcome.t_stop,
        trace.records.len(),
        dir.display()
    );
    match trace.outcome.kind {
        OutcomeKind::CompletedHorizon => Ok(0),
        OutcomeKind::BlowUp => Ok(EXIT_BLOWUP),
        OutcomeKind::StepUnderflow | OutcomeKind::StepBudget => Err(runtime_err(anyhow!(
            "integration stopped early ({:?}) at t = {}; artifacts written",
            trace.outcome.kind,
            trace.outcome.t_stop
        ))),
    }
}

// ---------------------------------------------------------------------------
// validate

fn run_validate(scope: &str) -> Outcome<u8> {
    let report = run_validation(scope).map_err(config_err)?;
    for suite in &report.suites {
        for c in &suite.checks {
            let tag = match (c.passed, c.exhibit) {
                (true, _) => "pass",
                (false, true) => "exhibit",
                (false, false) => "FAIL",
            };
            eprintln!(
                "[{tag}] {}: {} ({} samples) {}",
                suite.suite, c.invariant, c.samples, c.detail
            );
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(runtime_err)?
    );
    if report.ok() {
        eprintln!(
            "{} checks passed, {} exhibits",
            report.passed, report.exhibits
        );
        Ok(0)
    } else {
        for (suite, c) in report.failures() {
            eprintln!("failing invariant: {suite}: {}", c.invariant);
        }
        Ok(EXIT_VALIDATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(common) => run_simulate(common),
        Command::Classify { common, sweep } => run_classify(common, sweep.as_deref()),
        Command::Fibering {
            common,
            eps_min,
            eps_max,
            count,
        } => run_fibering(common, *eps_min, *eps_max, *count),
        Command::WellDepth(common) => run_well_depth(common),
        Command::Validate { scope } => run_validate(scope),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
