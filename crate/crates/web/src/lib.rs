//! Browser bindings: a fibering scan, the nonlocal operator on a preset
//! profile, and a short simulation. Each returns JSON.

use std::sync::Arc;

use kirchwell::config::ExperimentConfig;
use kirchwell::dynamics::{integrate, IntegratorControls};
use kirchwell::fracops::FracKernel;
use kirchwell::grid::{build_grid, sample_field, Preset};
use kirchwell::variational::{
    classify_initial_data, estimate_well_depth, fibering_scan, find_epsilon_star, geometric_grid,
    BracketControls, PsiVariant, WellSpec,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 256;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn preset(name: &str) -> Result<Preset, String> {
    name.parse::<Preset>().map_err(err)
}

fn nodes_ok(nodes: usize) -> Result<(), String> {
    if (2..=MAX_NODES).contains(&nodes) {
        Ok(())
    } else {
        Err(format!("nodes must lie in 2..={MAX_NODES}"))
    }
}

fn experiment(
    u: &str,
    v: &str,
    amplitude: f64,
    nodes: usize,
) -> Result<kirchwell::config::Experiment, String> {
    nodes_ok(nodes)?;
    let mut cfg = ExperimentConfig::reference(amplitude);
    cfg.u0.preset = preset(u)?;
    cfg.v0.preset = preset(v)?;
    cfg.grid.counts = vec![nodes];
    cfg.build().map_err(err)
}

#[derive(Serialize)]
struct FiberingCurve {
    eps: Vec<f64>,
    phi: Vec<f64>,
    psi_consistent: Vec<f64>,
    psi_printed: Vec<f64>,
    eps_star: Option<f64>,
}

pub fn fibering_curve_json(
    u: &str,
    v: &str,
    nodes: usize,
    eps_min: f64,
    eps_max: f64,
    count: usize,
) -> Result<String, String> {
    if !(eps_min > 0.0 && eps_max > eps_min && (2..=2000).contains(&count)) {
        return Err("need 0 < eps_min < eps_max and 2 <= count <= 2000".into());
    }
    let exp = experiment(u, v, 1.0, nodes)?;
    let rows = fibering_scan(
        &exp.model,
        &exp.pair,
        &geometric_grid(eps_min, eps_max, count),
    )
    .map_err(err)?;
    let eps_star = find_epsilon_star(
        &exp.model,
        &exp.pair,
        PsiVariant::Consistent,
        &BracketControls::default(),
    )
    .ok()
    .map(|s| s.eps)
    .filter(|e| (eps_min..=eps_max).contains(e));
    let curve = FiberingCurve {
        eps: rows.iter().map(|r| r.eps).collect(),
        phi: rows.iter().map(|r| r.phi).collect(),
        psi_consistent: rows.iter().map(|r| r.psi_consistent).collect(),
        psi_printed: rows.iter().map(|r| r.psi_printed).collect(),
        eps_star,
    };
    serde_json::to_string(&curve).map_err(err)
}

#[derive(Serialize)]
struct OperatorView {
    x: Vec<f64>,
    u: Vec<f64>,
    lu: Vec<f64>,
    bracket: f64,
}

pub fn operator_json(
    profile: &str,
    amplitude: f64,
    p: f64,
    s: f64,
    nodes: usize,
) -> Result<String, String> {
    nodes_ok(nodes)?;
    let grid = Arc::new(build_grid(&[1.0], &[nodes]).map_err(err)?);
    let kernel = FracKernel::new(Arc::clone(&grid), p, s).map_err(err)?;
    let u = sample_field(&grid, preset(profile)?, amplitude);
    let lu = kernel.apply(&u).map_err(err)?;
    let view = OperatorView {
        x: (0..grid.len()).map(|i| grid.node(i)[0]).collect(),
        bracket: kernel.bracket(&u).map_err(err)?,
        u: u.into_values(),
        lu: lu.into_values(),
    };
    serde_json::to_string(&view).map_err(err)
}

#[derive(Serialize)]
struct SimulationView {
    verdict: String,
    outcome: String,
    t_stop: f64,
    t_max_bound: Option<f64>,
    t: Vec<f64>,
    phi: Vec<f64>,
    l2sq: Vec<f64>,
}

pub fn simulate_json(
    profile: &str,
    amplitude: f64,
    t_end: f64,
    nodes: usize,
) -> Result<String, String> {
    if !(t_end > 0.0 && t_end <= 100.0) {
        return Err("t_end must lie in (0, 100]".into());
    }
    let exp = experiment(profile, profile, amplitude, nodes)?;
    let well = estimate_well_depth(
        &exp.model,
        &WellSpec {
            directions: 32,
            ..WellSpec::default()
        },
    )
    .map_err(err)?;
    let class = classify_initial_data(&exp.model, &exp.pair, well.d, PsiVariant::Consistent)
        .map_err(err)?;
    let trace = integrate(
        &exp.model,
        &exp.pair,
        &IntegratorControls {
            t_end,
            max_steps: 20_000,
            ..IntegratorControls::default()
        },
    )
    .map_err(err)?;
    let view = SimulationView {
        verdict: format!("{:?}", class.verdict),
        outcome: format!("{:?}", trace.outcome.kind),
        t_stop: trace.outcome.t_stop,
        t_max_bound: class.t_max_bound,
        t: trace.times(),
        phi: trace.phis(),
        l2sq: trace.records.iter().map(|r| r.l2sq()).collect(),
    };
    serde_json::to_string(&view).map_err(err)
}

#[wasm_bindgen]
pub fn fibering_curve(
    u: &str,
    v: &str,
    nodes: usize,
    eps_min: f64,
    eps_max: f64,
    count: usize,
) -> Result<String, JsError> {
    fibering_curve_json(u, v, nodes, eps_min, eps_max, count).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn operator_profile(
    profile: &str,
    amplitude: f64,
    p: f64,
    s: f64,
    nodes: usize,
) -> Result<String, JsError> {
    operator_json(profile, amplitude, p, s, nodes).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    profile: &str,
    amplitude: f64,
    t_end: f64,
    nodes: usize,
) -> Result<String, JsError> {
    simulate_json(profile, amplitude, t_end, nodes).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn fibering_curve_has_one_marker() {
        let v: Value =
            serde_json::from_str(&fibering_curve_json("sine", "bump", 32, 0.1, 10.0, 50).unwrap())
                .unwrap();
        assert_eq!(v["eps"].as_array().unwrap().len(), 50);
        assert!(v["eps_star"].as_f64().unwrap() > 0.1);
    }

    #[test]
    fn operator_on_constant_vanishes() {
        let v: Value =
            serde_json::from_str(&operator_json("constant", 1.0, 2.0, 0.5, 16).unwrap()).unwrap();
        let lu = v["lu"].as_array().unwrap();
        // differences vanish inside U and the exterior is never read
        assert!(lu.iter().all(|x| x.as_f64().unwrap().abs() < 1e-12));
        assert_eq!(v["bracket"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn small_simulation_decays() {
        let v: Value = serde_json::from_str(&simulate_json("sine", 0.5, 1.0, 24).unwrap()).unwrap();
        assert_eq!(v["outcome"], "CompletedHorizon");
        let phi = v["phi"].as_array().unwrap();
        assert!(phi.last().unwrap().as_f64() < phi[0].as_f64());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(operator_json("triangle", 1.0, 2.0, 0.5, 16).is_err());
        assert!(simulate_json("sine", 1.0, 1.0, 5000).is_err());
        assert!(fibering_curve_json("sine", "sine", 16, 2.0, 1.0, 10).is_err());
    }
}
