//! Experiment configuration and the objects built from it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::IntegratorControls;
use crate::grid::{
    build_grid, sample_field, validate_params, FieldPair, GridError, ParamError, Preset, RawParams,
    ValidationMode,
};
use crate::kirchhoff::{KirchhoffError, KirchhoffFn};
use crate::variational::{geometric_grid, Model, ModelError, PsiVariant, WellSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
    #[error("invalid Kirchhoff coefficient for {which}: {source}")]
    Kirchhoff {
        which: &'static str,
        #[source]
        source: KirchhoffError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid {0}")]
    Field(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub preset: Preset,
    pub amplitude: f64,
}

/// Direction sampling for the well depth; the seed comes from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WellSampling {
    pub directions: usize,
    pub modes: usize,
    pub refine_sweeps: usize,
}

impl Default for WellSampling {
    fn default() -> Self {
        let w = WellSpec::default();
        WellSampling {
            directions: w.directions,
            modes: w.modes,
            refine_sweeps: w.refine_sweeps,
        }
    }
}

/// Geometric ε grid for fibering scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiberingRange {
    pub eps_min: f64,
    pub eps_max: f64,
    pub count: usize,
}

impl Default for FiberingRange {
    fn default() -> Self {
        FiberingRange {
            eps_min: 0.05,
            eps_max: 5.0,
            count: 201,
        }
    }
}

impl FiberingRange {
    pub fn grid(&self) -> Vec<f64> {
        geometric_grid(self.eps_min, self.eps_max, self.count)
    }
}

fn default_tail() -> f64 {
    0.5
}

fn default_out() -> String {
    "runs".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: RawParams,
    #[serde(default)]
    pub validation: ValidationMode,
    pub grid: GridSpec,
    pub k_p: KirchhoffFn,
    pub k_q: KirchhoffFn,
    pub u0: InitialSpec,
    pub v0: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorControls,
    #[serde(default)]
    pub psi_variant: PsiVariant,
    #[serde(default)]
    pub well: WellSampling,
    #[serde(default)]
    pub fibering: FiberingRange,
    /// Fraction of trace records used by the decay fit.
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_out")]
    pub out_dir: String,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// The 1-D reference setup: `N = 1, s = 1/2, p = 3, q = 3.5, σ = 4`,
    /// `K ≡ 1`, sine data of the given amplitude on 48 nodes.
    pub fn reference(amplitude: f64) -> Self {
        let k = KirchhoffFn::constant(1.0).expect("constant coefficient");
        let init = InitialSpec {
            preset: Preset::Sine,
            amplitude,
        };
        ExperimentConfig {
            params: RawParams {
                n: 1,
                s: 0.5,
                p: 3.0,
                q: 3.5,
                sigma: 4.0,
                beta: 0.0,
            },
            validation: ValidationMode::Strict,
            grid: GridSpec {
                extents: vec![1.0],
                counts: vec![48],
            },
            k_p: k.clone(),
            k_q: k,
            u0: init,
            v0: init,
            integrator: IntegratorControls::default(),
            psi_variant: PsiVariant::Consistent,
            well: WellSampling::default(),
            fibering: FiberingRange::default(),
            tail_fraction: default_tail(),
            out_dir: default_out(),
            seed: 0,
        }
    }

    pub fn well_spec(&self) -> WellSpec {
        WellSpec {
            directions: self.well.directions,
            seed: self.seed,
            modes: self.well.modes,
            refine_sweeps: self.well.refine_sweeps,
        }
    }

    /// Validates everything and assembles the model and initial pair.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        let params = validate_params(self.params, self.validation)?;
        let grid = Arc::new(build_grid(&self.grid.extents, &self.grid.counts)?);
        let k_p = self
            .k_p
            .clone()
            .validated()
            .map_err(|source| ConfigError::Kirchhoff {
                which: "k_p",
                source,
            })?;
        let k_q = self
            .k_q
            .clone()
            .validated()
            .map_err(|source| ConfigError::Kirchhoff {
                which: "k_q",
                source,
            })?;
        if !self.u0.amplitude.is_finite() || !self.v0.amplitude.is_finite() {
            return Err(ConfigError::Field("initial amplitude"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(ConfigError::Field("tail_fraction (must lie in (0, 1])"));
        }
        let f = &self.fibering;
        if !(f.eps_min > 0.0 && f.eps_max > f.eps_min && f.eps_max.is_finite() && f.count >= 2) {
            return Err(ConfigError::Field("fibering range"));
        }
        if self.well.directions == 0 {
            return Err(ConfigError::Field("well.directions (must be positive)"));
        }
        let model = Model::new(params, Arc::clone(&grid), k_p, k_q)?;
        let pair = FieldPair::new(
            sample_field(&grid, self.u0.preset, self.u0.amplitude),
            sample_field(&grid, self.v0.preset, self.v0.amplitude),
        )?;
        Ok(Experiment { model, pair })
    }
}

pub struct Experiment {
    pub model: Model,
    pub pair: FieldPair,
}
