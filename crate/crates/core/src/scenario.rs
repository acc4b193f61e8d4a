//! A closed-loop run assembled from a [`Config`].

use std::path::Path;

use thiserror::Error;

use crate::config::{Config, ConfigError, HorizonMethod};
use crate::container::ContainerError;
use crate::delay::{check_assumptions, AssumptionReport, DelayParams, DEFAULT_GRID_STEP};
use crate::horizon::{euler_psi, oracle_psi, rk4_psi, uniform_grid, windowed_psi, HorizonError, HorizonSeries, Scheme};
use crate::linalg::LinalgError;
use crate::neural::{NeuralError, OperatorWeights};
use crate::plant::{gamma_decay_fit, simulate, DecayFit, InitialData, Perturbed, PlantError, PlantSpec, SimOptions, SimulationTrace};

/// Failure classes with distinct exit codes.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("I/O: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Io { .. }) => 4,
            RunError::Config(_) => 1,
            RunError::Assumption(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<PlantError> for RunError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::Linalg(LinalgError::NotHurwitz { .. }) => RunError::Assumption(e.to_string()),
            PlantError::Dimension(_) | PlantError::InitialData(_) | PlantError::HistoryCoverage { .. } | PlantError::Options(_) => {
                RunError::Config(ConfigError::Invalid {
                    field: "plant/init/sim".into(),
                    message: e.to_string(),
                })
            }
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

impl From<HorizonError> for RunError {
    fn from(e: HorizonError) -> Self {
        match e {
            HorizonError::BadStep { .. } | HorizonError::BadWindow(_) | HorizonError::GridMismatch { .. } => {
                RunError::Config(ConfigError::Invalid {
                    field: "horizon".into(),
                    message: e.to_string(),
                })
            }
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

impl From<NeuralError> for RunError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Container(ContainerError::Io(_)) => RunError::Io(e.to_string()),
            _ => RunError::Config(ConfigError::Invalid {
                field: "weights".into(),
                message: e.to_string(),
            }),
        }
    }
}

/// Scan `delay` on `[0, t_end]` and fail with the first violation.
pub fn require_assumptions(name: &str, delay: &DelayParams, t_end: f64) -> Result<AssumptionReport, RunError> {
    let rep = check_assumptions(delay, t_end, DEFAULT_GRID_STEP);
    if rep.valid {
        Ok(rep)
    } else {
        Err(RunError::Assumption(format!(
            "{name}: D > 0 and φ′ > 0 fail at t = {}",
            rep.first_violation_time.unwrap_or(f64::NAN)
        )))
    }
}

/// Settings for one horizon computation.
#[derive(Debug, Clone, Copy)]
pub struct HorizonRequest<'a> {
    pub method: HorizonMethod,
    pub h: f64,
    pub t_end: f64,
    pub window_h: f64,
    pub window_scheme: Scheme,
    pub weights: Option<&'a OperatorWeights>,
}

pub fn compute_horizon(delay: &DelayParams, req: &HorizonRequest) -> Result<HorizonSeries, RunError> {
    Ok(match req.method {
        HorizonMethod::Oracle => oracle_psi(delay, &uniform_grid(req.h, req.t_end)?)?,
        HorizonMethod::Euler => euler_psi(delay, req.h, req.t_end)?,
        HorizonMethod::Rk4 => rk4_psi(delay, req.h, req.t_end)?,
        HorizonMethod::Windowed => windowed_psi(delay, req.window_h, req.window_scheme, req.t_end, req.h)?,
        HorizonMethod::Fno => {
            let w = req.weights.ok_or_else(|| {
                RunError::Config(ConfigError::Invalid {
                    field: "weights".into(),
                    message: "the fno method needs a weights file".into(),
                })
            })?;
            w.horizon(delay)?
        }
    })
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: PlantSpec,
    pub d1: DelayParams,
    pub d2: DelayParams,
    pub init: InitialData,
    pub sim: SimOptions,
    pub report1: AssumptionReport,
    pub report2: AssumptionReport,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub trace: SimulationTrace,
    pub horizon: HorizonSeries,
    pub fit: Result<DecayFit, String>,
    /// `Γ(T)/Γ(0)`
    pub gamma_ratio: f64,
}

impl Scenario {
    /// Builds the scenario and checks both delays and both gains.
    pub fn from_config(cfg: &Config) -> Result<Scenario, RunError> {
        let spec = cfg.plant()?;
        spec.check_hurwitz()?;
        let (d1, d2) = cfg.delay_pair()?;
        let init = cfg.initial(spec.m())?;
        let report1 = require_assumptions("delays.d1", &d1, cfg.sim.t_end)?;
        // a zero measurement delay is allowed
        let report2 = if d2 == DelayParams::constant(0.0) {
            check_assumptions(&d2, cfg.sim.t_end, DEFAULT_GRID_STEP)
        } else {
            require_assumptions("delays.d2", &d2, cfg.sim.t_end)?
        };
        Ok(Scenario {
            spec,
            d1,
            d2,
            init,
            sim: cfg.sim,
            report1,
            report2,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, RunError> {
        Scenario::from_config(&Config::load(path)?)
    }

    /// Horizon of the input delay for the whole run.
    pub fn horizon(&self, req: &HorizonRequest) -> Result<HorizonSeries, RunError> {
        compute_horizon(&self.d1, &HorizonRequest { t_end: self.sim.t_end, ..*req })
    }

    /// Runs the loop with `ψ̂ = horizon + eps`.
    pub fn run_with(&self, horizon: HorizonSeries, eps: f64) -> Result<SimulationOutcome, RunError> {
        let provider = Perturbed { inner: horizon.clone(), eps };
        let trace = simulate(&self.spec, &self.d1, &self.d2, &self.init, &provider, &self.sim)?;
        let g = trace.gamma();
        let gamma_ratio = g[g.len() - 1] / g[0];
        let fit = gamma_decay_fit(&trace).map_err(|e| e.to_string());
        Ok(SimulationOutcome {
            trace,
            horizon,
            fit,
            gamma_ratio,
        })
    }

    pub fn run(&self, req: &HorizonRequest, eps: f64) -> Result<SimulationOutcome, RunError> {
        self.run_with(self.horizon(req)?, eps)
    }
}
