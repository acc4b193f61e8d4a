//! TOML run configuration. One file drives every subcommand; each command
//! reads only the sections it needs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchOptions, DatasetConfig};
use crate::delay::DelayParams;
use crate::horizon::{Method, Scheme};
use crate::plant::{History, InitialData, PlantSpec, SimOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing section [{0}]")]
    Missing(&'static str),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Horizon methods as named on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HorizonMethod {
    Oracle,
    Euler,
    Rk4,
    Fno,
    Windowed,
}

impl From<HorizonMethod> for Method {
    fn from(m: HorizonMethod) -> Method {
        match m {
            HorizonMethod::Oracle => Method::Oracle,
            HorizonMethod::Euler => Method::Euler,
            HorizonMethod::Rk4 => Method::Rk4,
            HorizonMethod::Fno => Method::Neural,
            HorizonMethod::Windowed => Method::Windowed,
        }
    }
}

/// Matrices as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
}

/// Row-major nested list to a matrix, rejecting ragged or empty input.
pub fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if ncols == 0 {
        return Err(invalid(field, "matrix is empty"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(invalid(field, format!("row {i} has {} entries, expected {ncols}", r.len())));
        }
        if let Some(j) = r.iter().position(|x| !x.is_finite()) {
            return Err(invalid(field, format!("entry ({i}, {j}) is not finite")));
        }
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl PlantSection {
    /// Matrices with dimension checks only; Hurwitz checks are left to the
    /// caller so they can be reported as assumption failures.
    pub fn to_spec(&self) -> Result<PlantSpec, ConfigError> {
        PlantSpec::unchecked(
            matrix("plant.A", &self.a)?,
            matrix("plant.B", &self.b)?,
            matrix("plant.C", &self.c)?,
            matrix("plant.K", &self.k)?,
            matrix("plant.L", &self.l)?,
        )
        .map_err(|e| invalid("plant", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub d1: DelayParams,
    pub d2: Option<DelayParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(rename = "Z0")]
    pub z0: Vec<f64>,
    pub xi0: Vec<f64>,
    /// Defaults to zero.
    pub u_history: Option<History>,
    /// Defaults to `Z0` held constant.
    pub z_history: Option<History>,
}

impl InitSection {
    pub fn to_initial(&self, m: usize) -> InitialData {
        let mut init = InitialData::frozen(self.z0.clone(), self.xi0.clone(), m);
        if let Some(h) = &self.u_history {
            init.u_history = h.clone();
        }
        if let Some(h) = &self.z_history {
            init.z_history = h.clone();
        }
        init
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSection {
    pub method: HorizonMethod,
    /// Step of the ODE methods and of the oracle grid.
    pub h: f64,
    #[serde(rename = "window_H")]
    pub window_h: f64,
    pub window_scheme: Scheme,
    pub weights_path: Option<PathBuf>,
    /// Constant error added to the horizon during simulation.
    pub eps: f64,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self {
            method: HorizonMethod::Oracle,
            h: 1e-3,
            window_h: 1.0,
            window_scheme: Scheme::Euler,
            weights_path: None,
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MarginSection {
    /// Defaults to the identity.
    #[serde(rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Option<Vec<Vec<f64>>>,
    /// ε values for the coefficient table; defaults to a grid up to ε*.
    pub eps_grid: Option<Vec<f64>>,
}

impl MarginSection {
    pub fn weights(&self, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>), ConfigError> {
        let pick = |field: &str, rows: &Option<Vec<Vec<f64>>>| match rows {
            Some(r) => matrix(field, r),
            None => Ok(DMatrix::identity(n, n)),
        };
        Ok((pick("margins.Q", &self.q)?, pick("margins.R", &self.r)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n_delays: usize,
    pub seed: u64,
    pub methods: Vec<HorizonMethod>,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "window_H")]
    pub window_h: f64,
    pub window_scheme: Scheme,
}

impl Default for BenchSection {
    fn default() -> Self {
        let o = BenchOptions::default();
        Self {
            n_delays: 30,
            seed: 0,
            methods: vec![HorizonMethod::Oracle, HorizonMethod::Euler, HorizonMethod::Rk4, HorizonMethod::Windowed],
            h: o.h,
            t_end: o.t_end,
            window_h: o.window_h,
            window_scheme: o.window_scheme,
        }
    }
}

impl BenchSection {
    pub fn options(&self) -> BenchOptions {
        BenchOptions {
            h: self.h,
            t_end: self.t_end,
            window_h: self.window_h,
            window_scheme: self.window_scheme,
        }
    }
}

/// Output paths; command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub trace_csv: Option<PathBuf>,
    pub horizon_csv: Option<PathBuf>,
    pub margins_report: Option<PathBuf>,
    pub margins_csv: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub bench_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: Option<PlantSection>,
    pub delays: Option<DelaySection>,
    pub init: Option<InitSection>,
    pub horizon: HorizonSection,
    pub sim: SimOptions,
    pub margins: MarginSection,
    pub dataset: DatasetConfig,
    pub bench: BenchSection,
    pub outputs: OutputSection,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text, path)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("horizon.h", self.horizon.h)?;
        positive("horizon.window_H", self.horizon.window_h)?;
        if !self.horizon.eps.is_finite() {
            return Err(invalid("horizon.eps", "must be finite"));
        }
        positive("sim.T", self.sim.t_end)?;
        positive("sim.dt", self.sim.dt)?;
        positive("bench.h", self.bench.h)?;
        positive("bench.T", self.bench.t_end)?;
        if let Some(d) = &self.delays {
            for (name, p) in [("delays.d1", Some(d.d1)), ("delays.d2", d.d2)] {
                if let Some(p) = p {
                    if !p.to_row().iter().all(|x| x.is_finite()) {
                        return Err(invalid(name, "parameters must be finite"));
                    }
                }
            }
        }
        if let (Some(plant), Some(init)) = (&self.plant, &self.init) {
            let n = plant.a.len();
            if init.z0.len() != n {
                return Err(invalid("init.Z0", format!("has {} entries, plant order is {n}", init.z0.len())));
            }
            if init.xi0.len() != n {
                return Err(invalid("init.xi0", format!("has {} entries, plant order is {n}", init.xi0.len())));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantSpec, ConfigError> {
        self.plant.as_ref().ok_or(ConfigError::Missing("plant"))?.to_spec()
    }

    pub fn delays(&self) -> Result<&DelaySection, ConfigError> {
        self.delays.as_ref().ok_or(ConfigError::Missing("delays"))
    }

    /// `(D₁, D₂)`; `D₂` defaults to zero measurement delay.
    pub fn delay_pair(&self) -> Result<(DelayParams, DelayParams), ConfigError> {
        let d = self.delays()?;
        Ok((d.d1, d.d2.unwrap_or(DelayParams::constant(0.0))))
    }

    pub fn initial(&self, m: usize) -> Result<InitialData, ConfigError> {
        Ok(self.init.as_ref().ok_or(ConfigError::Missing("init"))?.to_initial(m))
    }
}
