//! Oracle datasets for operator training and wall-clock/accuracy comparison
//! of the horizon methods.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::container::{ContainerError, Tensor, TensorContainer};
use crate::delay::{Delay, DelayError, DelayParams, Sampler, SamplingRanges};
use crate::horizon::{euler_psi, oracle_psi, rk4_psi, uniform_grid, windowed_psi, HorizonError, HorizonSeries, Method, Scheme};
use crate::neural::{NeuralError, OperatorWeights};
use crate::rng::SeededRng;

/// Train/validation fractions; the test split takes the remainder.
pub const SPLIT: (f64, f64) = (0.8, 0.1);
pub const PARAM_NAMES: [&str; 5] = ["a", "b", "alpha", "omega", "varphi"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sample {index}: {source}")]
    Sampling { index: usize, source: DelayError },
    #[error("sample {index}: {source}")]
    Oracle { index: usize, source: HorizonError },
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("dataset container: {0}")]
    Format(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("method {0} needs operator weights")]
    MissingWeights(Method),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    #[serde(rename = "H")]
    pub horizon: f64,
    pub dt: f64,
    pub resolution: usize,
    pub seed: u64,
    pub ranges: SamplingRanges,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            horizon: 12.0,
            dt: 1e-3,
            resolution: 1024,
            seed: 0,
            ranges: SamplingRanges::default(),
        }
    }
}

impl DatasetConfig {
    /// Decimation stride from the `dt` grid when `resolution` points land on
    /// it exactly.
    pub fn stride(&self) -> Option<usize> {
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon || self.resolution < 2 {
            return None;
        }
        let steps = steps as usize;
        (steps % (self.resolution - 1) == 0).then(|| steps / (self.resolution - 1))
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.resolution;
        match self.stride() {
            Some(s) => (0..n).map(|j| (j * s) as f64 * self.dt).collect(),
            None => (0..n).map(|j| self.horizon * j as f64 / (n - 1) as f64).collect(),
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.n_samples == 0 {
            return Err(BenchError::Config("n_samples must be positive".into()));
        }
        if self.resolution < 2 {
            return Err(BenchError::Config("resolution must be at least 2".into()));
        }
        if !(self.horizon > 0.0 && self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(BenchError::Config(format!("need 0 < dt <= H, got dt = {}, H = {}", self.dt, self.horizon)));
        }
        Ok(())
    }
}

/// Split sizes `(train, val, test)` for `n` samples.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = ((n as f64 * SPLIT.0).round() as usize).min(n);
    let val = ((n as f64 * SPLIT.1).round() as usize).min(n - train);
    (train, val, n - train - val)
}

fn one_series(cfg: &DatasetConfig, index: usize, grid: &[f64]) -> Result<(DelayParams, Vec<f64>, Vec<f64>), BenchError> {
    let sampler = Sampler {
        ranges: cfg.ranges,
        horizon: cfg.horizon,
        grid_step: cfg.dt,
        ..Sampler::default()
    };
    let params = sampler
        .sample(cfg.seed.wrapping_add(index as u64))
        .map_err(|source| BenchError::Sampling { index, source })?
        .params;
    let psi = match cfg.stride() {
        Some(s) => {
            let steps = (cfg.resolution - 1) * s;
            let fine: Vec<f64> = (0..=steps).map(|k| k as f64 * cfg.dt).collect();
            let full = oracle_psi(&params, &fine).map_err(|source| BenchError::Oracle { index, source })?;
            full.values.into_iter().step_by(s).collect()
        }
        None => oracle_psi(&params, grid).map_err(|source| BenchError::Oracle { index, source })?.values,
    };
    let d = grid.iter().map(|&t| params.value(t)).collect();
    Ok((params, d, psi))
}

/// Sample `n_samples` admissible delays (sample `i` seeded with `seed + i`),
/// compute oracle horizons and store them on the `resolution`-point grid
/// with an 80/10/10 split drawn by seeded shuffle.
pub fn gen_dataset(cfg: &DatasetConfig) -> Result<TensorContainer, BenchError> {
    cfg.validate()?;
    let n = cfg.resolution;
    let grid = cfg.grid();
    let rows: Vec<_> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| one_series(cfg, i, &grid))
        .collect::<Result<_, _>>()?;

    let mut params = Vec::with_capacity(cfg.n_samples * 5);
    let mut d = Vec::with_capacity(cfg.n_samples * n);
    let mut psi = Vec::with_capacity(cfg.n_samples * n);
    for (p, dv, pv) in rows {
        params.extend_from_slice(&p.to_row());
        d.extend(dv);
        psi.extend(pv);
    }

    let mut order: Vec<usize> = (0..cfg.n_samples).collect();
    SeededRng::new(!cfg.seed).shuffle(&mut order);
    let (n_train, n_val, _) = split_sizes(cfg.n_samples);
    let idx = |s: &[usize]| s.iter().map(|&i| i as f64).collect::<Vec<_>>();
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);

    let mut c = TensorContainer::new(json!({
        "kind": "dataset",
        "n_samples": cfg.n_samples,
        "H": cfg.horizon,
        "dt": cfg.dt,
        "resolution": n,
        "seed": cfg.seed,
        "ranges": cfg.ranges,
        "params_layout": PARAM_NAMES,
        "grid_source": if cfg.stride().is_some() { "decimated" } else { "direct" },
        "split": [SPLIT.0, SPLIT.1, 1.0 - SPLIT.0 - SPLIT.1],
    }));
    c.push(Tensor::f64("params", vec![cfg.n_samples, 5], params)?)?;
    c.push(Tensor::f64("D", vec![cfg.n_samples, n], d)?)?;
    c.push(Tensor::f64("psi", vec![cfg.n_samples, n], psi)?)?;
    c.push(Tensor::f64("grid", vec![n], grid)?)?;
    c.push(Tensor::f64("train_idx", vec![train.len()], idx(train))?)?;
    c.push(Tensor::f64("val_idx", vec![val.len()], idx(val))?)?;
    c.push(Tensor::f64("test_idx", vec![test.len()], idx(test))?)?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetCheck {
    pub rows: usize,
    /// Largest `|φ(t + ψ) − t|` over every stored point.
    pub max_residual: f64,
    /// Largest `|D − D(params)|`, which is zero unless the file was altered.
    pub max_delay_mismatch: f64,
}

/// Recompute the consistency residual of every stored ψ from the stored
/// parameters.
pub fn verify_dataset(c: &TensorContainer) -> Result<DatasetCheck, BenchError> {
    let get = |name: &str| c.get(name).ok_or_else(|| BenchError::Format(format!("missing tensor {name:?}")));
    let params = get("params")?;
    let grid = get("grid")?.data.to_f64();
    let psi = get("psi")?.data.to_f64();
    let d = get("D")?.data.to_f64();
    let rows = params.dims.first().copied().unwrap_or(0);
    let n = grid.len();
    if params.dims != [rows, 5] || psi.len() != rows * n || d.len() != rows * n {
        return Err(BenchError::Format("params/D/psi/grid shapes disagree".into()));
    }
    let p = params.data.to_f64();
    let (max_residual, max_delay_mismatch) = (0..rows)
        .into_par_iter()
        .map(|r| {
            let delay = DelayParams::from_row(&p[r * 5..r * 5 + 5]);
            let mut worst = (0.0f64, 0.0f64);
            for (j, &t) in grid.iter().enumerate() {
                let s = psi[r * n + j];
                worst.0 = worst.0.max((delay.phi(t + s) - t).abs());
                worst.1 = worst.1.max((d[r * n + j] - delay.value(t)).abs());
            }
            worst
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(DatasetCheck {
        rows,
        max_residual,
        max_delay_mismatch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    /// Step of the ODE methods and of the oracle grid.
    pub h: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "window_H")]
    pub window_h: f64,
    pub window_scheme: Scheme,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            h: 1e-2,
            t_end: 12.0,
            window_h: 1.0,
            window_scheme: Scheme::Euler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub method: Method,
    pub n_evals: usize,
    pub n_failed: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Mean over samples of the per-sample max consistency residual.
    pub mean_residual: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn run_method(
    method: Method,
    delay: &DelayParams,
    opts: &BenchOptions,
    weights: Option<&OperatorWeights>,
) -> Result<HorizonSeries, String> {
    match method {
        Method::Oracle => uniform_grid(opts.h, opts.t_end)
            .and_then(|g| oracle_psi(delay, &g))
            .map_err(|e| e.to_string()),
        Method::Euler => euler_psi(delay, opts.h, opts.t_end).map_err(|e| e.to_string()),
        Method::Rk4 => rk4_psi(delay, opts.h, opts.t_end).map_err(|e| e.to_string()),
        Method::Windowed => {
            windowed_psi(delay, opts.window_h, opts.window_scheme, opts.t_end, opts.h).map_err(|e| e.to_string())
        }
        Method::Neural => weights
            .expect("checked by caller")
            .horizon(delay)
            .map_err(|e: NeuralError| e.to_string()),
    }
}

/// Time a full-horizon evaluation of every method on every delay. Runs in a
/// one-thread pool, one evaluation at a time. Failed samples are counted and
/// excluded from the statistics.
pub fn bench_methods(
    delays: &[DelayParams],
    methods: &[Method],
    opts: &BenchOptions,
    weights: Option<&OperatorWeights>,
) -> Result<Vec<BenchResult>, BenchError> {
    if let Some(&m) = methods.iter().find(|&&m| m == Method::Neural && weights.is_none()) {
        return Err(BenchError::MissingWeights(m));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        methods
            .iter()
            .map(|&method| {
                let mut times = Vec::with_capacity(delays.len());
                let mut residuals = Vec::with_capacity(delays.len());
                let mut n_failed = 0;
                for delay in delays {
                    let start = Instant::now();
                    let out = run_method(method, delay, opts, weights);
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    match out {
                        Ok(series) => {
                            times.push(ms);
                            residuals.push(series.residuals(delay).into_iter().fold(0.0, f64::max));
                        }
                        Err(e) => {
                            log::warn!("{method} failed on {delay:?}: {e}");
                            n_failed += 1;
                        }
                    }
                }
                let n = times.len();
                let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
                let mean_ms = mean(&times);
                let mean_residual = mean(&residuals);
                times.sort_by(f64::total_cmp);
                BenchResult {
                    method,
                    n_evals: n,
                    n_failed,
                    mean_ms,
                    p50_ms: percentile(&times, 0.5),
                    p95_ms: percentile(&times, 0.95),
                    mean_residual,
                }
            })
            .collect()
    }))
}

/// CSV with header `method,n,mean_ms,p50_ms,p95_ms,mean_residual`.
pub fn write_bench_csv<W: Write>(results: &[BenchResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "n", "mean_ms", "p50_ms", "p95_ms", "mean_residual"])?;
    for r in results {
        w.write_record([
            r.method.to_string(),
            r.n_evals.to_string(),
            r.mean_ms.to_string(),
            r.p50_ms.to_string(),
            r.p95_ms.to_string(),
            r.mean_residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
