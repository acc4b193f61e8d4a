//! Closed-loop simulation of `Ż(t) = A Z(t) + B U(φ₁(t))`, `Y(t) = C Z(φ₂(t))`
//! under the observer–predictor law:
//!
//! ```text
//! ξ̇ = φ₂′(t) [A ξ + B U(φ₁(φ₂(t))) + L (Y − C ξ)]
//! Ẑ = e^{A(t−φ₂(t))} ξ + ∫_{φ₂(t)}^{t} e^{A(t−τ)} B U(φ₁(τ)) dτ
//! P̂ = e^{Aψ̂(t)} Ẑ + ∫_{t}^{t+ψ̂(t)} e^{A(t+ψ̂(t)−s)} B U(φ₁(s)) ds
//! U = K P̂
//! ```

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::Delay;
use crate::history::{HistoryBuffer, HistoryError, Lookup};
use crate::horizon::HorizonSeries;
use crate::linalg::{check_hurwitz, expm, LinalgError};
use crate::rng::SeededRng;

/// Slack used when classifying a predictor lookup as non-causal.
pub const CAUSALITY_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{which} history covers [{start}, {end}] but [{required}, 0] is required")]
    HistoryCoverage {
        which: &'static str,
        required: f64,
        start: f64,
        end: f64,
    },
    #[error("bad initial data: {0}")]
    InitialData(String),
    #[error("step {step} (t = {t}): {source}")]
    History {
        step: usize,
        t: f64,
        #[source]
        source: HistoryError,
    },
    #[error("step {step} (t = {t}): {source}")]
    Numeric {
        step: usize,
        t: f64,
        #[source]
        source: LinalgError,
    },
    #[error("step {step} (t = {t}): state became non-finite")]
    NonFinite { step: usize, t: f64 },
    #[error("invalid simulation options: {0}")]
    Options(String),
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),
}

/// Plant matrices and gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl PlantSpec {
    /// Builds a spec after checking dimensions and that `A+BK` and `A−LC`
    /// are Hurwitz.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        k: DMatrix<f64>,
        l: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let spec = Self::unchecked(a, b, c, k, l)?;
        spec.check_hurwitz()?;
        Ok(spec)
    }

    /// Dimension checks only.
    pub fn unchecked(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        k: DMatrix<f64>,
        l: DMatrix<f64>,
    ) -> Result<Self, PlantError> {
        let n = a.nrows();
        let dim = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(PlantError::Dimension(format!("{what} is {}×{}, expected {}×{}", got.0, got.1, want.0, want.1)))
            }
        };
        if n == 0 {
            return Err(PlantError::Dimension("A is empty".into()));
        }
        dim("A", a.shape(), (n, n))?;
        let m = b.ncols();
        let p = c.nrows();
        dim("B", b.shape(), (n, m))?;
        dim("C", c.shape(), (p, n))?;
        dim("K", k.shape(), (m, n))?;
        dim("L", l.shape(), (n, p))?;
        Ok(PlantSpec { a, b, c, k, l })
    }

    /// The second-order example `A = [[0,1],[1,2]]`, `B = [0,1]ᵀ`, `C = [1,−1]`,
    /// `K = [−4,−4]`, `L = [−4,−8]ᵀ`.
    pub fn example() -> Self {
        PlantSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[-4.0, -4.0]),
            DMatrix::from_row_slice(2, 1, &[-4.0, -8.0]),
        )
        .expect("example plant is well formed")
    }

    pub fn check_hurwitz(&self) -> Result<(), PlantError> {
        check_hurwitz(&(&self.a + &self.b * &self.k), "A+BK")?;
        check_hurwitz(&(&self.a - &self.l * &self.c), "A-LC")?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// Pre-history of a signal on `θ ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum History {
    Const { value: Vec<f64> },
    /// Samples at increasing times, interpolated linearly.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl History {
    pub fn constant(value: Vec<f64>) -> Self {
        History::Const { value }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            History::Const { value } => Some(value.len()),
            History::Table { values, .. } => values.first().map(Vec::len),
        }
    }

    /// `join` is the width of the interval `[−join, 0]` over which a constant
    /// history blends into the first simulated sample.
    fn into_buffer(&self, which: &'static str, required: f64, dim: usize, join: f64) -> Result<HistoryBuffer, PlantError> {
        if self.dim() != Some(dim) {
            return Err(PlantError::InitialData(format!("{which} history must have {dim} components")));
        }
        let mut buf = HistoryBuffer::new(dim);
        let wrap = |e: HistoryError| PlantError::InitialData(format!("{which} history: {e}"));
        match self {
            History::Const { value } => {
                let start = required.min(-join) - 1.0;
                buf.push(start, value).map_err(wrap)?;
                buf.push(-join, value).map_err(wrap)?;
                buf.push(0.0, value).map_err(wrap)?;
            }
            History::Table { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(PlantError::InitialData(format!(
                        "{which} history has {} times and {} values",
                        times.len(),
                        values.len()
                    )));
                }
                for (t, v) in times.iter().zip(values) {
                    if *t > 0.0 {
                        break;
                    }
                    buf.push(*t, v).map_err(wrap)?;
                }
                let (start, end) = (buf.start().unwrap_or(f64::NAN), buf.end().unwrap_or(f64::NAN));
                // tolerate rounding at the left edge of a generated table
                if !(start <= required + 1e-12 && end >= -1e-12) {
                    return Err(PlantError::HistoryCoverage {
                        which,
                        required,
                        start,
                        end,
                    });
                }
            }
        }
        Ok(buf)
    }
}

/// `Z(0)`, `ξ(0)` and the histories of `U` and `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub z0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub u_history: History,
    pub z_history: History,
}

impl InitialData {
    /// Zero input history and state history frozen at `z0`.
    pub fn frozen(z0: Vec<f64>, xi0: Vec<f64>, m: usize) -> Self {
        InitialData {
            u_history: History::constant(vec![0.0; m]),
            z_history: History::constant(z0.clone()),
            z0,
            xi0,
        }
    }
}

/// Anything that yields `ψ̂(t)`.
pub trait HorizonProvider {
    fn horizon(&self, t: f64) -> f64;
}

impl HorizonProvider for HorizonSeries {
    fn horizon(&self, t: f64) -> f64 {
        self.interpolate(t)
    }
}

impl<F: Fn(f64) -> f64> HorizonProvider for F {
    fn horizon(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Adds a constant error to another provider.
pub struct Perturbed<H> {
    pub inner: H,
    pub eps: f64,
}

impl<H: HorizonProvider> HorizonProvider for Perturbed<H> {
    fn horizon(&self, t: f64) -> f64 {
        self.inner.horizon(t) + self.eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    /// Standard deviation of Gaussian noise added to `Y`; zero disables it.
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_end: 12.0,
            dt: 1e-3,
            noise_std: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub zhat: Vec<f64>,
    pub phat: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub psi_hat: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
    /// Predictor lookups `U(φ₁(s))` with `φ₁(s) > t`, served by clamping.
    pub noncausal_lookups: usize,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let Some(r) = self.records.first() else {
            return vec!["t".into(), "psi_hat".into(), "gamma".into()];
        };
        let mut h = vec!["t".to_string()];
        for (name, len) in [
            ("Z", r.z.len()),
            ("xi", r.xi.len()),
            ("Zhat", r.zhat.len()),
            ("Phat", r.phat.len()),
            ("U", r.u.len()),
            ("Y", r.y.len()),
        ] {
            h.extend((1..=len).map(|i| format!("{name}_{i}")));
        }
        h.push("psi_hat".into());
        h.push("gamma".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut row = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(r.t);
            for part in [&r.z, &r.xi, &r.zhat, &r.phat, &r.u, &r.y] {
                row.extend_from_slice(part);
            }
            row.push(r.psi_hat);
            row.push(r.gamma);
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row-major dense matrix for the inner loops.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Dense {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// `out = self · x`
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += s · self · x`
    fn apply_add(&self, s: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o += s * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

struct Loop<'a> {
    a_mat: &'a DMatrix<f64>,
    a: Dense,
    b: Dense,
    c: Dense,
    k: Dense,
    l: Dense,
    d1: &'a dyn Delay,
    d2: &'a dyn Delay,
    quad_step: f64,
    u_hist: HistoryBuffer,
    z_hist: HistoryBuffer,
    noncausal: usize,
    // scratch
    u_buf: Vec<f64>,
    bu: Vec<f64>,
    acc: Vec<f64>,
    tmp: Vec<f64>,
}

enum Stage {
    Reconstruct,
    Predict { now: f64 },
}

impl Loop<'_> {
    /// `∫_{lo}^{hi} e^{A(hi−s)} B U(φ₁(s)) ds` by the composite trapezoid rule,
    /// accumulated Horner-style with one `e^{Aδ}` per call.
    fn convolution(&mut self, lo: f64, hi: f64, stage: Stage, step: usize) -> Result<Vec<f64>, PlantError> {
        let n = self.a.rows;
        let len = hi - lo;
        if !(len > 0.0) {
            return Ok(vec![0.0; n]);
        }
        let nodes = ((len / self.quad_step) - 1e-9).ceil().max(1.0) as usize;
        let delta = len / nodes as f64;
        let e = Dense::from(&expm(self.a_mat, delta).map_err(|source| PlantError::Numeric { step, t: lo, source })?);
        self.acc.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..=nodes {
            let s = if j == nodes { hi } else { lo + j as f64 * delta };
            let arg = self.d1.phi(s);
            let looked = self.u_hist.sample(arg, &mut self.u_buf).map_err(|source| PlantError::History {
                step,
                t: s,
                source,
            })?;
            if let Stage::Predict { now } = stage {
                if looked == Lookup::Clamped && arg > now + CAUSALITY_SLACK {
                    self.noncausal += 1;
                    log::trace!("step {step}: non-causal lookup U({arg}) at t = {now}");
                }
            }
            if j > 0 {
                e.apply(&self.acc, &mut self.tmp);
                self.acc.copy_from_slice(&self.tmp);
            }
            let w = if j == 0 || j == nodes { 0.5 } else { 1.0 };
            self.b.apply(&self.u_buf, &mut self.bu);
            for (a, b) in self.acc.iter_mut().zip(&self.bu) {
                *a += w * b;
            }
        }
        Ok(self.acc.iter().map(|x| x * delta).collect())
    }

    /// Right-hand side of the joint `(Z, ξ)` system at time `tau`.
    fn rhs(&mut self, tau: f64, x: &[f64], noise: &[f64], out: &mut [f64], step: usize) -> Result<(), PlantError> {
        let n = self.a.rows;
        let (z, xi) = x.split_at(n);
        let (dz, dxi) = out.split_at_mut(n);
        let hist_err = |source| PlantError::History { step, t: tau, source };

        // plant
        self.u_hist.sample(self.d1.phi(tau), &mut self.u_buf).map_err(hist_err)?;
        self.a.apply(z, dz);
        self.b.apply_add(1.0, &self.u_buf, dz);

        // observer
        let phi2 = self.d2.phi(tau);
        let mut z_delayed = vec![0.0; n];
        self.z_hist.sample(phi2, &mut z_delayed).map_err(hist_err)?;
        let p = self.c.rows;
        let mut innov = vec![0.0; p];
        self.c.apply(&z_delayed, &mut innov);
        let mut cxi = vec![0.0; p];
        self.c.apply(xi, &mut cxi);
        for ((v, c), w) in innov.iter_mut().zip(&cxi).zip(noise) {
            *v += w - c;
        }
        self.u_hist.sample(self.d1.phi(phi2), &mut self.u_buf).map_err(hist_err)?;
        self.a.apply(xi, dxi);
        self.b.apply_add(1.0, &self.u_buf, dxi);
        self.l.apply_add(1.0, &innov, dxi);
        let speed = self.d2.phi_prime(tau);
        dxi.iter_mut().for_each(|v| *v *= speed);
        Ok(())
    }
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    // Box–Muller; 1 − u keeps the logarithm finite
    let u1 = 1.0 - rng.unit();
    let u2 = rng.unit();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fixed-step RK4 co-simulation of plant and observer with the predictor
/// feedback evaluated at every step.
pub fn simulate(
    spec: &PlantSpec,
    d1: &dyn Delay,
    d2: &dyn Delay,
    init: &InitialData,
    horizon: &dyn HorizonProvider,
    opts: &SimOptions,
) -> Result<SimulationTrace, PlantError> {
    let (n, m, p) = (spec.n(), spec.m(), spec.p());
    if !(opts.dt > 0.0 && opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(PlantError::Options(format!("dt = {}, T = {}", opts.dt, opts.t_end)));
    }
    if !(opts.noise_std >= 0.0) {
        return Err(PlantError::Options(format!("noise_std = {}", opts.noise_std)));
    }
    if init.z0.len() != n || init.xi0.len() != n {
        return Err(PlantError::InitialData(format!("Z0 and xi0 must have {n} components")));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let phi2_0 = d2.phi(0.0);
    let mut z_hist = init.z_history.into_buffer("state", phi2_0, n, opts.dt)?;
    let u_hist = init.u_history.into_buffer("input", d1.phi(phi2_0), m, opts.dt)?;
    z_hist.push(0.0, &init.z0).map_err(|source| PlantError::History { step: 0, t: 0.0, source })?;

    let mut lp = Loop {
        a_mat: &spec.a,
        a: Dense::from(&spec.a),
        b: Dense::from(&spec.b),
        c: Dense::from(&spec.c),
        k: Dense::from(&spec.k),
        l: Dense::from(&spec.l),
        d1,
        d2,
        quad_step: opts.dt,
        u_hist,
        z_hist,
        noncausal: 0,
        u_buf: vec![0.0; m],
        bu: vec![0.0; n],
        acc: vec![0.0; n],
        tmp: vec![0.0; n],
    };

    let mut rng = SeededRng::new(opts.noise_seed);
    let mut x: Vec<f64> = init.z0.iter().chain(&init.xi0).copied().collect();
    let mut records = Vec::with_capacity(steps + 1);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]);
    let mut stage = vec![0.0; 2 * n];
    let mut noise = vec![0.0; p];

    for step in 0..=steps {
        let t = step as f64 * opts.dt;
        let (z, xi) = x.split_at(n);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(PlantError::NonFinite { step, t });
        }
        let numeric = |source| PlantError::Numeric { step, t, source };
        lp.z_hist.push(t, z).map_err(|source| PlantError::History { step, t, source })?;

        // reconstruct Ẑ(t)
        let phi2 = d2.phi(t);
        let e_obs = Dense::from(&expm(&spec.a, t - phi2).map_err(numeric)?);
        let mut zhat = vec![0.0; n];
        e_obs.apply(xi, &mut zhat);
        let integral = lp.convolution(phi2, t, Stage::Reconstruct, step)?;
        zhat.iter_mut().zip(&integral).for_each(|(a, b)| *a += b);

        // predict P̂(t)
        let psi_hat = horizon.horizon(t);
        let e_pred = Dense::from(&expm(&spec.a, psi_hat).map_err(numeric)?);
        let mut phat = vec![0.0; n];
        e_pred.apply(&zhat, &mut phat);
        let integral = lp.convolution(t, t + psi_hat, Stage::Predict { now: t }, step)?;
        phat.iter_mut().zip(&integral).for_each(|(a, b)| *a += b);

        let mut u = vec![0.0; m];
        lp.k.apply(&phat, &mut u);
        // the law is active from t = 0, so U(0) replaces the history value there
        lp.u_hist.push(t, &u).map_err(|source| PlantError::History { step, t, source })?;

        // measurement
        if opts.noise_std > 0.0 {
            noise.iter_mut().for_each(|w| *w = opts.noise_std * gaussian(&mut rng));
        }
        let mut z_delayed = vec![0.0; n];
        lp.z_hist
            .sample(phi2, &mut z_delayed)
            .map_err(|source| PlantError::History { step, t, source })?;
        let mut y = vec![0.0; p];
        lp.c.apply(&z_delayed, &mut y);
        y.iter_mut().zip(&noise).for_each(|(a, w)| *a += w);

        let err_sq: f64 = z.iter().zip(&zhat).map(|(a, b)| (a - b) * (a - b)).sum();
        let sup_u = lp
            .u_hist
            .sup_norm_sq(d1.phi(t), t)
            .map_err(|source| PlantError::History { step, t, source })?;
        let gamma = norm_sq(z) + err_sq + sup_u;

        records.push(TraceRecord {
            t,
            z: z.to_vec(),
            xi: xi.to_vec(),
            zhat,
            phat,
            u,
            y,
            psi_hat,
            gamma,
        });

        if step == steps {
            break;
        }
        let h = opts.dt;
        lp.rhs(t, &x, &noise, &mut k1, step)?;
        for i in 0..2 * n {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        lp.rhs(t + 0.5 * h, &stage, &noise, &mut k2, step)?;
        for i in 0..2 * n {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        lp.rhs(t + 0.5 * h, &stage, &noise, &mut k3, step)?;
        for i in 0..2 * n {
            stage[i] = x[i] + h * k3[i];
        }
        lp.rhs(t + h, &stage, &noise, &mut k4, step)?;
        for i in 0..2 * n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    if lp.noncausal > 0 {
        log::debug!("{} predictor lookups beyond the current time were clamped", lp.noncausal);
    }
    Ok(SimulationTrace {
        dt: opts.dt,
        records,
        noncausal_lookups: lp.noncausal,
    })
}

/// Exponential envelope `Γ(t) ≈ M e^{−C t}` fitted to a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub m_fit: f64,
    pub c_fit: f64,
    /// Points used by the fit.
    pub points: usize,
}

/// Least-squares line through `ln Γ` on `[T/4, T]`; stops at the first
/// non-positive `Γ`.
pub fn fit_exponential_decay(t: &[f64], gamma: &[f64]) -> Result<DecayFit, PlantError> {
    if t.len() != gamma.len() || t.len() < 10 {
        return Err(PlantError::DegenerateTrace(format!("{} samples, need at least 10", t.len())));
    }
    let end = gamma.iter().position(|&g| !(g > 0.0)).unwrap_or(gamma.len());
    let t_end = t[t.len() - 1];
    let t_start = t[0] + 0.25 * (t_end - t[0]);
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &g) in t[..end].iter().zip(&gamma[..end]) {
        if ti < t_start {
            continue;
        }
        let y = g.ln();
        n += 1.0;
        sx += ti;
        sy += y;
        sxx += ti * ti;
        sxy += ti * y;
    }
    if n < 2.0 {
        return Err(PlantError::DegenerateTrace(format!(
            "Γ is positive at only {n} points of the fit window"
        )));
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok(DecayFit {
        m_fit: intercept.exp(),
        c_fit: -slope,
        points: n as usize,
    })
}

pub fn gamma_decay_fit(trace: &SimulationTrace) -> Result<DecayFit, PlantError> {
    fit_exponential_decay(&trace.times(), &trace.gamma())
}
