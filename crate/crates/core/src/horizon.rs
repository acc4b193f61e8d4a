//! Prediction horizon `ψ(t) = φ⁻¹(t) − t`.
//!
//! Four routes to the same function:
//!
//! - [`oracle_psi`]: per-point bracketed bisection on `φ(t + ψ) − t = 0`,
//! - [`euler_psi`] / [`rk4_psi`]: fixed-step integration of
//!   `ψ̇ = Ḋ(t+ψ) / (1 − Ḋ(t+ψ))` from the fixed point `ψ(0) − D(ψ(0)) = 0`,
//! - [`windowed_psi`]: the integrators re-anchored by an exact solve at the
//!   start of every window, which caps error growth to one window.
//!
//! The neural route lives in [`crate::neural`].

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::{check_assumptions, Delay, DEFAULT_GRID_STEP};

/// Residual tolerance for the root-finding oracle.
pub const ORACLE_TOL: f64 = 1e-12;
/// Bisection iteration cap.
pub const ORACLE_MAX_ITER: usize = 200;
/// Smallest admissible `1 − Ḋ` in the horizon ODE.
pub const MIN_DENOMINATOR: f64 = 1e-9;

/// Points per independently warm-started oracle chunk. Fixed so the output
/// does not depend on the thread count.
const ORACLE_CHUNK: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HorizonError {
    #[error("no sign change bracketing the horizon at t = {t}")]
    BracketNotFound { t: f64 },
    #[error("bisection stalled at t = {t} with residual {residual:e}")]
    NoConvergence { t: f64, residual: f64 },
    #[error("1 − Ḋ = {denominator:e} at t = {t}: delay rate too close to one")]
    NearSingularDenominator { t: f64, denominator: f64 },
    #[error("step h = {h} does not divide horizon T = {t_end}")]
    BadStep { h: f64, t_end: f64 },
    #[error("reference grid has no point at t = {t}")]
    GridMismatch { t: f64 },
    #[error("window length must be positive, got {0}")]
    BadWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oracle,
    Euler,
    Rk4,
    Neural,
    Windowed,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::Neural => "neural",
            Method::Windowed => "windowed",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time-stepping scheme for the horizon ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
}

/// Horizon values on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSeries {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub method: Method,
    /// Nominal grid spacing.
    pub step: f64,
}

impl HorizonSeries {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `|φ(tₙ + ψ(tₙ)) − tₙ|` at every grid point.
    pub fn residuals<D: Delay + ?Sized>(&self, delay: &D) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&t, &psi)| (delay.phi(t + psi) - t).abs())
            .collect()
    }

    /// Piecewise-linear interpolation, clamped to the end values.
    pub fn interpolate(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0];
        }
        let last = g.len() - 1;
        if t >= g[last] {
            return self.values[last];
        }
        let j = g.partition_point(|&x| x <= t);
        let (t0, t1) = (g[j - 1], g[j]);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        v0 + (t - t0) / (t1 - t0) * (v1 - v0)
    }

    /// A copy with a constant offset added, for robustness sweeps.
    pub fn offset(&self, eps: f64) -> HorizonSeries {
        HorizonSeries {
            values: self.values.iter().map(|v| v + eps).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `t,psi,residual`.
    pub fn write_csv<D: Delay + ?Sized, W: Write>(&self, delay: &D, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "psi", "residual"])?;
        for ((t, psi), r) in self.grid.iter().zip(&self.values).zip(self.residuals(delay)) {
            w.write_record(&[t.to_string(), psi.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `tₙ = n·h` for `n = 0..=N` with `N·h = T`.
pub fn uniform_grid(h: f64, t_end: f64) -> Result<Vec<f64>, HorizonError> {
    let steps = step_count(h, t_end)?;
    Ok((0..=steps).map(|n| n as f64 * h).collect())
}

fn step_count(h: f64, t_end: f64) -> Result<usize, HorizonError> {
    if !(h > 0.0 && t_end > 0.0) {
        return Err(HorizonError::BadStep { h, t_end });
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(HorizonError::BadStep { h, t_end });
    }
    Ok(n as usize)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, t: f64) -> Result<f64, HorizonError> {
    let mut best = (f64::INFINITY, lo);
    for _ in 0..ORACLE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < best.0 {
            best = (fm.abs(), mid);
        }
        if fm.abs() <= 0.25 * ORACLE_TOL || mid <= lo || mid >= hi {
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= ORACLE_TOL {
        Ok(best.1)
    } else {
        Err(HorizonError::NoConvergence { t, residual: best.0 })
    }
}

/// Solve `φ(y + ψ) = y` for `ψ`, optionally starting from a bracket
/// `guess ± width`. The residual is increasing in `ψ` under the assumptions,
/// so any sign change holds the unique root.
fn solve_point<D: Delay + ?Sized>(delay: &D, y: f64, guess: Option<(f64, f64)>) -> Result<f64, HorizonError> {
    let f = |psi: f64| delay.phi(y + psi) - y;
    // D is only defined for non-negative arguments
    let floor = (-y).max(0.0);

    if let Some((center, mut width)) = guess {
        for _ in 0..8 {
            let lo = (center - width).max(floor);
            let hi = center + width;
            if f(lo) <= 0.0 && f(hi) >= 0.0 {
                return bisect(f, lo, hi, y);
            }
            width *= 4.0;
        }
    }

    let lo = floor;
    if f(lo) > 0.0 {
        return Err(HorizonError::BracketNotFound { t: y });
    }
    if f(lo) == 0.0 {
        return Ok(lo);
    }
    let mut hi = lo + delay.value(y.max(0.0)).abs().max(1e-3);
    for _ in 0..64 {
        if f(hi) >= 0.0 {
            return bisect(f, lo, hi, y);
        }
        hi = lo + 2.0 * (hi - lo);
    }
    Err(HorizonError::BracketNotFound { t: y })
}

/// Initial horizon `t₀` with `t₀ − D(t₀) = 0`.
pub fn solve_psi0<D: Delay + ?Sized>(delay: &D) -> Result<f64, HorizonError> {
    solve_point(delay, 0.0, None)
}

/// Root-finding oracle on an arbitrary increasing grid. Each fixed-size chunk
/// starts from a full bracket; later points warm-start from their predecessor.
pub fn oracle_psi<D: Delay + ?Sized>(delay: &D, grid: &[f64]) -> Result<HorizonSeries, HorizonError> {
    let chunks: Vec<Vec<f64>> = grid
        .par_chunks(ORACLE_CHUNK)
        .map(|chunk| oracle_chunk(delay, chunk))
        .collect::<Result<_, _>>()?;
    let step = if grid.len() > 1 {
        (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
    } else {
        0.0
    };
    Ok(HorizonSeries {
        grid: grid.to_vec(),
        values: chunks.concat(),
        method: Method::Oracle,
        step,
    })
}

fn oracle_chunk<D: Delay + ?Sized>(delay: &D, chunk: &[f64]) -> Result<Vec<f64>, HorizonError> {
    let mut out: Vec<f64> = Vec::with_capacity(chunk.len());
    for (i, &t) in chunk.iter().enumerate() {
        let guess = match i {
            0 => None,
            1 => Some((out[0], (chunk[1] - chunk[0]).abs().max(1e-9))),
            _ => {
                let slope = (out[i - 1] - out[i - 2]) / (chunk[i - 1] - chunk[i - 2]);
                let dt = chunk[i] - chunk[i - 1];
                let width = 2.0 * (slope * dt).abs() + 1e-9 * (1.0 + out[i - 1].abs());
                Some((out[i - 1] + slope * dt, width))
            }
        };
        out.push(solve_point(delay, t, guess)?);
    }
    Ok(out)
}

/// Horizon ODE right-hand side `Ḋ(t+ψ) / (1 − Ḋ(t+ψ))`.
pub fn psi_ode_rhs<D: Delay + ?Sized>(delay: &D, t: f64, psi: f64) -> Result<f64, HorizonError> {
    let rate = delay.rate(t + psi);
    let denominator = 1.0 - rate;
    if denominator < MIN_DENOMINATOR {
        return Err(HorizonError::NearSingularDenominator { t, denominator });
    }
    Ok(rate / denominator)
}

fn advance<D: Delay + ?Sized>(delay: &D, scheme: Scheme, t: f64, psi: f64, h: f64) -> Result<f64, HorizonError> {
    match scheme {
        Scheme::Euler => Ok(psi + h * psi_ode_rhs(delay, t, psi)?),
        Scheme::Rk4 => {
            let k1 = psi_ode_rhs(delay, t, psi)?;
            let k2 = psi_ode_rhs(delay, t + 0.5 * h, psi + 0.5 * h * k1)?;
            let k3 = psi_ode_rhs(delay, t + 0.5 * h, psi + 0.5 * h * k2)?;
            let k4 = psi_ode_rhs(delay, t + h, psi + h * k3)?;
            Ok(psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        }
    }
}

fn integrate<D: Delay + ?Sized>(
    delay: &D,
    scheme: Scheme,
    h: f64,
    t_end: f64,
    window: Option<f64>,
) -> Result<HorizonSeries, HorizonError> {
    let steps = step_count(h, t_end)?;
    let per_window = match window {
        Some(w) if !(w > 0.0) => return Err(HorizonError::BadWindow(w)),
        Some(w) => ((w / h).round() as usize).max(1),
        None => usize::MAX,
    };
    let mut values = Vec::with_capacity(steps + 1);
    let mut psi = 0.0;
    for n in 0..=steps {
        let t = n as f64 * h;
        if n % per_window == 0 {
            psi = solve_point(delay, t, None)?;
        }
        values.push(psi);
        if n < steps {
            psi = advance(delay, scheme, t, psi, h)?;
        }
    }
    let method = match (window, scheme) {
        (Some(_), _) => Method::Windowed,
        (None, Scheme::Euler) => Method::Euler,
        (None, Scheme::Rk4) => Method::Rk4,
    };
    Ok(HorizonSeries {
        grid: (0..=steps).map(|n| n as f64 * h).collect(),
        values,
        method,
        step: h,
    })
}

/// Explicit Euler on `tₙ = n·h`, `n = 0..=T/h`.
pub fn euler_psi<D: Delay + ?Sized>(delay: &D, h: f64, t_end: f64) -> Result<HorizonSeries, HorizonError> {
    integrate(delay, Scheme::Euler, h, t_end, None)
}

/// Classical four-stage Runge–Kutta on `tₙ = n·h`.
pub fn rk4_psi<D: Delay + ?Sized>(delay: &D, h: f64, t_end: f64) -> Result<HorizonSeries, HorizonError> {
    integrate(delay, Scheme::Rk4, h, t_end, None)
}

/// Integrate with `inner` inside windows of length `window_h`, re-solving the
/// fixed point `φ(kH + ψ) = kH` at the start of each window.
pub fn windowed_psi<D: Delay + ?Sized>(
    delay: &D,
    window_h: f64,
    inner: Scheme,
    t_end: f64,
    h: f64,
) -> Result<HorizonSeries, HorizonError> {
    integrate(delay, inner, h, t_end, Some(window_h))
}

/// Constants and measured error for the explicit Euler global error bound
/// `(e^{KT} − 1)/K · h/2 · max|ψ̈|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerBoundReport {
    pub h: f64,
    pub t_end: f64,
    /// `sup |φ″/(φ′)²|` along `t + ψ(t)`.
    pub lipschitz_k: f64,
    /// `sup|φ″| / (π₃*)²`, with `π₃* = 1/sup φ′` along the same trajectory.
    pub lipschitz_k_pi3: f64,
    pub max_psi_ddot: f64,
    pub bound: f64,
    pub measured_max_error: f64,
}

/// `(e^{kT} − 1)/k`, continuous at `k = 0`.
pub(crate) fn growth_factor(k: f64, t: f64) -> f64 {
    if k.abs() * t < 1e-12 {
        t
    } else {
        (k * t).exp_m1() / k
    }
}

/// Evaluate the Euler bound against an oracle series whose grid contains the
/// Euler grid.
pub fn euler_error_bound<D: Delay + ?Sized>(
    delay: &D,
    h: f64,
    t_end: f64,
    oracle: &HorizonSeries,
) -> Result<EulerBoundReport, HorizonError> {
    let euler = euler_psi(delay, h, t_end)?;

    let mut measured: f64 = 0.0;
    for (&t, &approx) in euler.grid.iter().zip(&euler.values) {
        let j = nearest_index(&oracle.grid, t);
        if (oracle.grid[j] - t).abs() > 1e-9 * (1.0 + t) {
            return Err(HorizonError::GridMismatch { t });
        }
        measured = measured.max((oracle.values[j] - approx).abs());
    }

    let mut k: f64 = 0.0;
    let mut curv: f64 = 0.0;
    let mut slope_max: f64 = 0.0;
    let mut psi_ddot: f64 = 0.0;
    for (&t, &psi) in oracle.grid.iter().zip(&oracle.values) {
        if t > t_end + 1e-12 {
            break;
        }
        let s = t + psi;
        let phi2 = -delay.curvature(s);
        let phi1 = delay.phi_prime(s);
        k = k.max((phi2 / (phi1 * phi1)).abs());
        curv = curv.max(phi2.abs());
        slope_max = slope_max.max(phi1);
        psi_ddot = psi_ddot.max((phi2 / (phi1 * phi1 * phi1)).abs());
    }

    Ok(EulerBoundReport {
        h,
        t_end,
        lipschitz_k: k,
        lipschitz_k_pi3: curv * slope_max * slope_max,
        max_psi_ddot: psi_ddot,
        bound: growth_factor(k, t_end) * 0.5 * h * psi_ddot,
        measured_max_error: measured,
    })
}

fn nearest_index(grid: &[f64], t: f64) -> usize {
    let j = grid.partition_point(|&x| x < t);
    if j == 0 {
        0
    } else if j == grid.len() || (t - grid[j - 1]) <= (grid[j] - t) {
        j - 1
    } else {
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    /// `max |Ψ(D₁)(y) − Ψ(D₂)(y)|` over the common-range grid.
    pub lhs_max: f64,
    /// `‖D₁ − D₂‖∞ / π₂*`.
    pub rhs: f64,
    pub holds: bool,
}

/// Slack for oracle round-off in [`lipschitz_check`].
const LIPSCHITZ_SLACK: f64 = 1e-10;

/// Check the Lipschitz dependence of the horizon on the delay at the grid
/// points inside the common range `y ≥ max(φ₁(0), φ₂(0))`.
pub fn lipschitz_check<D1: Delay + ?Sized, D2: Delay + ?Sized>(
    d1: &D1,
    d2: &D2,
    grid: &[f64],
) -> Result<LipschitzCheck, HorizonError> {
    let y_min = d1.phi(0.0).max(d2.phi(0.0));
    let common: Vec<f64> = grid.iter().copied().filter(|&y| y >= y_min).collect();
    if common.is_empty() {
        return Ok(LipschitzCheck {
            lhs_max: 0.0,
            rhs: 0.0,
            holds: true,
        });
    }
    let s1 = oracle_psi(d1, &common)?;
    let s2 = oracle_psi(d2, &common)?;
    let lhs_max = s1
        .values
        .iter()
        .zip(&s2.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let reach = common
        .iter()
        .zip(s1.values.iter().zip(&s2.values))
        .map(|(y, (a, b))| y + a.max(*b))
        .fold(0.0, f64::max)
        + DEFAULT_GRID_STEP;
    let pi2 = check_assumptions(d1, reach, DEFAULT_GRID_STEP)
        .pi2_star
        .min(check_assumptions(d2, reach, DEFAULT_GRID_STEP).pi2_star);

    let diff = |s: f64| (d1.value(s) - d2.value(s)).abs();
    let mut sup = crate::delay::scan_grid(reach, DEFAULT_GRID_STEP)
        .map(diff)
        .fold(0.0, f64::max);
    // the points where the bound is actually used
    for (y, (a, b)) in common.iter().zip(s1.values.iter().zip(&s2.values)) {
        sup = sup.max(diff(y + a)).max(diff(y + b));
    }
    let rhs = sup / pi2;
    Ok(LipschitzCheck {
        lhs_max,
        rhs,
        holds: lhs_max <= rhs + LIPSCHITZ_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayParams, LinearDelay};
    use approx::assert_relative_eq;

    const FIG2_D1: DelayParams = DelayParams::new(0.4, 0.31, -0.10, 4.95, 0.95);

    #[test]
    fn psi0_closed_forms() {
        assert_relative_eq!(solve_psi0(&DelayParams::constant(0.7)).unwrap(), 0.7, epsilon = 1e-12);
        let lin = LinearDelay { offset: 0.5, slope: 0.2 };
        assert_relative_eq!(solve_psi0(&lin).unwrap(), 0.5 / 0.8, epsilon = 1e-12);
    }

    #[test]
    fn psi0_fig2_agrees_with_oracle() {
        let t0 = solve_psi0(&FIG2_D1).unwrap();
        assert!((t0 - FIG2_D1.value(t0)).abs() <= ORACLE_TOL);
        let s = oracle_psi(&FIG2_D1, &[0.0, 0.001]).unwrap();
        assert_relative_eq!(s.values[0], t0, epsilon = 1e-11);
    }

    #[test]
    fn psi0_bracket_failure() {
        // D ≡ −1: t − D(t) = t + 1 > 0 everywhere on t ≥ 0
        let bad = DelayParams::constant(-1.0);
        assert_eq!(solve_psi0(&bad), Err(HorizonError::BracketNotFound { t: 0.0 }));
    }

    #[test]
    fn rhs_values() {
        assert_eq!(psi_ode_rhs(&DelayParams::constant(1.0), 3.0, 1.0).unwrap(), 0.0);
        let lin = LinearDelay { offset: 0.1, slope: 0.3 };
        assert_relative_eq!(psi_ode_rhs(&lin, 4.0, 2.0).unwrap(), 0.3 / 0.7, epsilon = 1e-15);
        let steep = LinearDelay { offset: 0.1, slope: 1.0 };
        assert!(matches!(
            psi_ode_rhs(&steep, 0.0, 0.1),
            Err(HorizonError::NearSingularDenominator { .. })
        ));
    }

    #[test]
    fn rhs_matches_oracle_slope() {
        let psi0 = solve_psi0(&FIG2_D1).unwrap();
        let fd = oracle_psi(&FIG2_D1, &[1.0, 1.0 + 1e-4, 1.0 + 2e-4]).unwrap();
        let slope = (fd.values[2] - fd.values[0]) / 2e-4;
        let rhs = psi_ode_rhs(&FIG2_D1, 1.0 + 1e-4, fd.values[1]).unwrap();
        assert!((slope - rhs).abs() < 1e-6, "fd {slope} vs rhs {rhs}");
        assert!(psi_ode_rhs(&FIG2_D1, 0.0, psi0).unwrap().is_finite());
    }

    #[test]
    fn bad_step_rejected() {
        assert!(matches!(euler_psi(&FIG2_D1, 0.07, 1.0), Err(HorizonError::BadStep { .. })));
        assert!(matches!(rk4_psi(&FIG2_D1, -0.1, 1.0), Err(HorizonError::BadStep { .. })));
        assert!(matches!(
            windowed_psi(&FIG2_D1, 0.0, Scheme::Euler, 1.0, 0.1),
            Err(HorizonError::BadWindow(_))
        ));
    }

    #[test]
    fn interpolation_and_offset() {
        let s = HorizonSeries {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 3.0, 2.0],
            method: Method::Oracle,
            step: 1.0,
        };
        assert_eq!(s.interpolate(-1.0), 1.0);
        assert_eq!(s.interpolate(0.5), 2.0);
        assert_eq!(s.interpolate(1.5), 2.5);
        assert_eq!(s.interpolate(9.0), 2.0);
        assert_eq!(s.offset(0.5).values, vec![1.5, 3.5, 2.5]);
    }

    #[test]
    fn windowed_covering_whole_horizon_equals_plain() {
        let plain = euler_psi(&FIG2_D1, 0.01, 3.0).unwrap();
        let win = windowed_psi(&FIG2_D1, 5.0, Scheme::Euler, 3.0, 0.01).unwrap();
        assert_eq!(plain.values, win.values);
        assert_eq!(win.method, Method::Windowed);
    }

    #[test]
    fn windowed_anchors_are_exact() {
        let win = windowed_psi(&FIG2_D1, 1.0, Scheme::Euler, 4.0, 0.05).unwrap();
        let r = win.residuals(&FIG2_D1);
        for k in 0..=4 {
            assert!(r[k * 20] <= ORACLE_TOL, "anchor {k}: {}", r[k * 20]);
        }
    }

    #[test]
    fn euler_bound_trivial_cases() {
        let c = DelayParams::constant(0.5);
        let oracle = oracle_psi(&c, &uniform_grid(0.01, 2.0).unwrap()).unwrap();
        let r = euler_error_bound(&c, 0.1, 2.0, &oracle).unwrap();
        assert_eq!(r.bound, 0.0);
        assert!(r.measured_max_error <= 1e-12);

        let lin = LinearDelay { offset: 0.3, slope: 0.25 };
        let oracle = oracle_psi(&lin, &uniform_grid(0.01, 2.0).unwrap()).unwrap();
        let r = euler_error_bound(&lin, 0.1, 2.0, &oracle).unwrap();
        assert_eq!(r.bound, 0.0);
        assert!(r.measured_max_error <= 1e-11);
    }

    #[test]
    fn euler_bound_grid_mismatch() {
        let oracle = oracle_psi(&FIG2_D1, &uniform_grid(0.03, 3.0).unwrap()).unwrap();
        assert!(matches!(
            euler_error_bound(&FIG2_D1, 0.02, 3.0, &oracle),
            Err(HorizonError::GridMismatch { .. })
        ));
    }

    #[test]
    fn growth_factor_limit() {
        assert_eq!(growth_factor(0.0, 12.0), 12.0);
        assert_relative_eq!(growth_factor(1e-8, 12.0), 12.0, max_relative = 1e-6);
        assert_relative_eq!(growth_factor(0.5, 2.0), 1f64.exp_m1() / 0.5, max_relative = 1e-14);
    }

    #[test]
    fn lipschitz_constant_pair_is_tight() {
        let r = lipschitz_check(
            &DelayParams::constant(0.8),
            &DelayParams::constant(0.5),
            &uniform_grid(0.01, 5.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(r.lhs_max, 0.3, epsilon = 1e-11);
        assert_relative_eq!(r.rhs, 0.3, epsilon = 1e-12);
        assert!(r.holds);

        let same = lipschitz_check(&FIG2_D1, &FIG2_D1, &uniform_grid(0.01, 5.0).unwrap()).unwrap();
        assert_eq!(same.lhs_max, 0.0);
        assert_eq!(same.rhs, 0.0);
        assert!(same.holds);
    }

    #[test]
    fn csv_layout() {
        let c = DelayParams::constant(0.25);
        let s = oracle_psi(&c, &[0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,psi,residual"));
        for (line, t) in lines.zip([0.0, 0.5]) {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cols[0], t);
            assert!((cols[1] - 0.25).abs() < 1e-12);
            assert!(cols[2] <= ORACLE_TOL);
        }
    }
}
