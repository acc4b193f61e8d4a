//! Delay functions, the delay-time map `φ(t) = t − D(t)`, assumption scans and
//! randomized sampling of the oscillatory delay family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

/// Default grid step for assumption scans.
pub const DEFAULT_GRID_STEP: f64 = 1e-3;
/// Default horizon over which sampled delays are verified.
pub const DEFAULT_HORIZON: f64 = 12.0;
/// Default cap on rejection-sampling attempts.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("rejection sampling exceeded {attempts} attempts without an admissible delay")]
    RejectionLimitExceeded { attempts: usize },
    #[error("invalid sampling range for `{field}`: [{lo}, {hi}]")]
    BadRange { field: &'static str, lo: f64, hi: f64 },
    #[error("tabulated delay needs at least two samples and a positive step")]
    BadTable,
}

/// A continuously differentiable delay `D(t)` with analytic (or consistently
/// approximated) first and second derivatives.
pub trait Delay: Sync {
    fn value(&self, t: f64) -> f64;

    /// `Ḋ(t)`
    fn rate(&self, t: f64) -> f64;

    /// `D̈(t)`
    fn curvature(&self, t: f64) -> f64;

    /// Delay time `φ(t) = t − D(t)`.
    fn phi(&self, t: f64) -> f64 {
        t - self.value(t)
    }

    fn phi_prime(&self, t: f64) -> f64 {
        1.0 - self.rate(t)
    }
}

impl<T: Delay + ?Sized> Delay for &T {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn rate(&self, t: f64) -> f64 {
        (**self).rate(t)
    }
    fn curvature(&self, t: f64) -> f64 {
        (**self).curvature(t)
    }
}

/// `D(t) = a + b/(1+t) + alpha·sin(omega·t + varphi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub omega: f64,
    pub varphi: f64,
}

impl DelayParams {
    pub const fn new(a: f64, b: f64, alpha: f64, omega: f64, varphi: f64) -> Self {
        Self {
            a,
            b,
            alpha,
            omega,
            varphi,
        }
    }

    /// A constant delay `D ≡ c`.
    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0, 0.0, 0.0)
    }

    /// Row layout used in dataset containers: `(a, b, alpha, omega, varphi)`.
    pub fn to_row(&self) -> [f64; 5] {
        [self.a, self.b, self.alpha, self.omega, self.varphi]
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self::new(row[0], row[1], row[2], row[3], row[4])
    }
}

impl Delay for DelayParams {
    fn value(&self, t: f64) -> f64 {
        self.a + self.b / (1.0 + t) + self.alpha * (self.omega * t + self.varphi).sin()
    }

    fn rate(&self, t: f64) -> f64 {
        let s = 1.0 + t;
        -self.b / (s * s) + self.alpha * self.omega * (self.omega * t + self.varphi).cos()
    }

    fn curvature(&self, t: f64) -> f64 {
        let s = 1.0 + t;
        2.0 * self.b / (s * s * s)
            - self.alpha * self.omega * self.omega * (self.omega * t + self.varphi).sin()
    }
}

/// `D(t) = offset + slope·t`. Outside the oscillatory family; used where a
/// closed-form horizon is needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDelay {
    pub offset: f64,
    pub slope: f64,
}

impl Delay for LinearDelay {
    fn value(&self, t: f64) -> f64 {
        self.offset + self.slope * t
    }
    fn rate(&self, _t: f64) -> f64 {
        self.slope
    }
    fn curvature(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Delay sampled on a uniform grid. Values interpolate linearly (and
/// extrapolate from the end segments); derivatives are central differences of
/// the interpolant with the table step.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDelay {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl TabulatedDelay {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self, DelayError> {
        if values.len() < 2 || !(step > 0.0) {
            return Err(DelayError::BadTable);
        }
        Ok(Self {
            start,
            step,
            values,
        })
    }

    /// Tabulate any delay on `[start, start + (n−1)·step]`.
    pub fn sample<D: Delay + ?Sized>(delay: &D, start: f64, step: f64, n: usize) -> Result<Self, DelayError> {
        let values = (0..n).map(|i| delay.value(start + i as f64 * step)).collect();
        Self::new(start, step, values)
    }
}

impl Delay for TabulatedDelay {
    fn value(&self, t: f64) -> f64 {
        let last = self.values.len() - 2;
        let x = (t - self.start) / self.step;
        let i = (x.floor().max(0.0) as usize).min(last);
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    fn rate(&self, t: f64) -> f64 {
        let h = self.step;
        (self.value(t + h) - self.value(t - h)) / (2.0 * h)
    }

    fn curvature(&self, t: f64) -> f64 {
        let h = self.step;
        (self.value(t + h) - 2.0 * self.value(t) + self.value(t - h)) / (h * h)
    }
}

/// Grid-verified delay constants over a compact interval.
///
/// `pi0_star = min D`, `pi1_star = 1/max D`, `pi2_star = min φ′`,
/// `pi3_star = 1/max φ′`, all taken over the scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub pi0_star: f64,
    pub pi1_star: f64,
    pub pi2_star: f64,
    pub pi3_star: f64,
    pub valid: bool,
    pub first_violation_time: Option<f64>,
}

impl AssumptionReport {
    /// Constants valid for both members of a pair (Assumptions quantify over
    /// both delays at once).
    pub fn combine(&self, other: &AssumptionReport) -> AssumptionReport {
        let first_violation_time = match (self.first_violation_time, other.first_violation_time) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        AssumptionReport {
            pi0_star: self.pi0_star.min(other.pi0_star),
            pi1_star: self.pi1_star.min(other.pi1_star),
            pi2_star: self.pi2_star.min(other.pi2_star),
            pi3_star: self.pi3_star.min(other.pi3_star),
            valid: self.valid && other.valid,
            first_violation_time,
        }
    }

    /// Upper bound `1/π₁*` on the delay over the scanned interval.
    pub fn max_delay(&self) -> f64 {
        1.0 / self.pi1_star
    }
}

/// Uniform scan grid over `[0, t_end]`; the last point is `t_end` exactly.
pub(crate) fn scan_grid(t_end: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = (t_end / step).ceil() as usize;
    (0..=n).map(move |i| if i == n { t_end } else { i as f64 * step })
}

/// Scan `D` and `φ′ = 1 − Ḋ` on a uniform grid over `[0, t_end]`.
pub fn check_assumptions<D: Delay + ?Sized>(delay: &D, t_end: f64, grid_step: f64) -> AssumptionReport {
    assert!(t_end > 0.0 && grid_step > 0.0, "scan interval and step must be positive");
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    let mut first_violation_time = None;
    for t in scan_grid(t_end, grid_step) {
        let d = delay.value(t);
        let s = delay.phi_prime(t);
        d_min = d_min.min(d);
        d_max = d_max.max(d);
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        let bad = !(d > 0.0 && s > 0.0);
        if bad && first_violation_time.is_none() {
            first_violation_time = Some(t);
        }
    }
    AssumptionReport {
        pi0_star: d_min,
        pi1_star: 1.0 / d_max,
        pi2_star: s_min,
        pi3_star: 1.0 / s_max,
        valid: first_violation_time.is_none(),
        first_violation_time,
    }
}

/// Input delay `D₁` and measurement delay `D₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPair {
    pub d1: DelayParams,
    pub d2: DelayParams,
}

impl DelayPair {
    pub fn check(&self, t_end: f64, grid_step: f64) -> (AssumptionReport, AssumptionReport) {
        (
            check_assumptions(&self.d1, t_end, grid_step),
            check_assumptions(&self.d2, t_end, grid_step),
        )
    }
}

/// Closed intervals from which each parameter is drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub alpha: (f64, f64),
    pub omega: (f64, f64),
    pub varphi: (f64, f64),
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            a: (0.2, 3.0),
            b: (0.0, 10.0),
            alpha: (-0.3, 0.3),
            omega: (0.2, 3.0),
            varphi: (0.0, 2.0 * std::f64::consts::PI),
        }
    }
}

impl SamplingRanges {
    /// Every range collapsed onto the given parameters.
    pub fn point(p: DelayParams) -> Self {
        Self {
            a: (p.a, p.a),
            b: (p.b, p.b),
            alpha: (p.alpha, p.alpha),
            omega: (p.omega, p.omega),
            varphi: (p.varphi, p.varphi),
        }
    }

    fn validate(&self) -> Result<(), DelayError> {
        let fields = [
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
            ("omega", self.omega),
            ("varphi", self.varphi),
        ];
        for (field, (lo, hi)) in fields {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(DelayError::BadRange { field, lo, hi });
            }
        }
        Ok(())
    }
}

/// Rejection sampler for admissible delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampler {
    pub ranges: SamplingRanges,
    /// Delays must satisfy the assumptions on `[0, horizon]`.
    pub horizon: f64,
    pub grid_step: f64,
    pub max_attempts: usize,
}

impl Default for Sampler {
    fn default() -> Self {
        Self {
            ranges: SamplingRanges::default(),
            horizon: DEFAULT_HORIZON,
            grid_step: DEFAULT_GRID_STEP,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledDelay {
    pub params: DelayParams,
    pub rejections: usize,
}

impl Sampler {
    /// Draw parameters in the order `a, b, alpha, omega, varphi` until one
    /// passes [`check_assumptions`]. Pure in `(seed, self)`.
    pub fn sample(&self, seed: u64) -> Result<SampledDelay, DelayError> {
        self.ranges.validate()?;
        let mut rng = SeededRng::new(seed);
        let r = &self.ranges;
        for attempt in 0..self.max_attempts {
            let params = DelayParams::new(
                rng.uniform(r.a.0, r.a.1),
                rng.uniform(r.b.0, r.b.1),
                rng.uniform(r.alpha.0, r.alpha.1),
                rng.uniform(r.omega.0, r.omega.1),
                rng.uniform(r.varphi.0, r.varphi.1),
            );
            if check_assumptions(&params, self.horizon, self.grid_step).valid {
                return Ok(SampledDelay {
                    params,
                    rejections: attempt,
                });
            }
        }
        Err(DelayError::RejectionLimitExceeded {
            attempts: self.max_attempts,
        })
    }
}

/// Sample with the default sampler.
pub fn sample_delay(seed: u64, ranges: SamplingRanges) -> Result<SampledDelay, DelayError> {
    Sampler {
        ranges,
        ..Sampler::default()
    }
    .sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) const FIG2_D1: DelayParams = DelayParams::new(0.4, 0.31, -0.10, 4.95, 0.95);
    pub(crate) const FIG2_D2: DelayParams = DelayParams::new(0.28, 0.15, -0.06, 1.28, 0.82);

    #[test]
    fn delay_values_at_zero() {
        // 0.4 + 0.31 - 0.10 sin(0.95)
        assert_relative_eq!(FIG2_D1.value(0.0), 0.628_658_449_521_062_5, epsilon = 1e-12);
        assert_relative_eq!(FIG2_D2.value(0.0), 0.386_131_250_216_386_3, epsilon = 1e-12);
        assert_relative_eq!(FIG2_D1.phi(0.0), -0.628_658_449_521_062_5, epsilon = 1e-12);
    }

    #[test]
    fn constant_delay_is_constant() {
        let d = DelayParams::constant(0.7);
        for t in [0.0, 1.0, 5.5, 100.0] {
            assert_eq!(d.value(t), 0.7);
            assert_eq!(d.rate(t), 0.0);
            assert_eq!(d.phi(t), t - 0.7);
        }
    }

    #[test]
    fn linear_phi() {
        let d = LinearDelay { offset: 0.3, slope: 0.2 };
        for t in [0.0, 2.0, 7.25] {
            assert_relative_eq!(d.phi(t), 0.8 * t - 0.3, epsilon = 1e-14);
        }
    }

    #[test]
    fn tabulated_reproduces_linear() {
        let lin = LinearDelay { offset: 0.5, slope: 0.25 };
        let tab = TabulatedDelay::sample(&lin, 0.0, 0.01, 2001).unwrap();
        for t in [0.0, 0.005, 3.3333, 19.99, 25.0] {
            assert_relative_eq!(tab.value(t), lin.value(t), epsilon = 1e-12);
            assert_relative_eq!(tab.rate(t), 0.25, epsilon = 1e-9);
            assert!(tab.curvature(t).abs() < 1e-7);
        }
        assert_eq!(TabulatedDelay::new(0.0, 0.1, vec![1.0]), Err(DelayError::BadTable));
    }

    #[test]
    fn constant_delay_report() {
        let r = check_assumptions(&DelayParams::constant(0.5), 12.0, 1e-3);
        assert!(r.valid);
        assert_eq!(r.pi0_star, 0.5);
        assert_eq!(r.pi1_star, 2.0);
        assert_eq!(r.pi2_star, 1.0);
        assert_eq!(r.pi3_star, 1.0);
        assert_eq!(r.first_violation_time, None);
    }

    #[test]
    fn fast_oscillation_violates() {
        // max Ḋ = alpha·omega = 1.2 > 1
        let p = DelayParams::new(1.0, 0.0, 0.3, 4.0, 0.0);
        let r = check_assumptions(&p, 12.0, 1e-3);
        assert!(!r.valid);
        assert!(r.pi2_star < 0.0);
        let tv = r.first_violation_time.unwrap();
        assert!(p.phi_prime(tv) <= 0.0);
        // Ḋ(0) = 1.2 already
        assert_eq!(tv, 0.0);
    }

    #[test]
    fn negative_delay_violates_later() {
        // D(t) = 0.05 + 0.2 sin(t): first non-positive near t = π + asin(0.25)
        let p = DelayParams::new(0.05, 0.0, 0.2, 1.0, 0.0);
        let r = check_assumptions(&p, 12.0, 1e-3);
        assert!(!r.valid);
        let expect = std::f64::consts::PI + (0.25f64).asin();
        assert!((r.first_violation_time.unwrap() - expect).abs() < 2e-3);
    }

    #[test]
    fn fig2_delays_are_admissible() {
        let pair = DelayPair { d1: FIG2_D1, d2: FIG2_D2 };
        let (r1, r2) = pair.check(12.0, 1e-3);
        assert!(r1.valid && r2.valid);
        assert!(r1.pi1_star * r1.pi0_star <= 1.0);
        assert!(r1.pi3_star * r1.pi2_star <= 1.0);
        let c = r1.combine(&r2);
        assert_eq!(c.pi0_star, r1.pi0_star.min(r2.pi0_star));
        assert!(c.valid);
    }

    #[test]
    fn degenerate_ranges_return_point() {
        let s = sample_delay(17, SamplingRanges::point(FIG2_D1)).unwrap();
        assert_eq!(s.params, FIG2_D1);
        assert_eq!(s.rejections, 0);
    }

    #[test]
    fn impossible_ranges_hit_the_cap() {
        let sampler = Sampler {
            ranges: SamplingRanges::point(DelayParams::new(1.0, 0.0, 0.3, 4.0, 0.0)),
            max_attempts: 25,
            ..Sampler::default()
        };
        assert_eq!(
            sampler.sample(0),
            Err(DelayError::RejectionLimitExceeded { attempts: 25 })
        );
    }

    #[test]
    fn inverted_range_rejected() {
        let mut ranges = SamplingRanges::default();
        ranges.omega = (3.0, 0.2);
        assert!(matches!(
            sample_delay(0, ranges),
            Err(DelayError::BadRange { field: "omega", .. })
        ));
    }

    fn central_diff<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampled_delays_pass_checks(seed in any::<u64>()) {
            let s = sample_delay(seed, SamplingRanges::default()).unwrap();
            let r = check_assumptions(&s.params, 12.0, 1e-3);
            prop_assert!(r.valid);
            prop_assert!(r.pi0_star > 0.0 && r.pi2_star > 0.0);
            // φ strictly increasing on the grid
            let mut prev = f64::NEG_INFINITY;
            for t in scan_grid(12.0, 1e-3) {
                let v = s.params.phi(t);
                prop_assert!(v > prev);
                prev = v;
            }
            prop_assert_eq!(sample_delay(seed, SamplingRanges::default()).unwrap(), s);
        }

        #[test]
        fn analytic_derivatives_match_finite_differences(seed in any::<u64>(), t in 0.05f64..12.0) {
            let p = sample_delay(seed, SamplingRanges::default()).unwrap().params;
            let h = 1e-3;
            // O(h²) truncation with constants bounded by the family's third and fourth
            // derivatives (|b| ≤ 10, |alpha·omega^4| ≤ 24.3).
            let k = 6.0 * 10.0 + 30.0;
            let rate_err = (p.rate(t) - central_diff(|x| p.value(x), t, h)).abs();
            let curv_err = (p.curvature(t) - central_diff(|x| p.rate(x), t, h)).abs();
            prop_assert!(rate_err <= k * h * h + 1e-9, "rate err {}", rate_err);
            prop_assert!(curv_err <= 4.0 * k * h * h + 1e-9, "curvature err {}", curv_err);
        }
    }
}
