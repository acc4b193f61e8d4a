//! Constants of the robustness argument for an approximate horizon
//! `|ψ̂ − ψ| ≤ ε`: Lyapunov solutions, norm-equivalence bounds of the
//! backstepping transform, perturbation constants, the smallness threshold
//! ε* and the decay coefficients c₁…c₄.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::delay::AssumptionReport;
use crate::linalg::{expm, solve_lyapunov, spectral_norm, sym_eig_range, LinalgError};
use crate::plant::PlantSpec;

/// Margin added to the lower bound on the transport weight `b`.
pub const B_MARGIN: f64 = 1e-6;
/// Bisection iterations for ε* on `[0, 1]`.
pub const EPS_BISECTION_ITERS: usize = 60;
/// μ is set to this multiple of its lower bound.
pub const MU_FACTOR: f64 = 2.0;
/// Quadrature points on `x ∈ [0, 1]` for the transform check.
pub const TRANSFORM_POINTS: usize = 256;

#[derive(Debug, Error)]
pub enum MarginError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("assumption report is not valid (violation at t = {0:?})")]
    InvalidAssumptions(Option<f64>),
    #[error("{which} must be symmetric positive definite")]
    NotSpd { which: &'static str },
}

/// `(e^{2cs} − 1)/(2c)`, continuous at `c = 0`.
fn growth(c: f64, s: f64) -> f64 {
    if c == 0.0 {
        s
    } else {
        (2.0 * c * s).exp_m1() / (2.0 * c)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    #[serde(skip)]
    pub p: DMatrix<f64>,
    #[serde(skip)]
    pub s: DMatrix<f64>,
    #[serde(skip)]
    pub q: DMatrix<f64>,
    #[serde(skip)]
    pub r: DMatrix<f64>,
    pub residual_p: f64,
    pub residual_s: f64,
    pub pi0: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_k: f64,
    pub norm_abk: f64,
    pub norm_pb: f64,
    pub lambda_min_q: f64,
    pub lambda_min_r: f64,
    pub lambda_max_p: f64,
    pub lambda_max_s: f64,
    pub b: f64,
    pub beta_star: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub alpha_bar1: f64,
    pub alpha_bar2: f64,
    pub beta_bar1: f64,
    pub beta_bar2: f64,
    pub mu_min: f64,
    pub mu: f64,
    /// Weight of the transport functional in V.
    pub weight_l: f64,
    /// Largest ε in `[0, 1]` meeting the smallness condition; `None` when
    /// infeasible.
    pub eps_star: Option<f64>,
    /// The condition still holds at ε = 1, the end of the search interval.
    pub eps_star_capped: bool,
    /// Which inequality fails, if any.
    pub infeasible: Option<String>,
}

impl MarginReport {
    pub fn delta1(&self, eps: f64) -> f64 {
        self.omega1 * (self.norm_a * eps).exp_m1()
    }

    /// `Ω₁ε + δ₁(ε)/π₁*`
    pub fn perturbation(&self, eps: f64) -> f64 {
        self.omega1 * eps + self.delta1(eps) / self.pi1
    }

    pub fn c1(&self, eps: f64) -> f64 {
        let d = self.delta1(eps);
        let pert = self.perturbation(eps);
        self.lambda_min_q / 2.0 - self.omega2 * (d * d + 3.0 * self.beta_bar2 * self.norm_b.powi(2) * pert * pert)
    }

    pub fn c2(&self, eps: f64) -> f64 {
        let pert = self.perturbation(eps);
        4.0 * self.norm_pb.powi(2) * self.beta_star / self.lambda_min_q
            - 2.0 * self.omega2 * self.beta_bar1 * self.norm_b.powi(2) * pert * pert
    }

    pub fn c3(&self, eps: f64) -> f64 {
        let gain = self.omega1 + self.delta1(eps);
        self.mu * self.pi2 * self.lambda_min_r - self.omega2 * gain * gain * (2.0 * self.norm_a / self.pi1).exp()
    }

    /// Decay rate of V from `V̇ ≤ −c₁|Z|² − c₂L − c₃|ξ̃|²` and the quadratic
    /// bounds of each term of V.
    pub fn c4(&self, eps: f64) -> f64 {
        (self.c1(eps) / self.lambda_max_p)
            .min(self.c2(eps) / self.weight_l)
            .min(self.c3(eps) / (self.mu * self.lambda_max_s))
    }

    pub fn smallness_lhs(&self, eps: f64) -> f64 {
        let e = (self.norm_a * eps).exp_m1();
        let o1 = self.omega1 * self.omega1;
        (self.omega2 * o1 * e * e).max(o1 * (eps + e / self.pi1).powi(2))
    }

    /// The three terms of the right-hand side, in display order.
    pub fn smallness_rhs_terms(&self) -> [f64; 3] {
        let nb2 = self.norm_b.powi(2);
        let lq = self.lambda_min_q;
        [
            lq / (12.0 * self.omega2 * self.beta_bar2 * nb2),
            2.0 * self.norm_pb.powi(2) * self.beta_star / (self.omega2 * self.beta_bar1 * nb2 * lq),
            lq / 4.0,
        ]
    }

    pub fn smallness_rhs(&self) -> f64 {
        self.smallness_rhs_terms().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn smallness_holds(&self, eps: f64) -> bool {
        self.smallness_lhs(eps) <= self.smallness_rhs()
    }

    /// CSV with header `eps,c1,c2,c3,c4`.
    pub fn write_csv<W: Write>(&self, eps: &[f64], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "c1", "c2", "c3", "c4"])?;
        for &e in eps {
            w.write_record([e, self.c1(e), self.c2(e), self.c3(e), self.c4(e)].iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt_mat = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("; ")
        };
        let _ = writeln!(s, "# stability margins");
        let _ = writeln!(s, "status: {}", match &self.infeasible {
            None => "feasible".to_string(),
            Some(why) => format!("infeasible: {why}"),
        });
        let _ = writeln!(s, "P = [{}]", fmt_mat(&self.p));
        let _ = writeln!(s, "S = [{}]", fmt_mat(&self.s));
        let _ = writeln!(s, "Q = [{}]", fmt_mat(&self.q));
        let _ = writeln!(s, "R = [{}]", fmt_mat(&self.r));
        let rows: [(&str, f64); 30] = [
            ("residual_P", self.residual_p),
            ("residual_S", self.residual_s),
            ("pi0", self.pi0),
            ("pi1", self.pi1),
            ("pi2", self.pi2),
            ("pi3", self.pi3),
            ("norm_A", self.norm_a),
            ("norm_B", self.norm_b),
            ("norm_K", self.norm_k),
            ("norm_A+BK", self.norm_abk),
            ("norm_PB", self.norm_pb),
            ("lambda_min_Q", self.lambda_min_q),
            ("lambda_min_R", self.lambda_min_r),
            ("lambda_max_P", self.lambda_max_p),
            ("lambda_max_S", self.lambda_max_s),
            ("b", self.b),
            ("beta_star", self.beta_star),
            ("Omega1", self.omega1),
            ("Omega2", self.omega2),
            ("alpha_bar1", self.alpha_bar1),
            ("alpha_bar2", self.alpha_bar2),
            ("beta_bar1", self.beta_bar1),
            ("beta_bar2", self.beta_bar2),
            ("mu_min", self.mu_min),
            ("mu", self.mu),
            ("weight_L", self.weight_l),
            ("smallness_rhs", self.smallness_rhs()),
            ("c1(0)", self.c1(0.0)),
            ("c2(0)", self.c2(0.0)),
            ("c3(0)", self.c3(0.0)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v:.6e}");
        }
        let _ = writeln!(s, "c4(0) = {:.6e}", self.c4(0.0));
        match self.eps_star {
            Some(e) => {
                let _ = writeln!(s, "eps_star = {e:.6e}{}", if self.eps_star_capped { " (capped at search bound)" } else { "" });
                let _ = writeln!(s, "delta1(eps_star) = {:.6e}", self.delta1(e));
                let _ = writeln!(s, "c4(eps_star) = {:.6e}", self.c4(e));
            }
            None => {
                let _ = writeln!(s, "eps_star = none");
            }
        }
        s
    }
}

/// Evaluates every constant for `spec` under the delay bounds in `report`.
pub fn compute_margins(
    spec: &PlantSpec,
    report: &AssumptionReport,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<MarginReport, MarginError> {
    if !report.valid {
        return Err(MarginError::InvalidAssumptions(report.first_violation_time));
    }
    for (which, m) in [("Q", q), ("R", r)] {
        let symmetric = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
        if !m.is_square() || m.nrows() != spec.n() || !symmetric || sym_eig_range(m).0 <= 0.0 {
            return Err(MarginError::NotSpd { which });
        }
    }
    let abk = &spec.a + &spec.b * &spec.k;
    let alc = &spec.a - &spec.l * &spec.c;
    let p = solve_lyapunov(&abk, q, "A+BK")?;
    let s = solve_lyapunov(&alc, r, "A-LC")?;
    let residual_p = spectral_norm(&(&p * &abk + abk.transpose() * &p + q));
    let residual_s = spectral_norm(&(&s * &alc + alc.transpose() * &s + r));

    let (pi0, pi1, pi2, pi3) = (report.pi0_star, report.pi1_star, report.pi2_star, report.pi3_star);
    let norm_a = spectral_norm(&spec.a);
    let norm_b = spectral_norm(&spec.b);
    let norm_k = spectral_norm(&spec.k);
    let norm_abk = spectral_norm(&abk);
    let norm_pb = spectral_norm(&(&p * &spec.b));
    let lambda_min_q = sym_eig_range(q).0;
    let lambda_min_r = sym_eig_range(r).0;
    let lambda_max_p = sym_eig_range(&p).1;
    let lambda_max_s = sym_eig_range(&s).1;

    let b = ((1.0 - pi3) * 1f64.max(1.0 / pi3)).max(0.0) + B_MARGIN;
    let beta_star = (b - 1.0 + pi3).min((b + 1.0) * pi3 - 1.0);
    let inv_pi1 = 1.0 / pi1;
    let omega1 = norm_k * (norm_a * inv_pi1).exp();
    let omega2 = 6.0 * norm_pb.powi(2) * b.exp() / (pi0 * pi1 * pi2 * lambda_min_q);
    let kb2 = norm_k.powi(2) * norm_b.powi(2);
    let alpha_bar1 = 3.0 * (1.0 + kb2 / pi1 * growth(norm_a, inv_pi1));
    let alpha_bar2 = 3.0 * norm_k.powi(2) * pi1 * growth(norm_a, inv_pi1);
    let beta_bar1 = 3.0 * (1.0 + kb2 / pi1 * growth(norm_abk, inv_pi1));
    let beta_bar2 = 3.0 * norm_k.powi(2) * pi1 * growth(norm_abk, inv_pi1);
    let e2a = (2.0 * norm_a * inv_pi1).exp();
    let mu_min = (2.0 * omega2 * omega1 * omega1 + lambda_min_q / 2.0) * e2a / (pi2 * lambda_min_r);
    let mu = MU_FACTOR * mu_min;
    let weight_l = 4.0 * norm_pb.powi(2) / (pi1 * lambda_min_q);

    let mut rep = MarginReport {
        p,
        s,
        q: q.clone(),
        r: r.clone(),
        residual_p,
        residual_s,
        pi0,
        pi1,
        pi2,
        pi3,
        norm_a,
        norm_b,
        norm_k,
        norm_abk,
        norm_pb,
        lambda_min_q,
        lambda_min_r,
        lambda_max_p,
        lambda_max_s,
        b,
        beta_star,
        omega1,
        omega2,
        alpha_bar1,
        alpha_bar2,
        beta_bar1,
        beta_bar2,
        mu_min,
        mu,
        weight_l,
        eps_star: None,
        eps_star_capped: false,
        infeasible: None,
    };

    let names = [
        "lambda_min(Q)/(12 Omega2 beta_bar2 |B|^2)",
        "2|PB|^2 beta_star/(Omega2 beta_bar1 |B|^2 lambda_min(Q))",
        "lambda_min(Q)/4",
    ];
    let failing_rhs = rep
        .smallness_rhs_terms()
        .iter()
        .zip(names)
        .find(|(v, _)| !(**v > 0.0))
        .map(|(v, name)| format!("smallness bound {name} = {v:e} is not positive"));
    rep.infeasible = if !(beta_star > 0.0) {
        Some(format!("beta_star = {beta_star:e} is not positive"))
    } else if !(rep.c1(0.0) > 0.0) {
        Some(format!("c1(0) = {:e} <= 0", rep.c1(0.0)))
    } else if !(rep.c2(0.0) > 0.0) {
        Some(format!("c2(0) = {:e} <= 0", rep.c2(0.0)))
    } else if !(rep.c3(0.0) > 0.0) {
        Some(format!("c3(0) = {:e} <= 0", rep.c3(0.0)))
    } else {
        failing_rhs
    };

    if rep.infeasible.is_none() {
        if rep.smallness_holds(1.0) {
            rep.eps_star = Some(1.0);
            rep.eps_star_capped = true;
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..EPS_BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if rep.smallness_holds(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rep.eps_star = Some(lo);
        }
    }
    Ok(rep)
}

/// Outcome of one norm-equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub u_norm_sq: f64,
    pub w_norm_sq: f64,
    pub z_norm_sq: f64,
    /// `ᾱ₁‖u‖² + ᾱ₂|Z|²`
    pub forward_bound: f64,
    /// `β̄₁‖w‖² + β̄₂|Z|²`
    pub reverse_bound: f64,
    /// Largest pointwise gap between `u` and its reconstruction from `w`.
    pub roundtrip_error: f64,
    pub forward_holds: bool,
    pub reverse_holds: bool,
}

impl NormEquivalence {
    pub fn holds(&self) -> bool {
        self.forward_holds && self.reverse_holds
    }
}

fn l2_sq(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len();
    let h = 1.0 / (n - 1) as f64;
    samples
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            w * v.iter().map(|x| x * x).sum::<f64>()
        })
        .sum::<f64>()
        * h
}

/// Runs `p′ = ψ(M p + B v(x))`, `p(0) = z` on the sample grid with exact
/// propagation and trapezoidal forcing, returning `out(x) = v(x) + sign·K p(x)`.
fn transport_transform(
    m: &DMatrix<f64>,
    spec: &PlantSpec,
    psi: f64,
    z: &[f64],
    v: &[Vec<f64>],
    sign: f64,
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = v.len();
    let h = 1.0 / (n - 1) as f64;
    let e = expm(m, psi * h)?;
    let bv = |x: &Vec<f64>| &spec.b * nalgebra::DVector::from_column_slice(x);
    let mut p = nalgebra::DVector::from_column_slice(z);
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j > 0 {
            p = &e * (&p + bv(&v[j - 1]) * (0.5 * psi * h)) + bv(&v[j]) * (0.5 * psi * h);
        }
        let kp = &spec.k * &p;
        out.push(v[j].iter().zip(kp.iter()).map(|(a, b)| a + sign * b).collect());
    }
    Ok(out)
}

/// Checks `‖w‖² ≤ ᾱ₁‖u‖² + ᾱ₂|Z|²` and `‖u‖² ≤ β̄₁‖w‖² + β̄₂|Z|²` for the
/// transform `w = u − K p` with `p′ = ψ(A p + B u)`, `p(0) = Z`, and its
/// inverse `u = w + K p` with `p′ = ψ((A+BK) p + B w)`. `u` holds the
/// samples of `u(x)` on a uniform grid of `[0, 1]`.
pub fn norm_equivalence_check(
    spec: &PlantSpec,
    report: &MarginReport,
    psi: f64,
    u: &[Vec<f64>],
    z: &[f64],
) -> Result<NormEquivalence, LinalgError> {
    assert!(u.len() >= 2, "need at least two samples of u");
    let w = transport_transform(&spec.a, spec, psi, z, u, -1.0)?;
    let abk = &spec.a + &spec.b * &spec.k;
    let back = transport_transform(&abk, spec, psi, z, &w, 1.0)?;
    let roundtrip_error = back
        .iter()
        .zip(u)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let u_norm_sq = l2_sq(u);
    let w_norm_sq = l2_sq(&w);
    let z_norm_sq = z.iter().map(|x| x * x).sum::<f64>();
    let forward_bound = report.alpha_bar1 * u_norm_sq + report.alpha_bar2 * z_norm_sq;
    let reverse_bound = report.beta_bar1 * w_norm_sq + report.beta_bar2 * z_norm_sq;
    Ok(NormEquivalence {
        u_norm_sq,
        w_norm_sq,
        z_norm_sq,
        forward_bound,
        reverse_bound,
        roundtrip_error,
        forward_holds: w_norm_sq <= forward_bound,
        reverse_holds: u_norm_sq <= reverse_bound,
    })
}
