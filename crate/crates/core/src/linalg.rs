//! Small dense linear algebra: matrix exponential, spectral norm, eigenvalue
//! tests and the continuous Lyapunov equation.

use nalgebra::DMatrix;
use thiserror::Error;

/// Largest `‖M t‖₁` accepted by [`expm`].
pub const EXPM_MAX_NORM: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("‖Mt‖₁ = {norm} exceeds {EXPM_MAX_NORM}")]
    NormTooLarge { norm: f64 },
    #[error("matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{which} is not Hurwitz (max real part of eigenvalues {max_real})")]
    NotHurwitz { which: String, max_real: f64 },
    #[error("Lyapunov solve for {which} failed: {reason}")]
    LyapunovFailed { which: String, reason: String },
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

// Padé [6/6] numerator coefficients b_k = (12−k)! 6! / (12! k! (6−k)!)
const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// `e^{M t}` by scaling and squaring around a [6/6] Padé approximant.
pub fn expm(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    let x = m * t;
    let norm = norm1(&x);
    if !(norm <= EXPM_MAX_NORM) {
        return Err(LinalgError::NormTooLarge { norm });
    }
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = x / 2f64.powi(squarings);

    let id = DMatrix::<f64>::identity(n, n);
    let mut num = &id * PADE6[0];
    let mut den = &id * PADE6[0];
    let mut power = id.clone();
    for (k, &c) in PADE6.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut r = den.lu().solve(&num).expect("Padé denominator is invertible for ‖X‖ ≤ 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_hurwitz(m: &DMatrix<f64>, which: &str) -> Result<(), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let max_real = spectral_abscissa(m);
    if max_real < 0.0 {
        Ok(())
    } else {
        Err(LinalgError::NotHurwitz {
            which: which.to_string(),
            max_real,
        })
    }
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Residual tolerance relative to `max(1, ‖Q‖₂)`.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-8;

/// Solve `P M + Mᵀ P = −Q` for symmetric positive-definite `P` through the
/// Kronecker form `(Mᵀ ⊗ I + I ⊗ Mᵀ) vec(P) = −vec(Q)`.
pub fn solve_lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>, which: &str) -> Result<DMatrix<f64>, LinalgError> {
    check_hurwitz(m, which)?;
    let n = m.nrows();
    if q.shape() != (n, n) {
        return Err(LinalgError::LyapunovFailed {
            which: which.into(),
            reason: format!("Q is {:?}, expected {n}×{n}", q.shape()),
        });
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    let system = mt.kronecker(&id) + id.kronecker(&mt);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let vec_p = system.lu().solve(&rhs).ok_or_else(|| LinalgError::NotHurwitz {
        which: which.into(),
        max_real: spectral_abscissa(m),
    })?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = spectral_norm(&(&p * m + m.transpose() * &p + q));
    let scale = spectral_norm(q).max(1.0);
    if residual > LYAPUNOV_RESIDUAL_TOL * scale {
        return Err(LinalgError::LyapunovFailed {
            which: which.into(),
            reason: format!("residual {residual:e}"),
        });
    }
    let (lo, _) = sym_eig_range(&p);
    if lo <= 0.0 {
        return Err(LinalgError::LyapunovFailed {
            which: which.into(),
            reason: format!("solution not positive definite (λ_min = {lo:e})"),
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0])
    }

    /// Plain Taylor series with `terms` terms.
    fn taylor_expm(m: &DMatrix<f64>, t: f64, terms: usize) -> DMatrix<f64> {
        let n = m.nrows();
        let x = m * t;
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * &x / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm(&z, 5.0).unwrap(), DMatrix::identity(3, 3));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5]));
        let e = expm(&d, 2.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-2.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 1f64.exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let a = paper_a();
        for t in [0.1, 1.0, 2.5] {
            let fast = expm(&a, t).unwrap();
            let slow = taylor_expm(&a, t, 200);
            let err = (&fast - &slow).abs().max() / slow.abs().max();
            assert!(err < 1e-10, "t = {t}: {err:e}");
        }
        let closed = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -2.0]);
        let err = (expm(&closed, 4.0).unwrap() - taylor_expm(&closed, 4.0, 200)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn expm_relative_accuracy_large_norm() {
        // rotation generator: e^{θJ} is an exact rotation
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = expm(&j, 19.0).unwrap();
        assert_relative_eq!(e[(0, 0)], 19f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 0)], 19f64.sin(), epsilon = 1e-12);
    }

    #[test]
    fn expm_rejects_huge_norm() {
        assert!(matches!(
            expm(&paper_a(), 50.0),
            Err(LinalgError::NormTooLarge { .. })
        ));
    }

    #[test]
    fn spectral_norm_of_known_matrices() {
        assert_relative_eq!(
            spectral_norm(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0])),
            5.0,
            epsilon = 1e-12
        );
        // ‖A‖₂ for [[0,1],[1,2]] is 1 + √2
        assert_relative_eq!(spectral_norm(&paper_a()), 1.0 + 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn hurwitz_tests() {
        assert!(check_hurwitz(&paper_a(), "A").is_err());
        let abk = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -2.0]);
        assert!(check_hurwitz(&abk, "A+BK").is_ok());
        assert_relative_eq!(spectral_abscissa(&abk), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_closed_forms() {
        let m = -DMatrix::<f64>::identity(3, 3);
        let p = solve_lyapunov(&m, &(DMatrix::identity(3, 3) * 2.0), "M").unwrap();
        assert!((p - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-14);

        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let p = solve_lyapunov(&m, &DMatrix::identity(2, 2), "M").unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[(1, 1)], 0.25, epsilon = 1e-14);
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn lyapunov_closed_loop_residual() {
        let abk = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -2.0]);
        let q = DMatrix::identity(2, 2);
        let p = solve_lyapunov(&abk, &q, "A+BK").unwrap();
        let r = (&p * &abk + abk.transpose() * &p + &q).abs().max();
        assert!(r <= 1e-10);
        assert_eq!(p[(0, 1)], p[(1, 0)]);
        assert!(matches!(
            solve_lyapunov(&paper_a(), &q, "A"),
            Err(LinalgError::NotHurwitz { .. })
        ));
    }
}
