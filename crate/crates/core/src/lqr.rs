//! Continuous-time algebraic Riccati equation and the LQR gain.
//!
//! Newton–Kleinman: starting from a stabilizing gain `K₀`, repeatedly solve the
//! closed-loop Lyapunov equation
//!
//! ```text
//! (A − B Kᵢ)ᵀ P + P (A − B Kᵢ) + Q + Kᵢᵀ R Kᵢ = 0,   Kᵢ₊₁ = R⁻¹ Bᵀ P
//! ```
//!
//! Each iterate stays stabilizing and the sequence of `P` decreases
//! monotonically to the stabilizing CARE solution.

use nalgebra::DMatrix;

use crate::cps::FeedbackGain;
use crate::error::{Result, StaError};
use crate::linalg::{is_symmetric, min_symmetric_eigenvalue, solve_lyapunov, spectral_abscissa};

pub const MAX_ITERATIONS: usize = 200;
pub const RESIDUAL_TARGET: f64 = 1e-10;
pub const RESIDUAL_ACCEPT: f64 = 1e-8;

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

fn check_inputs(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(StaError::Dimension("A must be square".into()));
    }
    if b.nrows() != n {
        return Err(StaError::Dimension(format!("B must have {n} rows")));
    }
    if q.shape() != (n, n) {
        return Err(StaError::Dimension(format!("Q must be {n}x{n}")));
    }
    if r.shape() != (b.ncols(), b.ncols()) {
        return Err(StaError::Dimension(format!("R must be {0}x{0}", b.ncols())));
    }
    if !is_symmetric(q, 1e-12) || min_symmetric_eigenvalue(q) < -1e-10 {
        return Err(StaError::config("Q", "must be symmetric positive semidefinite"));
    }
    if !is_symmetric(r, 1e-12) || min_symmetric_eigenvalue(r) <= 1e-12 {
        return Err(StaError::config("R", "must be symmetric positive definite"));
    }
    Ok(())
}

/// A gain `K` with `A − B K` Hurwitz, or `None` if neither construction finds one.
///
/// First tries `K = c Bᵀ` for growing `c`; if that never stabilizes, falls back to
/// the shifted-Lyapunov (Bass) construction `K = Bᵀ Z⁻¹` with
/// `(A + βI) Z + Z (A + βI)ᵀ = 2 B Bᵀ`, β above the spectral abscissa of `A`.
pub fn initial_stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if spectral_abscissa(a) < -1e-9 {
        return Some(DMatrix::zeros(b.ncols(), n));
    }
    let bt = b.transpose();
    let mut c = 0.125;
    while c <= 1e6 {
        let k = &bt * c;
        if spectral_abscissa(&(a - b * &k)) < -1e-9 {
            return Some(k);
        }
        c *= 2.0;
    }
    let norm = a.norm().max(1.0);
    for shift_scale in [1.0, 2.0, 5.0, 20.0] {
        let beta = spectral_abscissa(a).max(0.0) + shift_scale * norm;
        let shifted = a + DMatrix::identity(n, n) * beta;
        // solve_lyapunov handles Mᵀ X + X M + Q = 0; use M = −(A + βI)ᵀ, Q = 2BBᵀ
        let m = -shifted.transpose();
        let z = solve_lyapunov(&m, &(b * &bt * 2.0))?;
        if let Some(z_inv) = z.try_inverse() {
            let k = &bt * z_inv;
            if spectral_abscissa(&(a - b * &k)) < -1e-9 {
                return Some(k);
            }
        }
    }
    None
}

pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    check_inputs(a, b, q, r)?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| StaError::config("R", "singular"))?;
    let mut k = initial_stabilizing_gain(a, b)
        .ok_or_else(|| StaError::Infeasible("no stabilizing initial gain; (A, B) may not be stabilizable".into()))?;

    let bt = b.transpose();
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut stalled = 0;
    for it in 1..=MAX_ITERATIONS {
        let acl = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let p = solve_lyapunov(&acl, &rhs)
            .ok_or_else(|| StaError::Infeasible("singular Lyapunov operator during Newton step".into()))?;
        let residual = care_residual(a, b, q, &r_inv, &p);
        k = &r_inv * &bt * &p;

        let improved = best.as_ref().is_none_or(|(_, r0)| residual < 0.5 * r0);
        if best.as_ref().is_none_or(|(_, r0)| residual < *r0) {
            best = Some((p, residual));
        }
        stalled = if improved { 0 } else { stalled + 1 };

        let (p_best, res_best) = best.as_ref().expect("set above");
        if *res_best <= RESIDUAL_TARGET || (stalled >= 3 && *res_best <= RESIDUAL_ACCEPT) {
            return finish(a, b, &r_inv, p_best.clone(), *res_best, it);
        }
        if stalled >= 10 {
            return Err(StaError::Convergence {
                iterations: it,
                message: format!("Newton–Kleinman stagnated at residual {res_best:e}"),
            });
        }
    }
    let (p, res) = best.expect("at least one iteration");
    if res <= RESIDUAL_ACCEPT {
        return finish(a, b, &r_inv, p, res, MAX_ITERATIONS);
    }
    Err(StaError::Convergence {
        iterations: MAX_ITERATIONS,
        message: format!("Riccati residual {res:e} above {RESIDUAL_ACCEPT:e}"),
    })
}

fn finish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: DMatrix<f64>,
    residual_norm: f64,
    iterations: usize,
) -> Result<RiccatiSolution> {
    let acl = a - b * r_inv * b.transpose() * &p;
    if spectral_abscissa(&acl) >= 0.0 {
        return Err(StaError::Infeasible(
            "Riccati iteration converged to a non-stabilizing solution".into(),
        ));
    }
    Ok(RiccatiSolution {
        p,
        residual_norm,
        iterations,
    })
}

/// `K = R⁻¹ Bᵀ P`.
pub fn lqr_gain(sol: &RiccatiSolution, b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<FeedbackGain> {
    if b.nrows() != sol.p.nrows() || r.shape() != (b.ncols(), b.ncols()) {
        return Err(StaError::Dimension("B, R and P do not conform".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| StaError::config("R", "singular"))?;
    FeedbackGain::new(r_inv * b.transpose() * &sol.p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_integrator() {
        let sol = solve_care(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-10);
        let k = lqr_gain(&sol, &s(1.0), &s(1.0)).unwrap();
        assert!((k.matrix()[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_unstable() {
        let sol = solve_care(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        let root = 1.0 + 2f64.sqrt();
        assert!((sol.p[(0, 0)] - root).abs() < 1e-10);
        let k = lqr_gain(&sol, &s(1.0), &s(1.0)).unwrap();
        assert!((k.matrix()[(0, 0)] - root).abs() < 1e-10);
    }

    #[test]
    fn gain_from_given_p() {
        let sol = RiccatiSolution {
            p: s(1.0),
            residual_norm: 0.0,
            iterations: 0,
        };
        assert_eq!(lqr_gain(&sol, &s(1.0), &s(1.0)).unwrap().matrix()[(0, 0)], 1.0);
        assert!(lqr_gain(&sol, &s(1.0), &s(0.0)).is_err());
    }

    #[test]
    fn reference_system_gain() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 1.0]);
        let sol = solve_care(&a, &b, &DMatrix::identity(2, 2), &s(1.0)).unwrap();
        assert!(sol.residual_norm <= 1e-8);
        assert!((&sol.p - sol.p.transpose()).norm() <= 1e-10);
        let k = lqr_gain(&sol, &b, &s(1.0)).unwrap();
        assert!((k.matrix()[(0, 0)] - 1.26).abs() <= 0.02);
        assert!((k.matrix()[(0, 1)] - 4.76).abs() <= 0.02);
    }

    #[test]
    fn bass_fallback_stabilizes_reference_plant() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 1.0]);
        let k = initial_stabilizing_gain(&a, &b).unwrap();
        assert!(spectral_abscissa(&(&a - &b * k)) < 0.0);
    }

    #[test]
    fn unstabilizable_is_infeasible() {
        // second mode unstable and unreachable
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let err = solve_care(&a, &b, &DMatrix::identity(2, 2), &s(1.0)).unwrap_err();
        assert!(matches!(err, StaError::Infeasible(_)), "{err:?}");
    }
}
