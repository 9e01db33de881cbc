//! Exact trust-region subproblem solves, for cross-validating the truncated
//! conjugate-gradient steps.
//!
//! [`solve_trs_exact`] minimizes `m(s) = -⟨b, s⟩ + ½⟨s, A s⟩` over
//! `‖s‖ ≤ Δ` to optimality via a dense eigendecomposition: interior solve
//! when `A ≻ 0` and the unconstrained minimizer fits, otherwise a
//! safeguarded Newton iteration on `1/‖s(μ)‖ − 1/Δ` for the boundary
//! multiplier, with the degenerate ("hard") case handled by adding a
//! minimal-eigenvector component. The returned multiplier satisfies the
//! full global-optimality certificate `(A + μI) s = b`, `μ ≥ 0`,
//! `μ(‖s‖ − Δ) = 0`, `A + μI ⪰ 0`.

use nalgebra::DVector;

use crate::operator::{symmetric_eigendecompose, SymmetricOperator};
use crate::{Error, Result};

/// Relative tolerance on `‖s‖ = Δ` for the boundary root solve.
const BOUNDARY_REL_TOL: f64 = 1e-13;
/// Weight mass below this times `‖b‖` on the minimal eigenspace is treated
/// as zero when deciding the hard case.
const HARD_CASE_MASS_REL_TOL: f64 = 1e-13;

/// A globally optimal trust-region subproblem solution.
#[derive(Debug, Clone)]
pub struct TrsSolution {
    pub step: DVector<f64>,
    /// KKT multiplier `μ ≥ 0` of the norm constraint.
    pub multiplier: f64,
    pub on_boundary: bool,
    /// True when optimality required a minimal-eigenvector component
    /// (`b` orthogonal to the minimal eigenspace with the regular part
    /// strictly inside the ball).
    pub hard_case: bool,
    /// `‖(A + μI)s − b‖`, recomputed in the original basis.
    pub kkt_residual: f64,
    /// `⟨b, s⟩ − ½⟨s, A s⟩` (positive unless `b = 0` and `A ⪰ 0`).
    pub model_decrease: f64,
}

/// Squared norm of the regularized solution coordinates
/// `β_i/(λ_i + μ)`.
fn norm_sq_at(betas: &DVector<f64>, eigenvalues: &DVector<f64>, mu: f64) -> f64 {
    betas
        .iter()
        .zip(eigenvalues.iter())
        .map(|(&b, &l)| {
            let d = l + mu;
            (b / d) * (b / d)
        })
        .sum()
}

/// `d/dμ ‖s(μ)‖² = -2 Σ β_i²/(λ_i + μ)³`.
fn norm_sq_derivative_at(betas: &DVector<f64>, eigenvalues: &DVector<f64>, mu: f64) -> f64 {
    betas
        .iter()
        .zip(eigenvalues.iter())
        .map(|(&b, &l)| {
            let d = l + mu;
            -2.0 * b * b / (d * d * d)
        })
        .sum()
}

/// Minimize the quadratic model over the ball of radius `delta`.
pub fn solve_trs_exact(
    a: &SymmetricOperator,
    b: &DVector<f64>,
    delta: f64,
) -> Result<TrsSolution> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "trust radius must be positive and finite, got {delta}"
        )));
    }
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            context: "operator and right-hand side",
            expected: a.dim(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "trust-region subproblem right-hand side",
        });
    }
    let eig = symmetric_eigendecompose(a)?;
    let q = &eig.eigenvectors;
    let lambdas = &eig.eigenvalues; // sorted nonincreasing
    let lambda_min = eig.min_eigenvalue();
    let betas = q.transpose() * b;

    let finish = |coords: DVector<f64>, multiplier: f64, on_boundary: bool, hard_case: bool| {
        let step = q * coords;
        let kkt_residual = (a.apply(&step) + &step * multiplier - b).norm();
        let model_decrease = b.dot(&step) - 0.5 * a.quad(&step, &step);
        TrsSolution {
            step,
            multiplier,
            on_boundary,
            hard_case,
            kkt_residual,
            model_decrease,
        }
    };

    // Interior solution when the model is strictly convex and its
    // unconstrained minimizer fits in the ball.
    if lambda_min > 0.0 {
        let coords = DVector::from_fn(b.len(), |i, _| betas[i] / lambdas[i]);
        let norm = coords.norm();
        if norm < delta {
            return Ok(finish(coords, 0.0, false, false));
        }
    }

    let pole = (-lambda_min).max(0.0);
    let scale = eig.spectral_radius().max(1.0);
    let min_group_tol = 1e-12 * scale;
    let mass_tol_sq = {
        let t = HARD_CASE_MASS_REL_TOL * b.norm();
        t * t
    };

    // Split off the minimal eigenspace to probe the norm limit as μ → pole.
    let mut regular_norm_sq = 0.0f64;
    let mut minimal_mass_sq = 0.0f64;
    for i in 0..b.len() {
        if lambdas[i] + pole <= min_group_tol {
            minimal_mass_sq += betas[i] * betas[i];
        } else {
            let d = lambdas[i] + pole;
            regular_norm_sq += (betas[i] / d) * (betas[i] / d);
        }
    }

    if minimal_mass_sq <= mass_tol_sq && regular_norm_sq <= delta * delta {
        // Hard case: the regular part stays inside the ball as μ → pole, so
        // pad with a minimal-eigenvector component to reach the boundary.
        let mut coords = DVector::from_fn(b.len(), |i, _| {
            if lambdas[i] + pole <= min_group_tol {
                0.0
            } else {
                betas[i] / (lambdas[i] + pole)
            }
        });
        let pad = (delta * delta - regular_norm_sq).max(0.0).sqrt();
        let min_index = b.len() - 1;
        coords[min_index] += pad;
        return Ok(finish(coords, pole, true, true));
    }

    // Safeguarded Newton on φ(μ) = 1/‖s(μ)‖ − 1/Δ inside a sign-changing
    // bracket. φ < 0 near the pole and φ ≥ 0 at pole + ‖β‖/Δ.
    let mut lo = pole;
    let mut hi = pole + betas.norm() / delta + f64::MIN_POSITIVE;
    let mut mu = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..300 {
        let norm_sq = norm_sq_at(&betas, lambdas, mu);
        let norm = norm_sq.sqrt();
        if !norm.is_finite() || norm == 0.0 {
            // μ fell onto the pole numerically; move off it.
            lo = mu;
            mu = 0.5 * (mu + hi);
            continue;
        }
        if (norm - delta).abs() <= BOUNDARY_REL_TOL * delta {
            converged = true;
            break;
        }
        let phi = 1.0 / norm - 1.0 / delta;
        if phi < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let dnorm = norm_sq_derivative_at(&betas, lambdas, mu) / (2.0 * norm);
        let dphi = -dnorm / norm_sq;
        let newton = mu - phi / dphi;
        mu = if dphi.is_finite() && dphi > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ContractViolation(format!(
            "boundary multiplier search did not converge (bracket [{lo:.6e}, {hi:.6e}])"
        )));
    }
    let coords = DVector::from_fn(b.len(), |i, _| betas[i] / (lambdas[i] + mu));
    // Rescale exactly onto the boundary to absorb the last rounding.
    let norm = coords.norm();
    let coords = coords * (delta / norm);
    Ok(finish(coords, mu, true, false))
}
