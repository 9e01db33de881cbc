//! Conjugate gradients on a trust region, with full iteration traces.
//!
//! [`tcg`] minimizes the quadratic model `m(v) = -⟨b, v⟩ + ½⟨v, A v⟩` (for a
//! trust-region step, `b` is the negative gradient and `A` the Hessian) over
//! the ball `‖v‖ ≤ Δ`, stopping on one of three events:
//!
//! * **nonpositive curvature** along the current direction — the step is
//!   continued to the boundary;
//! * **radius crossing** — the step is shortened back to the boundary;
//! * **residual reduction** `‖r_n‖ ≤ ‖r_0‖ · min(‖r_0‖^θ, κ)` — the interior
//!   iterate is returned.
//!
//! The exponent `θ` controls the local convergence order of the outer method
//! (order `1 + θ`); `θ = 1` is admitted but flagged, since the supporting
//! theory needs `θ < 1`.
//!
//! [`CgMode::Plain`] disables the two truncation rules and runs classical
//! conjugate gradients for a fixed iteration budget; it exists so polynomial
//! identities can be cross-checked against actual iterate sequences.

use std::io::Write;

use nalgebra::DVector;

use crate::io::{fmt_f64, fmt_opt_f64};
use crate::operator::SymmetricOperator;
use crate::{Error, Result};

/// Whether the two truncation rules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgMode {
    /// Trust-region behavior: boundary and residual truncations enabled.
    Truncated,
    /// Classical conjugate gradients: run until the iteration budget, an
    /// exactly zero residual, or breakdown.
    Plain,
}

/// Parameters of a [`tcg`] run.
#[derive(Debug, Clone)]
pub struct TcgParams {
    /// Residual-reduction cap `κ > 0`.
    pub kappa: f64,
    /// Residual-reduction exponent `θ ∈ (0, 1]`.
    pub theta: f64,
    /// Trust radius `Δ > 0`.
    pub delta: f64,
    /// Iteration budget; defaults to the ambient dimension.
    pub max_iterations: Option<usize>,
    pub mode: CgMode,
}

impl TcgParams {
    /// Truncated-mode parameters with the default iteration budget.
    pub fn truncated(kappa: f64, theta: f64, delta: f64) -> Self {
        Self {
            kappa,
            theta,
            delta,
            max_iterations: None,
            mode: CgMode::Truncated,
        }
    }

    /// Plain-mode parameters running exactly up to `iterations`.
    pub fn plain(iterations: usize) -> Self {
        Self {
            kappa: 1.0,
            theta: 1.0,
            delta: f64::INFINITY,
            max_iterations: Some(iterations),
            mode: CgMode::Plain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kappa must be positive and finite, got {}",
                self.kappa
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        let radius_ok = match self.mode {
            CgMode::Truncated => self.delta.is_finite() && self.delta > 0.0,
            CgMode::Plain => self.delta > 0.0,
        };
        if !radius_ok {
            return Err(Error::InvalidParam(format!(
                "delta must be positive (and finite in truncated mode), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// `θ = 1` asks for quadratic local convergence, which the supporting
    /// theory does not cover; callers should surface this to the user.
    pub fn flags_quadratic_theta(&self) -> bool {
        self.theta == 1.0
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `b = 0`: the zero step is optimal.
    ZeroRhs,
    /// Nonpositive curvature met; stepped to the boundary.
    NegativeCurvatureBoundary,
    /// Interior step crossed the radius; shortened to the boundary.
    RadiusBoundary,
    /// Residual-reduction rule satisfied.
    ResidualSmall,
    /// Iteration budget exhausted.
    MaxIterations,
    /// Non-finite arithmetic, or nonpositive curvature in plain mode; the
    /// trace is truncated at the last well-defined iterate.
    Breakdown,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ZeroRhs => "zero_b",
            Termination::NegativeCurvatureBoundary => "negative_curvature_boundary",
            Termination::RadiusBoundary => "radius_boundary",
            Termination::ResidualSmall => "residual_small",
            Termination::MaxIterations => "max_iterations",
            Termination::Breakdown => "breakdown",
        }
    }

    /// True when the returned step lies on the trust-region boundary.
    pub fn on_boundary(&self) -> bool {
        matches!(
            self,
            Termination::NegativeCurvatureBoundary | Termination::RadiusBoundary
        )
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// State after one iteration (`n = 0` records the initial state).
#[derive(Debug, Clone)]
pub struct TcgIteration {
    pub n: usize,
    pub v: DVector<f64>,
    pub r: DVector<f64>,
    pub v_norm: f64,
    pub r_norm: f64,
    /// `⟨u_{n-1}, A u_{n-1}⟩` for `n ≥ 1`.
    pub curvature: Option<f64>,
    /// Step length along `u_{n-1}` (absent on a negative-curvature exit,
    /// where it is not defined).
    pub alpha: Option<f64>,
    /// Direction-update coefficient (present only when the run continued
    /// past this iteration).
    pub beta: Option<f64>,
}

/// Full record of a [`tcg`] run.
#[derive(Debug, Clone)]
pub struct TcgTrace {
    /// Iterations `0..=n_final`.
    pub iterations: Vec<TcgIteration>,
    pub termination: Termination,
    /// Human-readable cause for [`Termination::Breakdown`].
    pub breakdown_detail: Option<String>,
    /// Trust radius the run was given.
    pub delta: f64,
    /// Residual threshold `‖r_0‖ · min(‖r_0‖^θ, κ)` (zero in plain mode).
    pub residual_threshold: f64,
}

impl TcgTrace {
    /// The returned step: the final recorded iterate.
    pub fn output(&self) -> &DVector<f64> {
        &self.iterations.last().expect("trace is never empty").v
    }

    /// Number of completed iterations (the `n` of the final record).
    pub fn final_n(&self) -> usize {
        self.iterations.last().expect("trace is never empty").n
    }

    /// Residual norms `‖r_0‖, ‖r_1‖, …` in iteration order.
    pub fn residual_norms(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.r_norm).collect()
    }

    /// Iterate norms `‖v_0‖, ‖v_1‖, …` in iteration order.
    pub fn iterate_norms(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.v_norm).collect()
    }

    /// Write the per-iteration CSV
    /// (`n,v_norm,r_norm,curvature,alpha,beta,termination`); the termination
    /// string appears on the final row only.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "n,v_norm,r_norm,curvature,alpha,beta,termination")?;
        let last = self.iterations.len() - 1;
        for (i, it) in self.iterations.iter().enumerate() {
            let term = if i == last { self.termination.as_str() } else { "" };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                it.n,
                fmt_f64(it.v_norm),
                fmt_f64(it.r_norm),
                fmt_opt_f64(it.curvature),
                fmt_opt_f64(it.alpha),
                fmt_opt_f64(it.beta),
                term
            )?;
        }
        Ok(())
    }
}

/// Nonnegative step length `t` with `‖v + t u‖ = Δ`, from the stable form of
/// the quadratic formula (no cancellation for either sign of `⟨v, u⟩`).
fn boundary_length(v: &DVector<f64>, u: &DVector<f64>, delta: f64) -> Result<f64> {
    let uu = u.norm_squared();
    if uu == 0.0 {
        return Err(Error::CgBreakdown {
            iteration: 0,
            reason: "boundary step along a zero direction".into(),
        });
    }
    let vu = v.dot(u);
    let slack = (delta * delta - v.norm_squared()).max(0.0);
    let disc = (vu * vu + uu * slack).max(0.0).sqrt();
    let t = if vu >= 0.0 {
        if vu + disc == 0.0 {
            0.0
        } else {
            slack / (vu + disc)
        }
    } else {
        (-vu + disc) / uu
    };
    Ok(t)
}

/// Run (truncated) conjugate gradients on `(A, b)`.
///
/// The trace records every iterate and residual vector, so polynomial-level
/// identities can be verified against it afterwards. Residuals follow the
/// usual recurrence except on boundary exits, where the recorded residual is
/// recomputed directly as `b - A v_n`.
pub fn tcg(a: &SymmetricOperator, b: &DVector<f64>, params: &TcgParams) -> Result<TcgTrace> {
    params.validate()?;
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            context: "operator and right-hand side",
            expected: a.dim(),
            got: b.len(),
        });
    }
    let max_iterations = params.max_iterations.unwrap_or(a.dim()).max(1);
    let truncated = params.mode == CgMode::Truncated;

    let r0_norm = b.norm();
    let residual_threshold = if truncated {
        r0_norm * r0_norm.powf(params.theta).min(params.kappa)
    } else {
        0.0
    };

    let mut trace = TcgTrace {
        iterations: vec![TcgIteration {
            n: 0,
            v: DVector::zeros(b.len()),
            r: b.clone(),
            v_norm: 0.0,
            r_norm: r0_norm,
            curvature: None,
            alpha: None,
            beta: None,
        }],
        termination: Termination::ZeroRhs,
        breakdown_detail: None,
        delta: params.delta,
        residual_threshold,
    };
    if r0_norm == 0.0 {
        return Ok(trace);
    }

    let mut v = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut u = b.clone();
    let mut r_sq = r0_norm * r0_norm;

    for n in 1..=max_iterations {
        let au = a.apply(&u);
        let curvature = u.dot(&au);
        if !curvature.is_finite() {
            trace.termination = Termination::Breakdown;
            trace.breakdown_detail = Some(format!("non-finite curvature at iteration {n}"));
            return Ok(trace);
        }

        if curvature <= 0.0 {
            if truncated {
                let t = boundary_length(&v, &u, params.delta)?;
                let v_n = &v + &u * t;
                let r_n = b - a.apply(&v_n);
                trace.iterations.push(TcgIteration {
                    n,
                    v_norm: v_n.norm(),
                    r_norm: r_n.norm(),
                    v: v_n,
                    r: r_n,
                    curvature: Some(curvature),
                    alpha: None,
                    beta: None,
                });
                trace.termination = Termination::NegativeCurvatureBoundary;
            } else {
                trace.termination = Termination::Breakdown;
                trace.breakdown_detail = Some(format!(
                    "nonpositive curvature {curvature:.3e} at iteration {n} in plain mode"
                ));
            }
            return Ok(trace);
        }

        let alpha = r_sq / curvature;
        let v_plus = &v + &u * alpha;

        if truncated && v_plus.norm() >= params.delta {
            let t = boundary_length(&v, &u, params.delta)?;
            let v_n = &v + &u * t;
            let r_n = b - a.apply(&v_n);
            trace.iterations.push(TcgIteration {
                n,
                v_norm: v_n.norm(),
                r_norm: r_n.norm(),
                v: v_n,
                r: r_n,
                curvature: Some(curvature),
                alpha: Some(alpha),
                beta: None,
            });
            trace.termination = Termination::RadiusBoundary;
            return Ok(trace);
        }

        v = v_plus;
        r -= &au * alpha;
        let r_sq_new = r.norm_squared();
        if !(r_sq_new.is_finite() && v.norm_squared().is_finite()) {
            trace.termination = Termination::Breakdown;
            trace.breakdown_detail = Some(format!("non-finite iterate at iteration {n}"));
            return Ok(trace);
        }
        trace.iterations.push(TcgIteration {
            n,
            v: v.clone(),
            r: r.clone(),
            v_norm: v.norm(),
            r_norm: r_sq_new.sqrt(),
            curvature: Some(curvature),
            alpha: Some(alpha),
            beta: None,
        });

        if r_sq_new.sqrt() <= residual_threshold {
            trace.termination = Termination::ResidualSmall;
            return Ok(trace);
        }
        if n == max_iterations {
            trace.termination = Termination::MaxIterations;
            return Ok(trace);
        }

        let beta = r_sq_new / r_sq;
        trace
            .iterations
            .last_mut()
            .expect("just pushed")
            .beta = Some(beta);
        u = &r + &u * beta;
        r_sq = r_sq_new;
    }
    unreachable!("loop always returns by the max_iterations arm");
}

/// Ratio of the achieved model decrease to the Cauchy-point scale
/// `‖b‖ · min(Δ, ‖b‖³/|⟨b, A b⟩|)`.
///
/// Truncated conjugate gradients guarantees this ratio is at least `½` at
/// every iterate (its first iterate already realizes the Cauchy decrease and
/// later iterates only improve the model). Returns `+∞` when the scale is
/// zero (i.e. `b = 0`).
pub fn cauchy_decrease_ratio(trace: &TcgTrace, a: &SymmetricOperator, b: &DVector<f64>) -> f64 {
    let s = trace.output();
    let decrease = b.dot(s) - 0.5 * a.quad(s, s);
    let g_norm = b.norm();
    let curv = a.quad(b, b);
    let cap = if curv == 0.0 {
        trace.delta
    } else {
        trace.delta.min(g_norm.powi(3) / curv.abs())
    };
    let scale = g_norm * cap;
    if scale == 0.0 {
        return f64::INFINITY;
    }
    decrease / scale
}
