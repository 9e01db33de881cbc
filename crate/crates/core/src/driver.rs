//! Trust-region outer loop over a [`ProblemDefinition`], with either the
//! truncated CG subproblem solver or the exact eigenbasis solver, plus
//! post-hoc diagnostics: decrease/step/stationarity condition checks,
//! convergence-order estimation from gradient norms, and a basin-capture
//! experiment that restarts the method from random perturbations of a
//! minimizer.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::io::fmt_f64;
use crate::operator::{symmetric_eigendecompose, SymmetricOperator};
use crate::problems::ProblemDefinition;
use crate::tcg::{tcg, TcgParams};
use crate::trs::solve_trs_exact;
use crate::{Error, Result};

/// How the quadratic model's curvature term is solved at each outer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubproblemSolver {
    /// Truncated CG with residual rule `‖r_n‖ ≤ ‖r_0‖ min(‖r_0‖^θ, κ)`.
    TruncatedCg { kappa: f64, theta: f64 },
    /// Global solution of the trust-region subproblem in the eigenbasis.
    Exact,
}

/// Where the model Hessian comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// The problem's analytic second derivatives.
    Analytic,
    /// Central finite differences of the analytic gradient (dense).
    FiniteDifference,
}

/// Outer-loop parameters.
#[derive(Debug, Clone)]
pub struct TrConfig {
    /// Initial radius `Δ_0` (default `Δ̄/8`).
    pub delta0: f64,
    /// Radius cap `Δ̄`.
    pub delta_max: f64,
    /// Acceptance threshold `ρ' ∈ (0, ¼)`: accept when `ρ > ρ'`.
    pub rho_accept: f64,
    /// Stop when `‖∇f‖` falls to this value.
    pub grad_tol: f64,
    /// Outer-iteration budget.
    pub max_outer: usize,
    pub solver: SubproblemSolver,
    pub hessian_mode: HessianMode,
}

impl TrConfig {
    /// Truncated-CG configuration with conventional radius defaults.
    pub fn truncated(kappa: f64, theta: f64) -> Self {
        TrConfig {
            delta0: 1.0,
            delta_max: 8.0,
            rho_accept: 0.1,
            grad_tol: 1e-9,
            max_outer: 200,
            solver: SubproblemSolver::TruncatedCg { kappa, theta },
            hessian_mode: HessianMode::Analytic,
        }
    }

    /// Exact-subproblem configuration with the same defaults.
    pub fn exact() -> Self {
        TrConfig {
            solver: SubproblemSolver::Exact,
            ..TrConfig::truncated(1.0, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "initial radius must be positive and finite, got {}",
                self.delta0
            )));
        }
        if self.delta_max < self.delta0 || self.delta_max.is_nan() {
            return Err(Error::InvalidParam(format!(
                "radius cap {} must be at least the initial radius {}",
                self.delta_max, self.delta0
            )));
        }
        if !(self.rho_accept > 0.0 && self.rho_accept < 0.25) {
            return Err(Error::InvalidParam(format!(
                "acceptance threshold must lie in (0, 1/4), got {}",
                self.rho_accept
            )));
        }
        if self.grad_tol < 0.0 || self.grad_tol.is_nan() {
            return Err(Error::InvalidParam(format!(
                "gradient tolerance must be nonnegative, got {}",
                self.grad_tol
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParam(
                "outer-iteration budget must be at least 1".into(),
            ));
        }
        if let SubproblemSolver::TruncatedCg { kappa, theta } = self.solver {
            TcgParams::truncated(kappa, theta, self.delta0).validate()?;
        }
        Ok(())
    }
}

/// One outer iteration: the state before the step and the trial outcome.
#[derive(Debug, Clone)]
pub struct TrIteration {
    pub k: usize,
    /// Iterate at the start of the iteration.
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    /// Radius used for this subproblem.
    pub delta: f64,
    pub step: DVector<f64>,
    pub step_norm: f64,
    /// Objective at the trial point `x + step`.
    pub f_trial: f64,
    /// Model decrease `m(0) − m(s) = ⟨b, s⟩ − ½⟨s, H s⟩` with `b = −∇f`.
    pub model_decrease: f64,
    /// Actual-over-predicted decrease; set to exactly 1 when the predicted
    /// decrease is below `1e-15 |f|`.
    pub rho: f64,
    pub accepted: bool,
    /// Whether the subproblem step lies on the trust-region boundary.
    pub hit_boundary: bool,
    /// Subproblem termination label.
    pub inner_termination: String,
    /// Subproblem iteration count (0 for the exact solver).
    pub inner_iterations: usize,
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    /// `‖∇f‖ ≤ grad_tol`.
    GradientBelowTolerance,
    /// Outer budget exhausted.
    MaxIterations,
    /// The radius shrank to rounding level without an acceptable step.
    RadiusCollapse,
    /// Objective or gradient became non-finite; the record holds the
    /// iterations completed before that point.
    NonFiniteAbort,
}

impl TrStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrStatus::GradientBelowTolerance => "gradient_below_tolerance",
            TrStatus::MaxIterations => "max_iterations",
            TrStatus::RadiusCollapse => "radius_collapse",
            TrStatus::NonFiniteAbort => "non_finite_abort",
        }
    }
}

/// Full record of a trust-region run.
#[derive(Debug, Clone)]
pub struct TrRunRecord {
    pub config: TrConfig,
    pub iterations: Vec<TrIteration>,
    pub status: TrStatus,
    pub final_x: DVector<f64>,
    pub final_f: f64,
    pub final_grad_norm: f64,
}

impl TrRunRecord {
    /// Gradient norms along the chain of distinct iterates (initial point,
    /// then one entry per accepted step, ending at the final point).
    pub fn iterate_gradient_norms(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match self.iterations.first() {
            Some(first) => out.push(first.grad_norm),
            None => {
                out.push(self.final_grad_norm);
                return out;
            }
        }
        for (i, row) in self.iterations.iter().enumerate() {
            if row.accepted {
                out.push(match self.iterations.get(i + 1) {
                    Some(next) => next.grad_norm,
                    None => self.final_grad_norm,
                });
            }
        }
        out
    }

    /// Write `k,grad_norm,f,delta,rho,step_norm,accepted,termination` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "k,grad_norm,f,delta,rho,step_norm,accepted,termination")?;
        for row in &self.iterations {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.k,
                fmt_f64(row.grad_norm),
                fmt_f64(row.f),
                fmt_f64(row.delta),
                fmt_f64(row.rho),
                fmt_f64(row.step_norm),
                row.accepted,
                row.inner_termination,
            )?;
        }
        Ok(())
    }
}

fn hessian_at(
    problem: &ProblemDefinition,
    x: &DVector<f64>,
    mode: HessianMode,
) -> Result<SymmetricOperator> {
    match mode {
        HessianMode::Analytic => Ok(problem.hessian(x)),
        HessianMode::FiniteDifference => {
            let n = x.len();
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                let h = 1e-5 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (problem.gradient(&xp) - problem.gradient(&xm)) / (2.0 * h);
                m.set_column(j, &col);
            }
            let sym = (&m + m.transpose()) * 0.5;
            SymmetricOperator::from_dense(sym)
        }
    }
}

/// Deterministic power-iteration estimate of the operator norm.
fn operator_norm_power(h: &SymmetricOperator) -> f64 {
    let n = h.dim();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * i as f64);
    let norm0 = v.norm();
    if norm0 == 0.0 {
        return 0.0;
    }
    v /= norm0;
    let mut estimate = 0.0;
    for _ in 0..100 {
        let w = h.apply(&v);
        let norm = w.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        estimate = norm;
        v = w / norm;
    }
    estimate
}

/// Ratio of the finite-difference Hessian's deviation from the analytic one
/// to the gradient norm at `x` — the model-error coefficient the outer-loop
/// analysis assumes is bounded.
pub fn hessian_discrepancy_ratio(problem: &ProblemDefinition, x: &DVector<f64>) -> Result<f64> {
    let g_norm = problem.gradient(x).norm();
    if g_norm == 0.0 {
        return Err(Error::InvalidParam(
            "gradient vanishes; the discrepancy ratio is undefined there".into(),
        ));
    }
    let exact = problem.hessian(x).dense_realization();
    let fd = hessian_at(problem, x, HessianMode::FiniteDifference)?.dense_realization();
    let diff = SymmetricOperator::from_dense(fd - exact)?;
    let eig = symmetric_eigendecompose(&diff)?;
    Ok(eig.spectral_radius() / g_norm)
}

/// Minimize `problem` from `x0` by the trust-region method.
///
/// Accept the trial step when `ρ > ρ'`; shrink the radius to `Δ/4` when
/// `ρ < ¼`, expand to `min(2Δ, Δ̄)` when `ρ > ¾` **and** the step reached
/// the boundary, and keep it otherwise. A non-finite objective or gradient
/// ends the run with [`TrStatus::NonFiniteAbort`] and the record so far.
pub fn tr_minimize(
    problem: &ProblemDefinition,
    x0: &DVector<f64>,
    config: &TrConfig,
) -> Result<TrRunRecord> {
    config.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            context: "trust-region initial point",
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let mut x = x0.clone();
    let mut delta = config.delta0;
    let mut iterations = Vec::new();
    let mut status = TrStatus::MaxIterations;
    for k in 0..config.max_outer {
        let f = problem.value(&x);
        let g = problem.gradient(&x);
        let grad_norm = g.norm();
        if !f.is_finite() || !grad_norm.is_finite() {
            status = TrStatus::NonFiniteAbort;
            break;
        }
        if grad_norm <= config.grad_tol {
            status = TrStatus::GradientBelowTolerance;
            break;
        }
        let h = hessian_at(problem, &x, config.hessian_mode)?;
        let b = -&g;
        let (step, hit_boundary, inner_termination, inner_iterations) = match config.solver {
            SubproblemSolver::TruncatedCg { kappa, theta } => {
                let trace = tcg(&h, &b, &TcgParams::truncated(kappa, theta, delta))?;
                (
                    trace.output().clone(),
                    trace.termination.on_boundary(),
                    trace.termination.as_str().to_string(),
                    trace.final_n(),
                )
            }
            SubproblemSolver::Exact => {
                let sol = solve_trs_exact(&h, &b, delta)?;
                let label = if sol.on_boundary {
                    "exact_boundary"
                } else {
                    "exact_interior"
                };
                (sol.step, sol.on_boundary, label.to_string(), 0)
            }
        };
        let step_norm = step.norm();
        let model_decrease = b.dot(&step) - 0.5 * h.quad(&step, &step);
        let trial = &x + &step;
        let f_trial = problem.value(&trial);
        let rho = if model_decrease.abs() <= 1e-15 * f.abs() {
            1.0
        } else if f_trial.is_finite() {
            (f - f_trial) / model_decrease
        } else {
            f64::NEG_INFINITY
        };
        let accepted = rho > config.rho_accept;
        iterations.push(TrIteration {
            k,
            x: x.clone(),
            f,
            grad_norm,
            delta,
            step,
            step_norm,
            f_trial,
            model_decrease,
            rho,
            accepted,
            hit_boundary,
            inner_termination,
            inner_iterations,
        });
        if accepted {
            x = trial;
        }
        if rho < 0.25 {
            delta *= 0.25;
        } else if rho > 0.75 && hit_boundary {
            delta = (2.0 * delta).min(config.delta_max);
        }
        if delta < 1e-16 * x.norm().max(1.0) {
            status = TrStatus::RadiusCollapse;
            break;
        }
    }
    let final_f = problem.value(&x);
    let final_grad_norm = problem.gradient(&x).norm();
    if status == TrStatus::MaxIterations && final_grad_norm <= config.grad_tol {
        // Budget ended exactly at a point that already satisfies the test.
        status = TrStatus::GradientBelowTolerance;
    }
    Ok(TrRunRecord {
        config: config.clone(),
        iterations,
        status,
        final_x: x,
        final_f,
        final_grad_norm,
    })
}

/// Decrease/step/stationarity diagnostics of a finished run.
///
/// Serializes to JSON with exactly the four scalar keys `c0_min`,
/// `c1_max_tail`, `c2_max_tail`, `order_estimate`; the per-iteration
/// vectors stay in-process.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// Smallest ratio of the model decrease to the canonical decrease
    /// `‖g‖ min(Δ, ‖g‖³/|⟨g, Hg⟩|)` over the whole run; the subproblem
    /// solvers guarantee at least ½.
    pub c0_min: f64,
    /// Per-iteration `‖s_k‖/‖g_k‖`.
    #[serde(skip)]
    pub c1_estimates: Vec<f64>,
    /// Per-iteration `‖∇m_k(s_k)‖/‖g_k‖^{1+θ}` with `∇m(s) = g + Hs`.
    #[serde(skip)]
    pub c2_estimates: Vec<f64>,
    /// Per accepted iteration, the slack of the decrease inequality
    /// `f(x_k) − f(x_{k+1}) ≥ (c₀ρ'/c_r)·min(1, 1/(c₁λ♯))·‖g_k‖·‖s_k‖`
    /// with `c₀ = ½`, `c_r = 1`, `c₁` the measured step ratio maximum, and
    /// `λ♯` the measured Hessian-norm maximum plus 1e-6.
    #[serde(skip)]
    pub strong_decrease_margins: Vec<f64>,
    /// Largest step ratio over the tail of the run.
    pub c1_max_tail: f64,
    /// Largest stationarity ratio over the tail of the run.
    pub c2_max_tail: f64,
    /// Log-slope convergence order of the gradient norms (NaN when there is
    /// not enough usable data).
    pub order_estimate: f64,
}

/// Evaluate the decrease/step/stationarity conditions on a run record.
///
/// `theta` is the residual exponent the stationarity ratio is measured
/// against, and `tail_fraction ∈ (0, 1]` selects the trailing share of the
/// iterations over which the step and stationarity ratios are maximized
/// (and of the gradient pairs fed to the order fit, floored at
/// `100·grad_tol`).
pub fn evaluate_conditions(
    record: &TrRunRecord,
    problem: &ProblemDefinition,
    theta: f64,
    tail_fraction: f64,
) -> Result<ConditionReport> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "stationarity exponent must lie in (0, 1], got {theta}"
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let rows = &record.iterations;
    if rows.is_empty() {
        return Err(Error::ContractViolation(
            "run recorded no iterations to evaluate".into(),
        ));
    }
    let mut c0_min = f64::INFINITY;
    let mut c1_estimates = Vec::with_capacity(rows.len());
    let mut c2_estimates = Vec::with_capacity(rows.len());
    let mut hessian_norm_max = 0.0f64;
    for row in rows {
        let g = problem.gradient(&row.x);
        let h = hessian_at(problem, &row.x, record.config.hessian_mode)?;
        let gn = g.norm();
        let ghg = h.quad(&g, &g);
        let cap = if ghg == 0.0 {
            row.delta
        } else {
            row.delta.min(gn.powi(3) / ghg.abs())
        };
        c0_min = c0_min.min(row.model_decrease / (gn * cap));
        let model_grad = &g + h.apply(&row.step);
        c1_estimates.push(row.step_norm / gn);
        c2_estimates.push(model_grad.norm() / gn.powf(1.0 + theta));
        hessian_norm_max = hessian_norm_max.max(operator_norm_power(&h));
    }
    let c1_run_max = c1_estimates.iter().copied().fold(0.0f64, f64::max);
    let lambda_sharp = hessian_norm_max + 1e-6;
    let decrease_coeff =
        (0.5 * record.config.rho_accept) * (1.0f64).min(1.0 / (c1_run_max * lambda_sharp));
    let strong_decrease_margins: Vec<f64> = rows
        .iter()
        .filter(|row| row.accepted)
        .map(|row| (row.f - row.f_trial) - decrease_coeff * row.grad_norm * row.step_norm)
        .collect();
    let keep = ((tail_fraction * rows.len() as f64).ceil() as usize).clamp(1, rows.len());
    let tail_start = rows.len() - keep;
    let c1_max_tail = c1_estimates[tail_start..]
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let c2_max_tail = c2_estimates[tail_start..]
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let norms = record.iterate_gradient_norms();
    let order_estimate = estimate_order(&norms, tail_fraction, 100.0 * record.config.grad_tol);
    Ok(ConditionReport {
        c0_min,
        c1_estimates,
        c2_estimates,
        strong_decrease_margins,
        c1_max_tail,
        c2_max_tail,
        order_estimate,
    })
}

/// Estimate the convergence order of a decreasing positive sequence as the
/// least-squares slope of `ln g_{k+1}` against `ln g_k`, over the trailing
/// `tail_fraction` of the pairs whose first entry exceeds `floor`.
///
/// Returns NaN when fewer than four usable pairs remain.
pub fn estimate_order(grad_norms: &[f64], tail_fraction: f64, floor: f64) -> f64 {
    let mut pairs = Vec::new();
    for w in grad_norms.windows(2) {
        let (gk, gk1) = (w[0], w[1]);
        if gk.is_finite() && gk > floor && gk1.is_finite() && gk1 > 0.0 {
            pairs.push((gk.ln(), gk1.ln()));
        }
    }
    if pairs.len() < 4 {
        return f64::NAN;
    }
    let keep = ((tail_fraction * pairs.len() as f64).ceil() as usize).clamp(4, pairs.len());
    let tail = &pairs[pairs.len() - keep..];
    let n = tail.len() as f64;
    let mean_x = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in tail {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= 1e-24 {
        return f64::NAN;
    }
    sxy / sxx
}

/// One restart of the capture experiment.
#[derive(Debug, Clone)]
pub struct CaptureOutcome {
    pub start: DVector<f64>,
    pub converged: bool,
    /// Largest distance of any iterate (including the final one) from the
    /// reference point.
    pub max_distance: f64,
    pub stayed_within: bool,
    pub final_grad_norm: f64,
    /// Whether the first attempted step hit the trust-region boundary.
    pub first_step_boundary: bool,
    pub boundary_steps: usize,
    pub accepted_steps: usize,
    /// Largest `‖s‖/‖g‖` over the run.
    pub c1_max: f64,
}

/// Aggregate of a capture experiment.
#[derive(Debug, Clone)]
pub struct CaptureReport {
    pub outcomes: Vec<CaptureOutcome>,
    /// Trials that both converged and stayed within the cap.
    pub captured: usize,
    pub trials: usize,
    /// Fraction of trials whose first attempted step was a boundary step.
    pub first_step_boundary_fraction: f64,
    /// Fraction of accepted steps (across all trials) on the boundary.
    pub boundary_step_fraction: f64,
    pub c1_max: f64,
}

impl CaptureReport {
    /// Capture rate: converged-and-stayed trials over all trials.
    pub fn capture_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.captured as f64 / self.trials as f64
        }
    }

    /// Write one row per trial.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "trial,converged,stayed_within,max_distance,final_grad_norm,first_step_boundary,boundary_steps,accepted_steps,c1_max"
        )?;
        for (t, o) in self.outcomes.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t,
                o.converged,
                o.stayed_within,
                fmt_f64(o.max_distance),
                fmt_f64(o.final_grad_norm),
                o.first_step_boundary,
                o.boundary_steps,
                o.accepted_steps,
                fmt_f64(o.c1_max),
            )?;
        }
        Ok(())
    }
}

/// Restart the method `trials` times from uniformly random directions at
/// exactly `distance` from `x_star` and report whether every run stays
/// within `radius_cap` of it and converges. `distance = 0` starts every
/// trial on the reference point itself.
pub fn capture_experiment<R: Rng>(
    problem: &ProblemDefinition,
    x_star: &DVector<f64>,
    distance: f64,
    radius_cap: f64,
    config: &TrConfig,
    trials: usize,
    rng: &mut R,
) -> Result<CaptureReport> {
    if x_star.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            context: "capture reference point",
            expected: problem.dim(),
            got: x_star.len(),
        });
    }
    if !(distance >= 0.0 && radius_cap >= distance) {
        return Err(Error::InvalidParam(format!(
            "capture needs 0 ≤ distance ≤ radius cap, got {distance} and {radius_cap}"
        )));
    }
    let n = problem.dim();
    let mut outcomes = Vec::with_capacity(trials);
    let mut boundary_total = 0usize;
    let mut accepted_total = 0usize;
    let mut first_boundary_total = 0usize;
    let mut c1_max = 0.0f64;
    for _ in 0..trials {
        let u = loop {
            let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
            let norm = u.norm();
            if norm > 1e-3 {
                break u / norm;
            }
        };
        let start = x_star + u * distance;
        let record = tr_minimize(problem, &start, config)?;
        let mut max_distance = (&start - x_star).norm();
        for row in &record.iterations {
            max_distance = max_distance.max((&row.x - x_star).norm());
        }
        max_distance = max_distance.max((&record.final_x - x_star).norm());
        let first_step_boundary = record
            .iterations
            .first()
            .is_some_and(|r| r.hit_boundary);
        let boundary_steps = record
            .iterations
            .iter()
            .filter(|r| r.accepted && r.hit_boundary)
            .count();
        let accepted_steps = record.iterations.iter().filter(|r| r.accepted).count();
        let trial_c1 = record
            .iterations
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.step_norm / r.grad_norm));
        boundary_total += boundary_steps;
        accepted_total += accepted_steps;
        first_boundary_total += usize::from(first_step_boundary);
        c1_max = c1_max.max(trial_c1);
        outcomes.push(CaptureOutcome {
            start,
            converged: record.status == TrStatus::GradientBelowTolerance,
            max_distance,
            stayed_within: max_distance <= radius_cap,
            final_grad_norm: record.final_grad_norm,
            first_step_boundary,
            boundary_steps,
            accepted_steps,
            c1_max: trial_c1,
        });
    }
    let captured = outcomes
        .iter()
        .filter(|o| o.converged && o.stayed_within)
        .count();
    Ok(CaptureReport {
        outcomes,
        captured,
        trials,
        first_step_boundary_fraction: if trials == 0 {
            0.0
        } else {
            first_boundary_total as f64 / trials as f64
        },
        boundary_step_fraction: if accepted_total == 0 {
            0.0
        } else {
            boundary_total as f64 / accepted_total as f64
        },
        c1_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SpectralMeasure;
    use crate::problems::{problem_diagonal_quadratic, problem_sine_lsq, sine_lsq_solution_point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn convex_quadratic() -> ProblemDefinition {
        let measure =
            SpectralMeasure::new(vec![4.0, 2.5, 1.0, 0.3], vec![1.0, -0.5, 2.0, 0.7]).unwrap();
        problem_diagonal_quadratic(&measure)
    }

    #[test]
    fn exact_solver_minimizes_a_convex_quadratic_in_one_step() {
        let problem = convex_quadratic();
        let mut config = TrConfig::exact();
        config.delta0 = 50.0;
        config.delta_max = 50.0;
        config.grad_tol = 1e-12;
        let x0 = DVector::zeros(4);
        let record = tr_minimize(&problem, &x0, &config).unwrap();
        assert_eq!(record.status, TrStatus::GradientBelowTolerance);
        assert_eq!(record.iterations.len(), 1);
        let row = &record.iterations[0];
        assert!(row.accepted);
        assert_eq!(row.rho, 1.0); // quadratic: actual equals predicted
        assert!(record.final_grad_norm <= 1e-12);
    }

    #[test]
    fn truncated_runs_converge_on_the_sine_problem() {
        let n = 10;
        let problem = problem_sine_lsq(n);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.5..1.5f64));
        // Deep tolerance so the trailing window of accepted steps sits in the
        // superlinear regime rather than the initial transient.
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.grad_tol = 1e-13;
        config.max_outer = 80;
        let record = tr_minimize(&problem, &x0, &config).unwrap();
        assert_eq!(record.status, TrStatus::GradientBelowTolerance);
        assert!(record.final_grad_norm <= 1e-13);
        assert!(record.final_f <= 1e-20);
        let report = evaluate_conditions(&record, &problem, 0.5, 0.5).unwrap();
        assert!(report.c0_min >= 0.5 - 1e-9, "c0_min = {}", report.c0_min);
        assert!(
            report.order_estimate >= 1.2,
            "order = {}",
            report.order_estimate
        );
        assert!(report.c1_max_tail.is_finite() && report.c1_max_tail > 0.0);
        assert!(report.c2_max_tail.is_finite());
        // Decrease inequality satisfied on every accepted step.
        assert!(report
            .strong_decrease_margins
            .iter()
            .all(|&m| m >= -1e-12));
        // Acceptance ratios approach 1 near convergence.
        let accepted_rhos: Vec<f64> = record
            .iterations
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.rho)
            .collect();
        assert!(accepted_rhos.iter().rev().take(5).all(|&rho| rho >= 0.9));
    }

    #[test]
    fn radius_updates_follow_the_stated_rules() {
        let n = 8;
        let problem = problem_sine_lsq(n);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x0 = DVector::from_fn(2 * n, |_, _| rng.random_range(-3.0..3.0f64));
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.delta0 = 0.05;
        config.delta_max = 0.4;
        config.max_outer = 60;
        let record = tr_minimize(&problem, &x0, &config).unwrap();
        let rows = &record.iterations;
        let mut expansions = 0;
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let expected = if a.rho < 0.25 {
                a.delta * 0.25
            } else if a.rho > 0.75 && a.hit_boundary {
                (2.0 * a.delta).min(config.delta_max)
            } else {
                a.delta
            };
            assert_eq!(b.delta, expected, "radius rule broken at k = {}", a.k);
            if b.delta > a.delta {
                expansions += 1;
            }
            if !a.accepted {
                assert_eq!(a.x, b.x, "rejected step must not move the iterate");
            }
        }
        assert!(expansions > 0, "expected at least one radius expansion");
        assert!(rows.iter().all(|r| r.step_norm <= r.delta * (1.0 + 1e-12)));
    }

    #[test]
    fn cauchy_floor_holds_on_the_quadratic() {
        let problem = convex_quadratic();
        let mut config = TrConfig::truncated(0.5, 1.0);
        config.delta0 = 0.2; // force boundary activity early on
        config.delta_max = 100.0;
        config.grad_tol = 1e-12;
        let x0 = DVector::from_column_slice(&[3.0, -2.0, 1.0, 4.0]);
        let record = tr_minimize(&problem, &x0, &config).unwrap();
        assert_eq!(record.status, TrStatus::GradientBelowTolerance);
        let report = evaluate_conditions(&record, &problem, 1.0, 1.0).unwrap();
        assert!(report.c0_min >= 0.5 - 1e-9, "c0_min = {}", report.c0_min);
    }

    #[test]
    fn order_estimator_recovers_known_rates() {
        let linear: Vec<f64> = (0..20).map(|k| 2.0f64.powi(-k)).collect();
        assert!((estimate_order(&linear, 1.0, 0.0) - 1.0).abs() <= 1e-12);
        let quadratic: Vec<f64> = (0..7).map(|k| 2.0f64.powf(-(2.0f64.powi(k)))).collect();
        assert!((estimate_order(&quadratic, 1.0, 0.0) - 2.0).abs() <= 1e-12);
        // A leading entry at the floor is excluded from the fit.
        let mut noisy = vec![1e-300];
        noisy.extend_from_slice(&linear);
        assert!((estimate_order(&noisy, 1.0, 1e-200) - 1.0).abs() <= 1e-12);
        // Too little data is reported as unavailable rather than guessed.
        assert!(estimate_order(&[1.0, 0.5, 0.25, 0.125], 1.0, 0.0).is_nan());
        assert!(estimate_order(&[1.0, 0.0, 0.5, 0.25, 0.125, 0.0625], 1.0, 0.0).is_nan());
    }

    #[test]
    fn finite_difference_hessian_reaches_the_same_solution() {
        let n = 3;
        let problem = problem_sine_lsq(n);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0f64));
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.grad_tol = 1e-8;
        let analytic = tr_minimize(&problem, &x0, &config).unwrap();
        config.hessian_mode = HessianMode::FiniteDifference;
        let fd = tr_minimize(&problem, &x0, &config).unwrap();
        assert_eq!(analytic.status, TrStatus::GradientBelowTolerance);
        assert_eq!(fd.status, TrStatus::GradientBelowTolerance);
        assert!(analytic.final_f <= 1e-16 && fd.final_f <= 1e-16);
        // The finite-difference model error is tiny relative to the gradient.
        let ratio = hessian_discrepancy_ratio(&problem, &x0).unwrap();
        assert!(ratio <= 1e-4, "discrepancy ratio {ratio}");
    }

    #[test]
    fn non_finite_values_abort_with_the_record_so_far() {
        let problem = ProblemDefinition::new(
            "exp-overflow",
            1,
            |x: &DVector<f64>| x[0].exp(),
            |x: &DVector<f64>| DVector::from_column_slice(&[x[0].exp()]),
            |x: &DVector<f64>| SymmetricOperator::from_diagonal(&[x[0].exp()]),
        );
        let config = TrConfig::truncated(0.5, 1.0);
        let record = tr_minimize(&problem, &DVector::from_column_slice(&[800.0]), &config).unwrap();
        assert_eq!(record.status, TrStatus::NonFiniteAbort);
        assert!(record.iterations.is_empty());
    }

    #[test]
    fn capture_runs_stay_near_the_reference_solution() {
        let n = 4;
        let problem = problem_sine_lsq(n);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x_pos = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0f64));
        let x_star = sine_lsq_solution_point(&x_pos);
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.grad_tol = 1e-10;
        let report =
            capture_experiment(&problem, &x_star, 1e-2, 1e-1, &config, 5, &mut rng).unwrap();
        assert_eq!(report.trials, 5);
        assert_eq!(report.captured, 5, "all restarts should be captured");
        assert_eq!(report.capture_rate(), 1.0);
        assert!(report.c1_max.is_finite() && report.c1_max > 0.0);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("trial,converged,"));
    }

    #[test]
    fn capture_from_the_solution_itself_takes_no_steps() {
        let n = 3;
        let problem = problem_sine_lsq(n);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x_star = sine_lsq_solution_point(&DVector::from_column_slice(&[0.1, -0.6, 1.9]));
        let config = TrConfig::truncated(0.1, 0.5);
        let report =
            capture_experiment(&problem, &x_star, 0.0, 0.1, &config, 3, &mut rng).unwrap();
        assert_eq!(report.captured, 3);
        assert!(report.outcomes.iter().all(|o| o.accepted_steps == 0));
        assert_eq!(report.boundary_step_fraction, 0.0);
    }

    #[test]
    fn run_record_csv_has_the_documented_shape() {
        let problem = convex_quadratic();
        let mut config = TrConfig::truncated(0.5, 1.0);
        config.delta0 = 0.1;
        config.grad_tol = 1e-10;
        let record = tr_minimize(&problem, &DVector::zeros(4), &config).unwrap();
        let mut csv = Vec::new();
        record.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,grad_norm,f,delta,rho,step_norm,accepted,termination"
        );
        let data: Vec<&str> = lines.collect();
        assert_eq!(data.len(), record.iterations.len());
        for line in data {
            assert_eq!(line.split(',').count(), 8);
        }
    }

    #[test]
    fn condition_report_serializes_to_the_four_documented_keys() {
        let problem = convex_quadratic();
        let mut config = TrConfig::truncated(0.5, 1.0);
        config.grad_tol = 1e-10;
        let record = tr_minimize(&problem, &DVector::zeros(4), &config).unwrap();
        let report = evaluate_conditions(&record, &problem, 1.0, 0.5).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["c0_min", "c1_max_tail", "c2_max_tail", "order_estimate"]
        );
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let defaults = TrConfig::truncated(0.1, 0.5);
        assert_eq!(defaults.delta0, defaults.delta_max / 8.0);
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.rho_accept = 0.3;
        assert!(config.validate().is_err());
        let mut config = TrConfig::exact();
        config.delta_max = 0.5 * config.delta0;
        assert!(config.validate().is_err());
        let mut config = TrConfig::truncated(0.1, 0.5);
        config.delta0 = 0.0;
        assert!(config.validate().is_err());
        config = TrConfig::truncated(0.1, 0.5);
        config.max_outer = 0;
        assert!(config.validate().is_err());
    }
}
