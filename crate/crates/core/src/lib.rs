//! Spectral toolbox for conjugate-gradient dynamics and trust-region methods.
//!
//! The crate is organized around a pipeline:
//!
//! * [`operator`] — symmetric operators and dense eigendecompositions;
//! * [`measure`] — discrete spectral measures `(λ_i, b_i)` attached to an
//!   operator/vector pair, including head/tail splits;
//! * [`jacobi`] — the monic orthogonal-polynomial family of a measure
//!   (Stieltjes recurrence, Ritz values, the residual/iterate/minimal-norm
//!   polynomials of conjugate gradients);
//! * [`sigma`] — the coupling system that expresses the polynomials of a
//!   perturbed measure through those of its head, with the associated
//!   root-displacement and iterate bounds;
//! * [`tcg`] — truncated conjugate gradients on a trust region;
//! * [`trs`] — exact trust-region subproblem solves for cross-validation;
//! * [`problems`] — smooth test problems with known solution sets;
//! * [`driver`] — the outer trust-region loop, condition measurements and
//!   capture experiments.
//!
//! All randomness is injected through explicit [`rand`] generators so that
//! every experiment is reproducible from a seed.

pub mod driver;
pub mod error;
pub mod io;
pub mod jacobi;
pub mod measure;
pub mod operator;
pub mod problems;
pub mod sigma;
pub mod tcg;
pub mod trs;

pub use driver::{
    capture_experiment, estimate_order, evaluate_conditions, hessian_discrepancy_ratio,
    tr_minimize, CaptureOutcome, CaptureReport, ConditionReport, HessianMode, SubproblemSolver,
    TrConfig, TrIteration, TrRunRecord, TrStatus,
};
pub use error::Error;
pub use jacobi::{
    eval_phi, eval_pi, eval_varsigma, ritz_values, stieltjes, JacobiRecurrence, PolyHandle,
    PolyTag,
};
pub use measure::{grade, measure_from_operator, SpectralMeasure, SplitSpectralMeasure};
pub use operator::{symmetric_eigendecompose, EigenDecomposition, SymmetricOperator};
pub use problems::{
    gradient_alignment, hessian_has_negative_eigenvalue_near_s, problem_diagonal_quadratic,
    problem_remark_counterexample, problem_sine_lsq, remark_counterexample_path,
    sine_lsq_solution_point, GradientAlignment, NegativeCurvatureSearch, ProblemDefinition,
};
pub use sigma::{
    c_bounds_report, delta_tau, iterate_comparison, max_budget, psd_contraction_check,
    root_displacement_bound, select_iteration_for_budget, sigma_system, sigma_system_with_c,
    verify_rho_identity, write_sigma_diagnostics_csv, CBoundsReport, DeltaTau, IterateComparison,
    PsdContraction, RootDisplacement, SigmaSystem,
};
pub use tcg::{cauchy_decrease_ratio, tcg, CgMode, TcgParams, TcgTrace, Termination};
pub use trs::{solve_trs_exact, TrsSolution};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
