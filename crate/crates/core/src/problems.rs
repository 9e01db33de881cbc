//! Smooth benchmark objectives with analytic derivatives and known
//! structure: a sine least-squares problem (gradient-dominated, nonconvex),
//! a two-parameter family with a degenerate valley, and diagonal quadratics
//! built from a spectral measure.
//!
//! Each problem ships value/gradient/Hessian closures, an optional
//! parametrization of its solution set, and
//! [`ProblemDefinition::check_derivatives`], which validates the analytic
//! derivatives against central finite differences — the oracle every other
//! use of the problem rests on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::measure::SpectralMeasure;
use crate::operator::{symmetric_eigendecompose, SymmetricOperator};
use crate::{Error, Result};

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessianFn = dyn Fn(&DVector<f64>) -> SymmetricOperator + Send + Sync;
type SolutionFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A twice-differentiable objective with analytic derivatives.
#[derive(Clone)]
pub struct ProblemDefinition {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    hessian: Arc<HessianFn>,
    /// Gradient-dominance constant `μ` with `‖∇f‖² ≥ 2μ(f − f*)`, when known.
    pl_constant: Option<f64>,
    /// Parametrization of the solution set: parameter dimension and the map
    /// from parameters to minimizers.
    solution_map: Option<(usize, Arc<SolutionFn>)>,
    /// Direction along which the objective is unbounded below, when one is
    /// known.
    unbounded_direction: Option<DVector<f64>>,
}

impl fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("pl_constant", &self.pl_constant)
            .field("parametrized_solutions", &self.solution_map.is_some())
            .field("unbounded", &self.unbounded_direction.is_some())
            .finish()
    }
}

impl ProblemDefinition {
    /// Assemble a problem from its dimension and derivative closures.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hessian: impl Fn(&DVector<f64>) -> SymmetricOperator + Send + Sync + 'static,
    ) -> Self {
        ProblemDefinition {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            pl_constant: None,
            solution_map: None,
            unbounded_direction: None,
        }
    }

    /// Attach a known gradient-dominance constant.
    pub fn with_pl_constant(mut self, mu: f64) -> Self {
        self.pl_constant = Some(mu);
        self
    }

    /// Attach a parametrization of the solution set.
    pub fn with_solution_map(
        mut self,
        param_dim: usize,
        map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.solution_map = Some((param_dim, Arc::new(map)));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> SymmetricOperator {
        (self.hessian)(x)
    }

    /// Known gradient-dominance constant, if any.
    pub fn pl_constant(&self) -> Option<f64> {
        self.pl_constant
    }

    /// Parameter dimension of the solution-set map, if one is attached.
    pub fn solution_param_dim(&self) -> Option<usize> {
        self.solution_map.as_ref().map(|(d, _)| *d)
    }

    /// Point of the solution set for the given parameters.
    pub fn solution_point(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        let (pdim, map) = self.solution_map.as_ref().ok_or_else(|| {
            Error::InvalidParam(format!(
                "problem `{}` has no solution-set parametrization",
                self.name
            ))
        })?;
        if params.len() != *pdim {
            return Err(Error::DimensionMismatch {
                context: "solution-set parameters",
                expected: *pdim,
                got: params.len(),
            });
        }
        Ok(map(params))
    }

    /// Known descent ray of an objective unbounded below, if any.
    pub fn unbounded_direction(&self) -> Option<&DVector<f64>> {
        self.unbounded_direction.as_ref()
    }

    /// Validate the analytic gradient (relative error ≤ 1e-6) and Hessian
    /// (≤ 1e-5) against central finite differences at `x`.
    pub fn check_derivatives(&self, x: &DVector<f64>) -> Result<()> {
        let n = self.dim;
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                context: "derivative check point",
                expected: n,
                got: x.len(),
            });
        }
        let g = self.gradient(x);
        let mut fd_g = DVector::zeros(n);
        for i in 0..n {
            let h = 1e-5 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd_g[i] = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
        }
        let g_scale = g.norm().max(1.0);
        let g_err = (&fd_g - &g).norm();
        if g_err > 1e-6 * g_scale {
            return Err(Error::ContractViolation(format!(
                "analytic gradient of `{}` disagrees with finite differences: \
                 ‖Δ‖ = {g_err:.3e} at scale {g_scale:.3e}",
                self.name
            )));
        }
        let hess = self.hessian(x);
        let mut h_scale = 1.0f64;
        let mut h_err = 0.0f64;
        for j in 0..n {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd_col = (self.gradient(&xp) - self.gradient(&xm)) / (2.0 * h);
            let mut ej = DVector::zeros(n);
            ej[j] = 1.0;
            let col = hess.apply(&ej);
            h_err = h_err.max((fd_col - &col).norm());
            h_scale = h_scale.max(col.norm());
        }
        if h_err > 1e-5 * h_scale {
            return Err(Error::ContractViolation(format!(
                "analytic second derivatives of `{}` disagree with finite \
                 differences: ‖Δ‖ = {h_err:.3e} at scale {h_scale:.3e}",
                self.name
            )));
        }
        Ok(())
    }
}

/// `f(x, y) = ½ ‖y − sin x‖²` over stacked variables `(x, y) ∈ R^{2n}`.
///
/// The objective is gradient dominated with constant 1 (`‖∇f‖² ≥ 2 f`)
/// and minimizer set `{y = sin x}` (parametrized by `x`), yet its Hessian
/// picks up a negative eigenvalue exactly where
/// `sin(x_i) (y_i − sin x_i) < 0` for some index, so runs pass through
/// genuinely indefinite territory.
pub fn problem_sine_lsq(n: usize) -> ProblemDefinition {
    let dim = 2 * n;
    let value = move |z: &DVector<f64>| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let e = z[n + i] - z[i].sin();
            total += e * e;
        }
        0.5 * total
    };
    let gradient = move |z: &DVector<f64>| -> DVector<f64> {
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            let e = z[n + i] - z[i].sin();
            g[i] = -z[i].cos() * e;
            g[n + i] = e;
        }
        g
    };
    let hessian = move |z: &DVector<f64>| -> SymmetricOperator {
        let mut diag_xx = DVector::zeros(n);
        let mut cosines = DVector::zeros(n);
        for i in 0..n {
            let (s, c) = z[i].sin_cos();
            let e = z[n + i] - s;
            diag_xx[i] = s * e + c * c;
            cosines[i] = c;
        }
        SymmetricOperator::from_apply(2 * n, move |p: &DVector<f64>| {
            let mut out = DVector::zeros(2 * n);
            for i in 0..n {
                out[i] = diag_xx[i] * p[i] - cosines[i] * p[n + i];
                out[n + i] = -cosines[i] * p[i] + p[n + i];
            }
            out
        })
    };
    ProblemDefinition {
        name: format!("sine-lsq:n={n}"),
        dim,
        value: Arc::new(value),
        gradient: Arc::new(gradient),
        hessian: Arc::new(hessian),
        pl_constant: Some(1.0),
        solution_map: Some((n, Arc::new(|p: &DVector<f64>| sine_lsq_solution_point(p)))),
        unbounded_direction: None,
    }
}

/// Zero-residual point of [`problem_sine_lsq`] sitting above the given `x`
/// positions: `(x, sin x)`.
pub fn sine_lsq_solution_point(x_positions: &DVector<f64>) -> DVector<f64> {
    let n = x_positions.len();
    let mut z = DVector::zeros(2 * n);
    for i in 0..n {
        z[i] = x_positions[i];
        z[n + i] = x_positions[i].sin();
    }
    z
}

/// `f(x, y) = (3/16) y² + 4 x² y²` — a flat valley `{y = 0}` of minimizers
/// approached along the curve [`remark_counterexample_path`], on which the
/// Newton step length `‖H⁻¹∇f‖` blows up like `1/(6ε)` even though the
/// gradient vanishes.
///
/// Gradient dominated with constant `3/8`:
/// `‖∇f‖² ≥ y²(3/8 + 8x²)² ≥ (3/4)(3/16 + 4x²)y² = 2·(3/8)·f`.
pub fn problem_remark_counterexample() -> ProblemDefinition {
    let value = |z: &DVector<f64>| -> f64 {
        let (x, y) = (z[0], z[1]);
        0.1875 * y * y + 4.0 * x * x * y * y
    };
    let gradient = |z: &DVector<f64>| -> DVector<f64> {
        let (x, y) = (z[0], z[1]);
        DVector::from_column_slice(&[8.0 * x * y * y, 0.375 * y + 8.0 * x * x * y])
    };
    let hessian = |z: &DVector<f64>| -> SymmetricOperator {
        let (x, y) = (z[0], z[1]);
        SymmetricOperator::from_dense(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[8.0 * y * y, 16.0 * x * y, 16.0 * x * y, 0.375 + 8.0 * x * x],
        ))
        .expect("2x2 closed form is symmetric")
    };
    ProblemDefinition {
        name: "remark2d".into(),
        dim: 2,
        value: Arc::new(value),
        gradient: Arc::new(gradient),
        hessian: Arc::new(hessian),
        pl_constant: Some(0.375),
        solution_map: Some((
            1,
            Arc::new(|p: &DVector<f64>| DVector::from_column_slice(&[p[0], 0.0])),
        )),
        unbounded_direction: None,
    }
}

/// The approach curve `c(ε) = (√(1−ε)/8, √ε)` of the valley problem,
/// defined for `ε ∈ (0, 1]`.
pub fn remark_counterexample_path(eps: f64) -> Result<DVector<f64>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "path parameter must lie in (0, 1], got {eps}"
        )));
    }
    Ok(DVector::from_column_slice(&[
        (1.0 - eps).sqrt() / 8.0,
        eps.sqrt(),
    ]))
}

/// `f(v) = ½⟨v, A v⟩ − ⟨b, v⟩` for the diagonal system of a spectral
/// measure. When the measure has a negative atom — or a zero atom carrying
/// weight — the objective is unbounded below and the witness direction is
/// recorded; when it is positive definite, the unique minimizer and the
/// dominance constant (the smallest eigenvalue) are attached.
pub fn problem_diagonal_quadratic(measure: &SpectralMeasure) -> ProblemDefinition {
    let (op, b) = measure.dense_system();
    let dim = measure.len();
    let lambdas = measure.lambdas().to_vec();
    let unbounded_direction = {
        let mut witness: Option<DVector<f64>> = None;
        for (i, &l) in lambdas.iter().enumerate() {
            if l < 0.0 {
                let mut e = DVector::zeros(dim);
                e[i] = 1.0;
                witness = Some(e);
                break;
            }
            if l == 0.0 && b[i] != 0.0 {
                let mut e = DVector::zeros(dim);
                e[i] = b[i].signum();
                witness = Some(e);
                break;
            }
        }
        witness
    };
    let lambda_min = measure.lambda_min();
    let (pl_constant, solution_map) = if lambda_min > 0.0 {
        let solution = DVector::from_fn(dim, |i, _| b[i] / lambdas[i]);
        let map: Arc<SolutionFn> = Arc::new(move |_: &DVector<f64>| solution.clone());
        (Some(lambda_min), Some((0, map)))
    } else {
        (None, None)
    };
    let op_value = op.clone();
    let b_value = b.clone();
    let value = move |v: &DVector<f64>| -> f64 { 0.5 * op_value.quad(v, v) - b_value.dot(v) };
    let op_grad = op.clone();
    let b_grad = b.clone();
    let gradient = move |v: &DVector<f64>| -> DVector<f64> { op_grad.apply(v) - &b_grad };
    let hessian = move |_: &DVector<f64>| -> SymmetricOperator { op.clone() };
    ProblemDefinition {
        name: format!("diag:d={dim}"),
        dim,
        value: Arc::new(value),
        gradient: Arc::new(gradient),
        hessian: Arc::new(hessian),
        pl_constant,
        solution_map,
        unbounded_direction,
    }
}

/// How much of a gradient escapes the dominant Hessian eigenspace.
#[derive(Debug, Clone)]
pub struct GradientAlignment {
    /// `‖(I − P)∇f(x)‖` for the top-`d` spectral projector `P`.
    pub residual: f64,
    pub grad_norm: f64,
    /// Smallest retained eigenvalue.
    pub lambda_d: f64,
    /// Magnitude of the largest discarded eigenvalue (zero when none).
    pub next_magnitude: f64,
    /// `λ_d / |λ_{d+1}|` (infinite when nothing is discarded).
    pub gap_ratio: f64,
}

/// Project the gradient at `x` onto the top-`d` Hessian eigenspace and
/// report the leftover mass.
///
/// Requires a definite 2:1 spectral gap — `λ_d > 0` and `λ_d ≥ 2|λ_{d+1}|`
/// — and rejects the point otherwise.
pub fn gradient_alignment(
    problem: &ProblemDefinition,
    x: &DVector<f64>,
    d: usize,
) -> Result<GradientAlignment> {
    if d == 0 || d > problem.dim() {
        return Err(Error::InvalidParam(format!(
            "projector rank must lie in 1..={}, got {d}",
            problem.dim()
        )));
    }
    let eig = symmetric_eigendecompose(&problem.hessian(x))?;
    let lambda_d = eig.eigenvalues[d - 1];
    let next_magnitude = (d..problem.dim())
        .map(|i| eig.eigenvalues[i].abs())
        .fold(0.0f64, f64::max);
    let gap_ratio = if next_magnitude == 0.0 {
        f64::INFINITY
    } else {
        lambda_d / next_magnitude
    };
    if !(lambda_d > 0.0 && gap_ratio >= 2.0) {
        return Err(Error::InvalidParam(format!(
            "no 2:1 spectral gap after the top {d} eigenvalues: \
             λ_{d} = {lambda_d:.6e}, next magnitude {next_magnitude:.6e}"
        )));
    }
    let g = problem.gradient(x);
    let mut tail_mass = 0.0;
    for i in d..problem.dim() {
        let coeff = eig.eigenvectors.column(i).dot(&g);
        tail_mass += coeff * coeff;
    }
    Ok(GradientAlignment {
        residual: tail_mass.sqrt(),
        grad_norm: g.norm(),
        lambda_d,
        next_magnitude,
        gap_ratio,
    })
}

/// Indefiniteness probe around the solution set.
#[derive(Debug, Clone)]
pub struct NegativeCurvatureSearch {
    pub distances: Vec<f64>,
    /// Whether any probed point at the given distance had a Hessian with a
    /// negative eigenvalue.
    pub found_negative: Vec<bool>,
    /// Most negative eigenvalue seen at each distance.
    pub min_eigenvalues: Vec<f64>,
    /// Probe point achieving it, per distance, when negative.
    pub witnesses: Vec<Option<DVector<f64>>>,
    pub trials_per_distance: usize,
}

/// Probe `trials` random points at each distance from the solution set
/// (centers drawn through the problem's parametrization with parameters
/// uniform in [−2, 2]) and report whether the Hessian is indefinite
/// anywhere nearby, with witness points.
pub fn hessian_has_negative_eigenvalue_near_s<R: Rng>(
    problem: &ProblemDefinition,
    distances: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<NegativeCurvatureSearch> {
    let pdim = problem.solution_param_dim().ok_or_else(|| {
        Error::InvalidParam(format!(
            "problem `{}` has no solution-set parametrization to probe around",
            problem.name()
        ))
    })?;
    let n = problem.dim();
    let mut found = Vec::with_capacity(distances.len());
    let mut minima = Vec::with_capacity(distances.len());
    let mut witnesses = Vec::with_capacity(distances.len());
    for &dist in distances {
        let mut min_eig = f64::INFINITY;
        let mut witness = None;
        for _ in 0..trials {
            let params = DVector::from_fn(pdim, |_, _| rng.random_range(-2.0..2.0f64));
            let center = problem.solution_point(&params)?;
            let mut u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
            let norm = u.norm();
            if norm == 0.0 {
                continue;
            }
            u *= dist / norm;
            let point = center + u;
            let eig = symmetric_eigendecompose(&problem.hessian(&point))?;
            let low = eig.min_eigenvalue();
            if low < min_eig {
                min_eig = low;
                if low < 0.0 {
                    witness = Some(point);
                }
            }
        }
        found.push(min_eig < 0.0);
        minima.push(min_eig);
        witnesses.push(witness);
    }
    Ok(NegativeCurvatureSearch {
        distances: distances.to_vec(),
        found_negative: found,
        min_eigenvalues: minima,
        witnesses,
        trials_per_distance: trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sine_derivatives_match_finite_differences() {
        let problem = problem_sine_lsq(5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0f64));
            problem.check_derivatives(&x).unwrap();
        }
    }

    #[test]
    fn sine_objective_is_gradient_dominated() {
        let problem = problem_sine_lsq(7);
        assert_eq!(problem.pl_constant(), Some(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let x = DVector::from_fn(14, |_, _| rng.random_range(-3.0..3.0f64));
            let f = problem.value(&x);
            let g = problem.gradient(&x);
            assert!(g.norm_squared() >= 2.0 * f - 1e-12);
        }
    }

    #[test]
    fn sine_hessian_sign_structure_follows_the_residual() {
        // Per index the Hessian decouples into 2×2 blocks with determinant
        // sin(x_i)·e_i, so one bad index makes it indefinite.
        let n = 3;
        let problem = problem_sine_lsq(n);
        let mut z = DVector::zeros(2 * n);
        for i in 0..n {
            z[i] = std::f64::consts::FRAC_PI_2;
            z[n + i] = 1.0 + 0.5; // e_i = +0.5, sin = 1 → block PD
        }
        let eig = symmetric_eigendecompose(&problem.hessian(&z)).unwrap();
        assert!(eig.min_eigenvalue() > 0.0);
        z[n] = 1.0 - 0.5; // e_0 = −0.5 → sin(x_0) e_0 < 0
        let eig = symmetric_eigendecompose(&problem.hessian(&z)).unwrap();
        assert!(eig.min_eigenvalue() < 0.0);
    }

    #[test]
    fn sine_solution_map_yields_zero_residual_critical_points() {
        let x_pos = DVector::from_column_slice(&[0.3, -1.2, 2.5]);
        let problem = problem_sine_lsq(3);
        let z = problem.solution_point(&x_pos).unwrap();
        assert_eq!(z, sine_lsq_solution_point(&x_pos));
        assert_eq!(problem.value(&z), 0.0);
        assert!(problem.gradient(&z).norm() <= 1e-15);
        assert!(problem.solution_point(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn valley_problem_matches_its_closed_forms_along_the_path() {
        let problem = problem_remark_counterexample();
        for &eps in &[1e-3, 1e-4] {
            let c = remark_counterexample_path(eps).unwrap();
            let f = problem.value(&c);
            assert!((f - (4.0 - eps) * eps / 16.0).abs() <= 1e-15 * f.max(1e-300));
            let g = problem.gradient(&c);
            let expected_g = DVector::from_column_slice(&[
                eps * (1.0 - eps).sqrt(),
                eps.sqrt() * (4.0 - eps) / 8.0,
            ]);
            assert!((&g - &expected_g).norm() <= 1e-14 * expected_g.norm());
            let h = problem.hessian(&c).dense_realization();
            let off = 2.0 * (eps * (1.0 - eps)).sqrt();
            assert!((h[(0, 0)] - 8.0 * eps).abs() <= 1e-14);
            assert!((h[(0, 1)] - off).abs() <= 1e-14);
            assert!((h[(1, 1)] - (4.0 - eps) / 8.0).abs() <= 1e-14);
            // Full second-order step: v = H⁻¹ g blows up like 1/(6ε).
            let v = h.lu().solve(&g).unwrap();
            let expected_v = DVector::from_column_slice(&[
                -(1.0 - eps).sqrt() * (4.0 - eps) / (24.0 * eps),
                eps.sqrt() * (2.0 + eps) / (3.0 * eps),
            ]);
            assert!((&v - &expected_v).norm() <= 1e-9 * expected_v.norm());
            problem.check_derivatives(&c).unwrap();
        }
        assert!(remark_counterexample_path(0.0).is_err());
        assert!(remark_counterexample_path(1.5).is_err());
    }

    #[test]
    fn valley_problem_is_gradient_dominated_with_its_stated_constant() {
        let problem = problem_remark_counterexample();
        let mu = problem.pl_constant().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0f64));
            let f = problem.value(&z);
            let g = problem.gradient(&z);
            assert!(g.norm_squared() >= 2.0 * mu * f - 1e-12);
        }
        let valley = problem
            .solution_point(&DVector::from_column_slice(&[0.7]))
            .unwrap();
        assert_eq!(problem.value(&valley), 0.0);
    }

    #[test]
    fn diagonal_quadratic_reports_structure() {
        let pd = SpectralMeasure::new(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
        let problem = problem_diagonal_quadratic(&pd);
        assert!(problem.unbounded_direction().is_none());
        assert_eq!(problem.pl_constant(), Some(1.0));
        let sol = problem.solution_point(&DVector::zeros(0)).unwrap();
        assert!(problem.gradient(&sol).norm() <= 1e-15);

        let neg = SpectralMeasure::new(vec![2.0, -1.0], vec![1.0, 0.0]).unwrap();
        let problem = problem_diagonal_quadratic(&neg);
        let dir = problem.unbounded_direction().unwrap().clone();
        // Marching along the witness drives the value down without bound.
        assert!(problem.value(&(&dir * 1e3)) < -1e5);
        assert!(problem.pl_constant().is_none());

        let null = SpectralMeasure::new(vec![2.0, 0.0], vec![1.0, 0.5]).unwrap();
        let problem = problem_diagonal_quadratic(&null);
        let dir = problem.unbounded_direction().unwrap().clone();
        assert!(problem.value(&(&dir * 1e3)) < -100.0);
        problem
            .check_derivatives(&DVector::from_column_slice(&[0.4, -0.7]))
            .unwrap();
    }

    #[test]
    fn alignment_requires_a_two_to_one_gap() {
        let measure = SpectralMeasure::new(vec![4.0, 2.0, 1e-4], vec![1.0, 0.5, 0.25]).unwrap();
        let problem = problem_diagonal_quadratic(&measure);
        // At x = 0 the gradient is −b, so the discarded mass is the last
        // weight exactly.
        let a = gradient_alignment(&problem, &DVector::zeros(3), 2).unwrap();
        assert!((a.residual - 0.25).abs() <= 1e-12);
        assert!((a.grad_norm - (1.0f64 + 0.25 + 0.0625).sqrt()).abs() <= 1e-12);
        assert!(a.gap_ratio >= 2.0);

        let tight = SpectralMeasure::new(vec![4.0, 3.0], vec![1.0, 1.0]).unwrap();
        let problem = problem_diagonal_quadratic(&tight);
        assert!(gradient_alignment(&problem, &DVector::zeros(2), 1).is_err());
        assert!(gradient_alignment(&problem, &DVector::zeros(2), 2).is_ok());
    }

    #[test]
    fn alignment_residual_is_second_order_near_the_solution_set() {
        let problem = problem_sine_lsq(1);
        for &eps in &[1e-2, 1e-3, 1e-4] {
            // Approach (0.4, sin 0.4) by lifting y, staying off S.
            let z = DVector::from_column_slice(&[0.4, 0.4f64.sin() + eps]);
            let a = gradient_alignment(&problem, &z, 1).unwrap();
            assert!(
                a.residual <= 10.0 * a.grad_norm * a.grad_norm,
                "eps = {eps}: residual {} vs grad² {}",
                a.residual,
                a.grad_norm * a.grad_norm
            );
        }
        let problem = problem_remark_counterexample();
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let c = remark_counterexample_path(eps).unwrap();
            let a = gradient_alignment(&problem, &c, 1).unwrap();
            assert!(a.residual <= 10.0 * a.grad_norm * a.grad_norm);
        }
    }

    #[test]
    fn curvature_probe_finds_indefinite_points_near_the_sine_solution_set() {
        let problem = problem_sine_lsq(100);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let probe =
            hessian_has_negative_eigenvalue_near_s(&problem, &[1e-1, 1e-2, 1e-3], 5, &mut rng)
                .unwrap();
        assert_eq!(probe.distances.len(), 3);
        assert!(probe.found_negative.iter().all(|&f| f));
        assert!(probe.min_eigenvalues.iter().all(|&m| m < 0.0));
        for w in &probe.witnesses {
            let point = w.as_ref().expect("negative eigenvalue has a witness");
            let eig = symmetric_eigendecompose(&problem.hessian(point)).unwrap();
            assert!(eig.min_eigenvalue() < 0.0);
        }
    }

    #[test]
    fn curvature_probe_reports_convex_problems_clean() {
        let measure = SpectralMeasure::new(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
        let problem = problem_diagonal_quadratic(&measure);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let probe = hessian_has_negative_eigenvalue_near_s(&problem, &[1e-1], 5, &mut rng).unwrap();
        assert!(!probe.found_negative[0]);
        assert!(probe.witnesses[0].is_none());

        let no_map = SpectralMeasure::new(vec![2.0, -1.0], vec![1.0, 0.0]).unwrap();
        let problem = problem_diagonal_quadratic(&no_map);
        assert!(hessian_has_negative_eigenvalue_near_s(&problem, &[1e-1], 2, &mut rng).is_err());
    }
}
