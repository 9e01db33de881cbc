//! Coupling between the polynomials of a split measure and those of its
//! dominant head.
//!
//! For a measure split into a positive head (atoms `≥ λ_d > 0`) and a small
//! tail (atoms of magnitude `< λ_d`), the order-`n` monic polynomial of the
//! full measure can be written through head quantities alone:
//!
//! ```text
//! π̃_n = π_n − π_n(0) · Σ_j σ_j ξ_{n-1}(·; λ_j)
//! ```
//!
//! where the sum runs over tail atoms and the coefficients `σ` solve the
//! small linear system assembled in [`sigma_system`]. Everything downstream
//! of conjugate gradients follows: displacement of the residual-polynomial
//! roots is controlled by `‖σ‖₁` ([`root_displacement_bound`]), head
//! coordinates of the perturbed iterate stay near the unperturbed iterate
//! ([`iterate_comparison`]), and a residual budget `c` yields a stopping
//! index with guaranteed iterate/residual bounds ([`c_bounds_report`]).
//!
//! All norms are taken in the relevant measure's inner product; linear
//! solves use LU with one step of iterative refinement in compensated
//! arithmetic, which keeps the σ coefficients accurate even when the
//! coupling matrix is nearly rank-one (late iterations, clustered tails).

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::io::fmt_f64;
use crate::jacobi::{eval_pi, eval_varsigma, ritz_values, stieltjes, JacobiRecurrence, PolyHandle};
use crate::measure::SplitSpectralMeasure;
use crate::tcg::{tcg, TcgParams};
use crate::{Error, Result};

/// Multiplicative slack used when asserting proved inequalities
/// numerically.
const BOUND_SLACK: f64 = 1e-9;

/// The coupling system at order `n`, with the derived perturbation
/// quantities.
#[derive(Debug, Clone)]
pub struct SigmaSystem {
    pub n: usize,
    /// Residual budget the `eta`/`omega` certificates are computed for.
    pub c: f64,
    /// Coupling coefficients, one per tail atom.
    pub sigma: DVector<f64>,
    /// `‖σ‖₁`.
    pub sigma_l1: f64,
    /// Signed sum `Σ_j σ_j`; the residual polynomials satisfy
    /// `ς̃_n = (ς_n − Σ_j σ_j ξ_{n-1}^j) / (1 − s)`.
    pub s: f64,
    /// Diagonal `D_jj = ‖ξ_{n-1}^j‖² / ξ_{n-1}^j(λ_j)` (head norms).
    pub d_diag: DVector<f64>,
    /// `C_ij = ξ_{n-1}^j(λ_i)` over tail atoms.
    pub coupling: DMatrix<f64>,
    /// `w_i = ς_n(λ_i)` over tail atoms.
    pub w: DVector<f64>,
    /// Decoupled approximation `β_j = b_j² w_j / D_jj`.
    pub beta_approx: DVector<f64>,
    /// `max_{i,j} |ξ_{n-1}^j(λ_i) − 1|` over tail atoms.
    pub delta: f64,
    /// `max_i |ς_n(λ_i) − 1|` over tail atoms.
    pub tau: f64,
    /// `η = τ + (1+τ)(1+δ)² ‖B‖_F² / (λ_d c)`.
    pub eta: f64,
    /// `ω = (1+η)(1+δ) ‖B‖_F² / (λ_d c)`; bounds `‖σ‖₁` when `n` comes from
    /// [`select_iteration_for_budget`] with the same `c`.
    pub omega: f64,
    /// `‖B‖_F² = Σ_j b_j²` over the tail.
    pub tail_frobenius_sq: f64,
    pub lambda_d: f64,
    pub head_lambda_max: f64,
}

impl SigmaSystem {
    /// True when the coupling is a contraction (`‖σ‖₁ < 1`), the regime in
    /// which the displacement and iterate bounds are non-vacuous.
    pub fn contraction(&self) -> bool {
        self.sigma_l1 < 1.0
    }

    /// Factor bounding the relative gap to the decoupled approximation:
    /// `|σ_j − β_j| ≤ factor · β_j`, with
    /// `factor = τ + (1+τ)(1+δ) ‖B‖_F² / min_j D_jj`.
    pub fn decoupling_bound_factor(&self) -> f64 {
        let min_d = self.d_diag.iter().cloned().fold(f64::INFINITY, f64::min);
        self.tau + (1.0 + self.tau) * (1.0 + self.delta) * self.tail_frobenius_sq / min_d
    }
}

/// Largest admissible residual budget: `c ≤ ‖b_head‖² / λ_d`.
pub fn max_budget(split: &SplitSpectralMeasure) -> f64 {
    split.head().total_mass() / split.lambda_d()
}

fn validate_budget(split: &SplitSpectralMeasure, c: f64) -> Result<()> {
    let max_c = max_budget(split);
    if !(c.is_finite() && c > 0.0 && c <= max_c * (1.0 + 1e-12)) {
        return Err(Error::InvalidParam(format!(
            "residual budget must lie in (0, {max_c:.6e}], got {c:.6e}"
        )));
    }
    Ok(())
}

fn xi_handles<'a>(
    rec: &'a JacobiRecurrence,
    n: usize,
    points: &[f64],
) -> Result<Vec<PolyHandle<'a>>> {
    points
        .iter()
        .map(|&lambda| PolyHandle::xi(rec, n - 1, lambda))
        .collect()
}

/// Solve `m x = rhs` by LU with two refinement steps whose residuals are
/// accumulated in compensated (error-free transformation) arithmetic. This
/// recovers small-norm-error solutions even when `m` is within a few digits
/// of singular, which happens routinely for late-iteration coupling systems.
fn solve_refined(m: &DMatrix<f64>, rhs: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    let lu = m.clone().lu();
    let mut x = lu.solve(rhs).ok_or(Error::SingularSigmaSystem { n })?;
    for _ in 0..2 {
        let residual = compensated_residual(m, &x, rhs);
        match lu.solve(&residual) {
            Some(correction) if correction.iter().all(|v| v.is_finite()) => x += correction,
            _ => break,
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSigmaSystem { n });
    }
    Ok(x)
}

/// `rhs − m x` with products split by Dekker/Veltkamp multiplication and the
/// low-order halves re-accumulated, giving a residual accurate well below
/// one ulp of the cancelled sum.
fn compensated_residual(m: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let t = rhs.len();
    DVector::from_fn(t, |i, _| {
        let mut high = rhs[i];
        let mut low = 0.0;
        for j in 0..t {
            let p = -m[(i, j)] * x[j];
            let err = (-m[(i, j)]).mul_add(x[j], -p);
            let s = high + p;
            let t_err = if high.abs() >= p.abs() {
                (high - s) + p
            } else {
                (p - s) + high
            };
            high = s;
            low += err + t_err;
        }
        high + low
    })
}

/// Assemble and solve the coupling system at order `n` using the default
/// (largest admissible) residual budget.
pub fn sigma_system(split: &SplitSpectralMeasure, n: usize) -> Result<SigmaSystem> {
    sigma_system_with_c(split, n, max_budget(split))
}

/// Assemble and solve the coupling system at order `n`, computing the
/// `η`/`ω` certificates for the given residual budget `c`.
pub fn sigma_system_with_c(split: &SplitSpectralMeasure, n: usize, c: f64) -> Result<SigmaSystem> {
    let t = split.tail_len();
    if t == 0 {
        return Err(Error::InvalidSplit {
            reason: "the coupling system needs a nonempty tail".into(),
        });
    }
    validate_budget(split, c)?;
    let rec = stieltjes(split.head())?;
    if n == 0 || n > rec.grade() {
        return Err(Error::IterationOutOfRange {
            n,
            max: rec.grade(),
        });
    }
    let lambdas = split.tail_lambdas();
    let b_sq: Vec<f64> = split.tail_weights().iter().map(|b| b * b).collect();
    let xis = xi_handles(&rec, n, lambdas)?;

    let mut coupling = DMatrix::zeros(t, t);
    for (j, xi) in xis.iter().enumerate() {
        for i in 0..t {
            coupling[(i, j)] = xi.eval(lambdas[i]);
        }
    }
    let mut d_diag = DVector::zeros(t);
    for (j, xi) in xis.iter().enumerate() {
        let at_own_atom = coupling[(j, j)];
        if !(at_own_atom.is_finite() && at_own_atom > 0.0) {
            return Err(Error::ContractViolation(format!(
                "ξ_{}(λ_{j}) = {at_own_atom:.3e} is not positive",
                n - 1
            )));
        }
        d_diag[j] = xi.norm_sq() / at_own_atom;
    }
    let mut w = DVector::zeros(t);
    for i in 0..t {
        w[i] = eval_varsigma(&rec, n, lambdas[i])?;
    }

    let mut system = DMatrix::zeros(t, t);
    let mut rhs = DVector::zeros(t);
    for i in 0..t {
        for j in 0..t {
            system[(i, j)] = b_sq[i] * coupling[(i, j)];
        }
        system[(i, i)] += d_diag[i];
        rhs[i] = b_sq[i] * w[i];
    }
    let sigma = solve_refined(&system, &rhs, n)?;

    let delta = coupling
        .iter()
        .fold(0.0f64, |acc, &v| acc.max((v - 1.0).abs()));
    let tau = w.iter().fold(0.0f64, |acc, &v| acc.max((v - 1.0).abs()));
    let lambda_d = split.lambda_d();
    let fro_sq = split.tail_frobenius_sq();
    let budget_ratio = fro_sq / (lambda_d * c);
    let eta = tau + (1.0 + tau) * (1.0 + delta) * (1.0 + delta) * budget_ratio;
    let omega = (1.0 + eta) * (1.0 + delta) * budget_ratio;
    let beta_approx = DVector::from_fn(t, |j, _| b_sq[j] * w[j] / d_diag[j]);

    Ok(SigmaSystem {
        n,
        c,
        sigma_l1: sigma.iter().map(|v| v.abs()).sum(),
        s: sigma.iter().sum(),
        sigma,
        d_diag,
        coupling,
        w,
        beta_approx,
        delta,
        tau,
        eta,
        omega,
        tail_frobenius_sq: fro_sq,
        lambda_d,
        head_lambda_max: split.head().lambda_max(),
    })
}

/// Verify the polynomial identity
/// `π̃_n = π_n − π_n(0) Σ_j σ_j ξ_{n-1}^j` by evaluation.
///
/// Both sides are evaluated at all atoms of the full measure, the midpoints
/// between consecutive atoms, zero, and two points outside the spectral
/// hull (enough points to pin down a degree-`n` polynomial several times
/// over). Returns the maximum pointwise difference divided by the maximum
/// magnitude of the left-hand side over the same points.
pub fn verify_rho_identity(split: &SplitSpectralMeasure, n: usize) -> Result<f64> {
    let sys = sigma_system(split, n)?;
    let rec_h = stieltjes(split.head())?;
    let full = split.full();
    let rec_f = stieltjes(&full)?;
    if n > rec_f.grade() {
        return Err(Error::IterationOutOfRange {
            n,
            max: rec_f.grade(),
        });
    }
    let xis = xi_handles(&rec_h, n, split.tail_lambdas())?;
    let pi_head_zero = eval_pi(&rec_h, n, 0.0)?;

    let atoms = full.lambdas();
    let mut samples: Vec<f64> = atoms.to_vec();
    samples.extend(atoms.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    let spread = (full.lambda_max() - full.lambda_min()).max(1.0);
    samples.push(0.0);
    samples.push(full.lambda_max() + 0.1 * spread);
    samples.push(full.lambda_min() - 0.1 * spread);

    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &x in &samples {
        let lhs = eval_pi(&rec_f, n, x)?;
        let correction: f64 = xis
            .iter()
            .enumerate()
            .map(|(j, xi)| sys.sigma[j] * xi.eval(x))
            .sum();
        let rhs = eval_pi(&rec_h, n, x)? - pi_head_zero * correction;
        worst = worst.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// How far the roots of the perturbed polynomial move, relative to the head
/// roots, with the `‖σ‖₁` certificate.
#[derive(Debug, Clone)]
pub struct RootDisplacement {
    pub n: usize,
    pub sigma_l1: f64,
    /// Roots of `π̃_n` (the order-`n` recurrence eigenvalues of the full
    /// measure), sorted increasing.
    pub perturbed_roots: Vec<f64>,
    /// Roots of `π_n` for the head measure, sorted increasing.
    pub head_roots: Vec<f64>,
    /// `max_z min_γ |1 − z/γ|` over perturbed roots `z`, head roots `γ`.
    pub max_relative_displacement: f64,
    /// Whether the displacement is within `‖σ‖₁` (with slack).
    pub displacement_bound_holds: bool,
    /// `(1 − ‖σ‖₁) · min γ` when `‖σ‖₁ < 1`: a positive floor under every
    /// perturbed root.
    pub positive_floor: Option<f64>,
    pub floor_holds: Option<bool>,
}

/// Compute the root displacement report at order `n`.
pub fn root_displacement_bound(split: &SplitSpectralMeasure, n: usize) -> Result<RootDisplacement> {
    let sys = sigma_system(split, n)?;
    let rec_h = stieltjes(split.head())?;
    let full = split.full();
    let rec_f = stieltjes(&full)?;
    let perturbed = ritz_values(&rec_f, n)?;
    let head_roots = ritz_values(&rec_h, n)?;
    let mut max_rel = 0.0f64;
    for &z in &perturbed {
        let nearest = head_roots
            .iter()
            .map(|&g| (1.0 - z / g).abs())
            .fold(f64::INFINITY, f64::min);
        max_rel = max_rel.max(nearest);
    }
    let displacement_bound_holds = max_rel <= sys.sigma_l1 * (1.0 + BOUND_SLACK) + 1e-12;
    let (positive_floor, floor_holds) = if sys.contraction() {
        let floor = (1.0 - sys.sigma_l1) * head_roots[0];
        let holds = perturbed[0] >= floor * (1.0 - BOUND_SLACK) - 1e-12;
        (Some(floor), Some(holds))
    } else {
        (None, None)
    };
    Ok(RootDisplacement {
        n,
        sigma_l1: sys.sigma_l1,
        perturbed_roots: perturbed,
        head_roots,
        max_relative_displacement: max_rel,
        displacement_bound_holds,
        positive_floor,
        floor_holds,
    })
}

/// Deviation of the interpolation/residual polynomials from 1 on the tail,
/// with the proved product caps.
#[derive(Debug, Clone, Copy)]
pub struct DeltaTau {
    pub n: usize,
    /// `δ = max_{i,j} |ξ_{n-1}^j(λ_i) − 1|`.
    pub delta: f64,
    /// `τ = max_i |ς_n(λ_i) − 1|`.
    pub tau: f64,
    /// Largest tail magnitude `ε`.
    pub tail_radius: f64,
    /// `(1 + ε/λ_d)^{n-1} − 1`.
    pub delta_cap: f64,
    /// `(1 + ε/λ_d)^n − 1`.
    pub tau_cap: f64,
    pub caps_hold: bool,
}

/// Measure `δ`/`τ` at order `n` and compare them with their caps (proved
/// from all relevant polynomial roots lying at or above `λ_d`).
pub fn delta_tau(split: &SplitSpectralMeasure, n: usize) -> Result<DeltaTau> {
    if split.tail_len() == 0 {
        return Err(Error::InvalidSplit {
            reason: "δ/τ are defined over a nonempty tail".into(),
        });
    }
    let rec = stieltjes(split.head())?;
    if n == 0 || n > rec.grade() {
        return Err(Error::IterationOutOfRange {
            n,
            max: rec.grade(),
        });
    }
    let lambdas = split.tail_lambdas();
    let xis = xi_handles(&rec, n, lambdas)?;
    let mut delta = 0.0f64;
    for xi in &xis {
        for &l in lambdas {
            delta = delta.max((xi.eval(l) - 1.0).abs());
        }
    }
    let mut tau = 0.0f64;
    for &l in lambdas {
        tau = tau.max((eval_varsigma(&rec, n, l)? - 1.0).abs());
    }
    let ratio = split.tail_eps() / split.lambda_d();
    let delta_cap = f64::exp_m1((n as f64 - 1.0) * f64::ln_1p(ratio));
    let tau_cap = f64::exp_m1(n as f64 * f64::ln_1p(ratio));
    let caps_hold = delta <= delta_cap * (1.0 + BOUND_SLACK) + 1e-12
        && tau <= tau_cap * (1.0 + BOUND_SLACK) + 1e-12;
    Ok(DeltaTau {
        n,
        delta,
        tau,
        tail_radius: split.tail_eps(),
        delta_cap,
        tau_cap,
        caps_hold,
    })
}

/// Result of [`psd_contraction_check`].
#[derive(Debug, Clone, Copy)]
pub struct PsdContraction {
    /// `max_ij |X_ij|` for `X = (I + S M)^{-1} S`.
    pub max_x: f64,
    /// `max_ij |S_ij|`.
    pub max_s: f64,
    pub holds: bool,
}

fn check_psd(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let scale = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > 1e-12 * scale {
                return Err(Error::NotSymmetric {
                    i,
                    j,
                    diff,
                    tol: 1e-12 * scale,
                });
            }
        }
    }
    let min_eig = nalgebra::SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 * scale {
        return Err(Error::InvalidParam(format!(
            "{what} is not positive semidefinite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

/// For positive semidefinite `S` and `M`, the entries of
/// `X = (I + S M)^{-1} S` never exceed the entries of `S` in magnitude.
/// This is the structural reason the coupling coefficients cannot blow up
/// while the diagonal dominates. Errors if either factor fails a symmetry
/// or semidefiniteness check.
pub fn psd_contraction_check(s: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<PsdContraction> {
    let n = s.nrows();
    if s.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "square factors of matching size",
            expected: n,
            got: if s.ncols() != n { s.ncols() } else { m.nrows() },
        });
    }
    check_psd(s, "left factor")?;
    check_psd(m, "right factor")?;
    let system = DMatrix::identity(n, n) + s * m;
    let x = system
        .lu()
        .solve(s)
        .ok_or_else(|| Error::ContractViolation("resolvent system is singular".into()))?;
    let max_x = x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let max_s = s.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    Ok(PsdContraction {
        max_x,
        max_s,
        holds: max_x <= max_s * (1.0 + BOUND_SLACK) + 1e-300,
    })
}

/// Comparison of the full-measure iterate against the head iterate at the
/// same order, with the contraction bounds when they apply.
#[derive(Debug, Clone)]
pub struct IterateComparison {
    pub n: usize,
    pub sigma_l1: f64,
    /// `‖σ‖₁ < 1`; the bounds below are only defined in this regime.
    pub contraction: bool,
    /// Full-measure iterate (head coordinates first).
    pub perturbed_iterate: DVector<f64>,
    /// Head-measure iterate.
    pub head_iterate: DVector<f64>,
    /// `‖ṽ[head] − v‖`.
    pub head_block_diff: f64,
    /// `‖σ‖₁/(1−‖σ‖₁) · ‖v‖`.
    pub head_block_bound: Option<f64>,
    pub head_block_ok: Option<bool>,
    /// Caps `|b_i|/(1−‖σ‖₁) · |((1−λ_i/λ_d)^n − 1)/λ_i|` for the tail
    /// coordinates of the perturbed iterate (the head block is covered by
    /// [`Self::head_block_bound`]; the cap's product argument needs
    /// `|λ_i| < λ_d`).
    pub tail_coordinate_bounds: Option<Vec<f64>>,
    pub tail_coordinates_ok: Option<bool>,
}

/// `|((1 − λ/λ_d)^n − 1)/λ|`, with the `λ → 0` limit `n/λ_d` and a
/// cancellation-free branch for small `|λ|/λ_d`.
fn iterate_coordinate_gain(lambda: f64, lambda_d: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return n as f64 / lambda_d;
    }
    let x = lambda / lambda_d;
    let pow_minus_one = if x.abs() < 0.5 {
        f64::exp_m1(n as f64 * f64::ln_1p(-x))
    } else {
        (1.0 - x).powi(n as i32) - 1.0
    };
    (pow_minus_one / lambda).abs()
}

/// Run plain conjugate gradients on both the full and the head diagonal
/// systems for `n` iterations and compare the iterates.
pub fn iterate_comparison(split: &SplitSpectralMeasure, n: usize) -> Result<IterateComparison> {
    let sys = sigma_system(split, n)?;
    let head = split.head();
    let full = split.full();
    let d = head.len();
    let (a_full, b_full) = full.dense_system();
    let (a_head, b_head) = head.dense_system();
    let trace_full = tcg(&a_full, &b_full, &TcgParams::plain(n))?;
    let trace_head = tcg(&a_head, &b_head, &TcgParams::plain(n))?;
    if trace_full.final_n() < n || trace_head.final_n() < n {
        return Err(Error::ContractViolation(format!(
            "plain runs ended at iterations {}/{} before the requested order {n}",
            trace_full.final_n(),
            trace_head.final_n()
        )));
    }
    let perturbed = trace_full.iterations[n].v.clone();
    let head_iterate = trace_head.iterations[n].v.clone();
    let head_block_diff = (perturbed.rows(0, d) - &head_iterate).norm();

    let contraction = sys.contraction();
    let (head_block_bound, head_block_ok, tail_coordinate_bounds, tail_coordinates_ok) =
        if contraction {
            let amplifier = sys.sigma_l1 / (1.0 - sys.sigma_l1);
            let block_bound = amplifier * head_iterate.norm();
            let block_ok = head_block_diff <= block_bound * (1.0 + BOUND_SLACK) + 1e-12;
            let lambda_d = split.lambda_d();
            let bounds: Vec<f64> = split
                .tail_lambdas()
                .iter()
                .zip(split.tail_weights())
                .map(|(&l, &b)| {
                    b.abs() / (1.0 - sys.sigma_l1) * iterate_coordinate_gain(l, lambda_d, n)
                })
                .collect();
            let scale = b_full.norm();
            let all_ok = perturbed
                .rows(d, split.tail_len())
                .iter()
                .zip(&bounds)
                .all(|(&v, &cap)| v.abs() <= cap * (1.0 + BOUND_SLACK) + 1e-12 * scale);
            (Some(block_bound), Some(block_ok), Some(bounds), Some(all_ok))
        } else {
            (None, None, None, None)
        };

    Ok(IterateComparison {
        n,
        sigma_l1: sys.sigma_l1,
        contraction,
        perturbed_iterate: perturbed,
        head_iterate,
        head_block_diff,
        head_block_bound,
        head_block_ok,
        tail_coordinate_bounds,
        tail_coordinates_ok,
    })
}

/// Smallest order `n ≥ 1` whose head residual polynomial satisfies
/// `‖ς_n‖² ≤ λ_max · c`. Such an order always exists (the norms reach zero
/// at the grade), so failure indicates an inadmissible budget.
pub fn select_iteration_for_budget(split: &SplitSpectralMeasure, c: f64) -> Result<usize> {
    validate_budget(split, c)?;
    let head = split.head();
    let rec = stieltjes(head)?;
    let cap = head.lambda_max() * c;
    for n in 1..=rec.grade() {
        if PolyHandle::varsigma(&rec, n)?.norm_sq() <= cap {
            return Ok(n);
        }
    }
    Err(Error::InvalidParam(format!(
        "no order up to the head grade meets the residual budget c = {c:.6e}"
    )))
}

/// Certificates and measured quantities for a residual budget `c`.
#[derive(Debug, Clone, Copy)]
pub struct CBoundsReport {
    pub c: f64,
    /// Order chosen by [`select_iteration_for_budget`].
    pub n: usize,
    pub sigma_l1: f64,
    pub eta: f64,
    pub omega: f64,
    /// `‖σ‖₁ ≤ ω` (guaranteed for the selected order).
    pub omega_covers_sigma: bool,
    /// `ω < 1`: the explicit iterate/residual bounds apply.
    pub contraction: bool,
    /// `‖ṽ_n‖` from an actual run on the full system.
    pub iterate_norm: f64,
    /// `‖b̃‖ / ((1−ω) λ_d)`.
    pub iterate_bound: Option<f64>,
    pub iterate_ok: Option<bool>,
    /// `‖r̃_n‖²` from the same run.
    pub residual_norm_sq: f64,
    /// `(λ_max c + (1+η)(1+δ) ω ‖B‖_F² + (1+τ)² ‖B‖_F²) / (1−ω)²`.
    pub residual_bound_sq: Option<f64>,
    pub residual_ok: Option<bool>,
}

/// Select the order for budget `c`, run plain conjugate gradients on the
/// full system, and compare the measured iterate/residual against the
/// budget certificates.
pub fn c_bounds_report(split: &SplitSpectralMeasure, c: f64) -> Result<CBoundsReport> {
    let n = select_iteration_for_budget(split, c)?;
    let sys = sigma_system_with_c(split, n, c)?;
    let full = split.full();
    let (a, b) = full.dense_system();
    let trace = tcg(&a, &b, &TcgParams::plain(n))?;
    if trace.final_n() < n {
        return Err(Error::ContractViolation(format!(
            "plain run ended at iteration {} before the selected order {n}",
            trace.final_n()
        )));
    }
    let it = &trace.iterations[n];
    let iterate_norm = it.v_norm;
    let residual_norm_sq = it.r_norm * it.r_norm;
    let omega_covers_sigma = sys.sigma_l1 <= sys.omega * (1.0 + BOUND_SLACK) + 1e-15;
    let contraction = sys.omega < 1.0;
    let (iterate_bound, iterate_ok, residual_bound_sq, residual_ok) = if contraction {
        let vb = b.norm() / ((1.0 - sys.omega) * split.lambda_d());
        let fro = sys.tail_frobenius_sq;
        let rb = (split.head().lambda_max() * c
            + (1.0 + sys.eta) * (1.0 + sys.delta) * sys.omega * fro
            + (1.0 + sys.tau) * (1.0 + sys.tau) * fro)
            / ((1.0 - sys.omega) * (1.0 - sys.omega));
        let v_ok = iterate_norm <= vb * (1.0 + BOUND_SLACK) + 1e-12;
        let r_ok = residual_norm_sq <= rb * (1.0 + BOUND_SLACK) + 1e-18;
        (Some(vb), Some(v_ok), Some(rb), Some(r_ok))
    } else {
        (None, None, None, None)
    };
    Ok(CBoundsReport {
        c,
        n,
        sigma_l1: sys.sigma_l1,
        eta: sys.eta,
        omega: sys.omega,
        omega_covers_sigma,
        contraction,
        iterate_norm,
        iterate_bound,
        iterate_ok,
        residual_norm_sq,
        residual_bound_sq,
        residual_ok,
    })
}

/// Write per-order coupling diagnostics
/// (`n,sigma_l1,s,delta,tau,eta,omega,min_root_tilde,min_root_head`) for
/// every order up to the smaller of the head and full grades.
pub fn write_sigma_diagnostics_csv<W: Write>(
    split: &SplitSpectralMeasure,
    out: &mut W,
) -> Result<()> {
    writeln!(
        out,
        "n,sigma_l1,s,delta,tau,eta,omega,min_root_tilde,min_root_head"
    )?;
    let rec_h = stieltjes(split.head())?;
    let full = split.full();
    let rec_f = stieltjes(&full)?;
    let max_n = rec_h.grade().min(rec_f.grade());
    for n in 1..=max_n {
        let sys = sigma_system(split, n)?;
        let min_root_tilde = ritz_values(&rec_f, n)?[0];
        let min_root_head = ritz_values(&rec_h, n)?[0];
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            n,
            fmt_f64(sys.sigma_l1),
            fmt_f64(sys.s),
            fmt_f64(sys.delta),
            fmt_f64(sys.tau),
            fmt_f64(sys.eta),
            fmt_f64(sys.omega),
            fmt_f64(min_root_tilde),
            fmt_f64(min_root_head)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SpectralMeasure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_atom_split(eps: f64) -> SplitSpectralMeasure {
        let head = SpectralMeasure::new(vec![1.0], vec![1.0]).unwrap();
        let tail = SpectralMeasure::new(vec![0.0], vec![eps]).unwrap();
        SplitSpectralMeasure::new(head, Some(tail)).unwrap()
    }

    #[test]
    fn single_atom_coupling_has_closed_form() {
        // Head {(1, 1)}, tail {(0, ε)}: D = 1, C = 1, w = 1, so
        // σ = ε²/(1 + ε²).
        let eps = 0.1;
        let split = single_atom_split(eps);
        let sys = sigma_system(&split, 1).unwrap();
        let expected = eps * eps / (1.0 + eps * eps);
        assert!((sys.sigma[0] - expected).abs() <= 1e-16);
        assert!((sys.d_diag[0] - 1.0).abs() <= 1e-15);
        assert!((sys.coupling[(0, 0)] - 1.0).abs() <= 1e-15);
        assert!((sys.w[0] - 1.0).abs() <= 1e-15);
        assert_eq!(sys.sigma_l1, sys.s);
        assert_eq!(sys.delta, 0.0);
        assert!(verify_rho_identity(&split, 1).unwrap() <= 1e-14);
    }

    #[test]
    fn zero_tail_atom_reduces_to_kernel_ratio() {
        // With a single tail atom at exactly zero, ξ's two normalization
        // points coincide, so σ_n = ε² K_{n-1}(0,0) / (1 + ε² K_{n-1}(0,0)).
        let split = SplitSpectralMeasure::clustered_with_zero_tail();
        let rec = stieltjes(split.head()).unwrap();
        let eps_sq = split.tail_frobenius_sq();
        for n in [1usize, 3, 6] {
            let sys = sigma_system(&split, n).unwrap();
            let kernel: f64 = (0..n)
                .map(|i| {
                    let p = eval_pi(&rec, i, 0.0).unwrap();
                    p * p / rec.norm_sq(i)
                })
                .sum();
            let expected = eps_sq * kernel / (1.0 + eps_sq * kernel);
            assert!(
                (sys.sigma[0] - expected).abs() <= 1e-12 * expected.max(1e-30),
                "n = {n}: {} vs {}",
                sys.sigma[0],
                expected
            );
        }
    }

    #[test]
    fn identity_holds_across_random_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for trial in 0..10 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            let grade = stieltjes(split.head()).unwrap().grade();
            for n in 1..=grade {
                let rel = verify_rho_identity(&split, n).unwrap();
                assert!(rel <= 1e-7, "trial {trial}, n = {n}: residual {rel:.3e}");
            }
        }
    }

    #[test]
    fn root_displacement_bound_holds_on_random_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(211);
        for trial in 0..10 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            let grade = stieltjes(split.head()).unwrap().grade();
            for n in 1..=grade {
                let report = root_displacement_bound(&split, n).unwrap();
                assert!(
                    report.displacement_bound_holds,
                    "trial {trial}, n = {n}: displacement {:.3e} vs ‖σ‖₁ = {:.3e}",
                    report.max_relative_displacement, report.sigma_l1
                );
                if let Some(holds) = report.floor_holds {
                    assert!(holds, "trial {trial}, n = {n}: positive floor violated");
                }
            }
        }
    }

    #[test]
    fn delta_tau_caps_hold_on_random_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(307);
        for trial in 0..10 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            let grade = stieltjes(split.head()).unwrap().grade();
            for n in 1..=grade {
                let dt = delta_tau(&split, n).unwrap();
                assert!(
                    dt.caps_hold,
                    "trial {trial}, n = {n}: δ = {:.3e} (cap {:.3e}), τ = {:.3e} (cap {:.3e})",
                    dt.delta, dt.delta_cap, dt.tau, dt.tau_cap
                );
            }
        }
        // First order: ξ_0 ≡ 1 exactly, so δ = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(308);
        let split = SplitSpectralMeasure::sample_random(&mut rng);
        assert_eq!(delta_tau(&split, 1).unwrap().delta, 0.0);
    }

    #[test]
    fn psd_resolvent_entries_stay_below_the_left_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        for _ in 0..20 {
            let k = rng.random_range(1..=6usize);
            let gs = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let gm = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let s = &gs * gs.transpose();
            let m = &gm * gm.transpose() * rng.random_range(0.0..5.0);
            let report = psd_contraction_check(&s, &m).unwrap();
            assert!(
                report.holds,
                "max|X| = {:.6e} exceeded max|S| = {:.6e}",
                report.max_x, report.max_s
            );
        }
        let indefinite = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -1.0]));
        let id = DMatrix::identity(2, 2);
        assert!(psd_contraction_check(&indefinite, &id).is_err());
        assert!(psd_contraction_check(&id, &indefinite).is_err());
    }

    #[test]
    fn decoupled_approximation_is_accurate_when_its_factor_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(503);
        let mut exercised = 0usize;
        for _ in 0..10 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            let grade = stieltjes(split.head()).unwrap().grade();
            for n in 1..=grade {
                let sys = sigma_system(&split, n).unwrap();
                let factor = sys.decoupling_bound_factor();
                if factor >= 0.5 || factor.is_nan() {
                    continue;
                }
                exercised += 1;
                for j in 0..split.tail_len() {
                    let beta = sys.beta_approx[j];
                    assert!(beta > 0.0);
                    assert!(
                        (sys.sigma[j] - beta).abs() <= factor * beta * (1.0 + 1e-9) + 1e-15,
                        "n = {n}, j = {j}: |σ−β| = {:.3e} vs factor·β = {:.3e}",
                        (sys.sigma[j] - beta).abs(),
                        factor * beta
                    );
                }
            }
        }
        assert!(exercised >= 10, "decoupling regime untested ({exercised})");
    }

    #[test]
    fn budget_selection_is_monotone_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(601);
        let split = SplitSpectralMeasure::sample_random(&mut rng);
        let rec = stieltjes(split.head()).unwrap();
        let c_max = max_budget(&split);
        let lambda1 = split.head().lambda_max();
        let mut last_n = 0usize;
        for j in 0..4 {
            let c = c_max * 10f64.powi(-j);
            let n = select_iteration_for_budget(&split, c).unwrap();
            assert!(n >= last_n, "selection must grow as the budget shrinks");
            last_n = n;
            assert!(PolyHandle::varsigma(&rec, n).unwrap().norm_sq() <= lambda1 * c);
            if n > 1 {
                assert!(PolyHandle::varsigma(&rec, n - 1).unwrap().norm_sq() > lambda1 * c);
            }
        }
        assert!(select_iteration_for_budget(&split, 0.0).is_err());
        assert!(select_iteration_for_budget(&split, c_max * 1.5).is_err());
    }

    #[test]
    fn budget_certificates_cover_the_measured_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(701);
        let mut covered = 0usize;
        for trial in 0..10 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            for j in 1..=3i32 {
                let c = max_budget(&split) * 10f64.powi(-j);
                let report = c_bounds_report(&split, c).unwrap();
                assert!(
                    report.omega_covers_sigma,
                    "trial {trial}, j = {j}: ‖σ‖₁ = {:.3e} above ω = {:.3e}",
                    report.sigma_l1, report.omega
                );
                if report.contraction {
                    covered += 1;
                    assert_eq!(report.iterate_ok, Some(true), "trial {trial}, j = {j}");
                    assert_eq!(report.residual_ok, Some(true), "trial {trial}, j = {j}");
                }
            }
        }
        assert!(covered >= 15, "contraction regime untested ({covered})");
    }

    #[test]
    fn iterate_comparison_bounds_hold_under_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(809);
        let mut exercised = 0usize;
        for trial in 0..8 {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            let grade = stieltjes(split.head()).unwrap().grade();
            for n in 1..=grade {
                let cmp = iterate_comparison(&split, n).unwrap();
                if !cmp.contraction {
                    continue;
                }
                exercised += 1;
                assert_eq!(
                    cmp.head_block_ok,
                    Some(true),
                    "trial {trial}, n = {n}: diff {:.3e} vs bound {:.3e}",
                    cmp.head_block_diff,
                    cmp.head_block_bound.unwrap()
                );
                assert_eq!(cmp.tail_coordinates_ok, Some(true), "trial {trial}, n = {n}");
            }
        }
        assert!(exercised >= 10, "contraction regime untested ({exercised})");
    }

    #[test]
    fn diagnostics_csv_has_one_row_per_order() {
        let split = SplitSpectralMeasure::clustered_with_zero_tail();
        let mut buf = Vec::new();
        write_sigma_diagnostics_csv(&split, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "n,sigma_l1,s,delta,tau,eta,omega,min_root_tilde,min_root_head"
        );
        let head_grade = stieltjes(split.head()).unwrap().grade();
        let full = split.full();
        let full_grade = stieltjes(&full).unwrap().grade();
        assert_eq!(lines.len() - 1, head_grade.min(full_grade));
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn empty_tail_is_rejected() {
        let head = SpectralMeasure::new(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
        let split = SplitSpectralMeasure::new(head, None).unwrap();
        assert!(matches!(
            sigma_system(&split, 1),
            Err(Error::InvalidSplit { .. })
        ));
        assert!(delta_tau(&split, 1).is_err());
    }
}
