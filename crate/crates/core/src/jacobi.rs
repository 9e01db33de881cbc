//! Monic orthogonal polynomials of a discrete measure and the derived
//! conjugate-gradient polynomial families.
//!
//! Given a measure with semi-inner product `⟨p, q⟩ = Σ_i b_i² p(λ_i) q(λ_i)`,
//! the monic orthogonal family `π_0, π_1, …` satisfies the three-term
//! recurrence
//!
//! ```text
//! π_{k+1}(x) = (x - α_k) π_k(x) - β_k π_{k-1}(x),    β_k > 0,
//! ```
//!
//! terminating at the grade `ℓ` (the number of weighted atoms), where
//! `‖π_ℓ‖ = 0`. The roots of `π_n` are the eigenvalues of the order-`n`
//! Jacobi section — the Ritz values of the underlying operator restricted to
//! the `n`-th Krylov space.
//!
//! Derived families, all evaluated through the recurrence (never through
//! monomial coefficients):
//!
//! * `ς_n = π_n / π_n(0)` — the CG residual polynomial (`r_n = ς_n(A) b`),
//!   defined whenever the order-`n` section is positive definite;
//! * `φ_{n-1}` with `ς_n(x) = 1 - x φ_{n-1}(x)` — the CG iterate polynomial
//!   (`v_n = φ_{n-1}(A) b`);
//! * `ζ_n(·; λ)` — the minimum-norm polynomial of degree ≤ n with value 1 at
//!   `λ`, computed from the reproducing kernel
//!   `K_n(λ, x) = Σ_{i≤n} π_i(λ) π_i(x) / ‖π_i‖²` as
//!   `ζ_n = K_n(λ, ·) / K_n(λ, λ)`, with `‖ζ_n‖² = 1 / K_n(λ, λ)`;
//! * `ξ_n = ζ_n / ζ_n(0)` — the same family renormalized to value 1 at zero.

use nalgebra::DMatrix;

use crate::measure::SpectralMeasure;
use crate::{Error, Result};

/// Relative breakdown threshold for the norm ratio `‖π_{k+1}‖²/‖π_k‖²`,
/// scaled by `max(1, diam)²`. Genuine ratios are of the order of the squared
/// atom gaps; at a numerically exhausted measure the computed ratio collapses
/// to roundoff squared (`~1e-32·diam²`), so `1e-24` separates the two regimes
/// by many orders of magnitude even for tightly clustered spectra, whose
/// genuine norms can undercut any absolute threshold.
const GRADE_RATIO_TOL: f64 = 1e-24;
/// Relative positivity tolerance for Ritz values in well-definedness checks.
const RITZ_POSITIVITY_REL_TOL: f64 = 1e-12;
/// Below `|x| ≤ threshold · max(1, spectral radius)` the iterate polynomial
/// `φ` switches from `(1 - ς)/x` to its cancellation-free Ritz product form.
const PHI_DIRECT_THRESHOLD: f64 = 1e-6;
/// Relative cancellation guard for `ζ_n(0)` in the `ξ` normalization.
const XI_ZERO_REL_TOL: f64 = 1e-14;

/// The three-term recurrence of a measure's monic orthogonal family.
///
/// Stores `α_0..α_{ℓ-1}`, `β_1..β_{ℓ-1}` and the norms `‖π_0‖²..‖π_ℓ‖²`,
/// together with the originating measure (used for norms by direct
/// summation). `ℓ` is the detected grade: the recurrence stops either when
/// the weighted atoms are exhausted or when the norm ratio
/// `‖π_{k+1}‖²/‖π_k‖²` collapses to the numerical-breakdown regime (see
/// [`GRADE_RATIO_TOL`]), whichever comes first.
#[derive(Debug, Clone)]
pub struct JacobiRecurrence {
    measure: SpectralMeasure,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    norm_sq: Vec<f64>,
}

impl JacobiRecurrence {
    /// Grade `ℓ` of the measure: the index at which the family terminates.
    pub fn grade(&self) -> usize {
        self.alphas.len()
    }

    /// Recurrence diagonal `α_0..α_{ℓ-1}`.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Recurrence off-diagonal `β_1..β_{ℓ-1}` (all strictly positive).
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `‖π_n‖²` for `0 ≤ n ≤ ℓ`.
    pub fn norm_sq(&self, n: usize) -> f64 {
        self.norm_sq[n]
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.grade() {
            Err(Error::IterationOutOfRange {
                n,
                max: self.grade(),
            })
        } else {
            Ok(())
        }
    }

    /// Evaluate `π_0(x), …, π_n(x)` in one recurrence sweep.
    fn pi_sweep(&self, n: usize, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut prev = 0.0;
        let mut cur = 1.0;
        out.push(cur);
        for k in 0..n {
            let beta = if k == 0 { 0.0 } else { self.betas[k - 1] };
            let next = (x - self.alphas[k]) * cur - beta * prev;
            prev = cur;
            cur = next;
            out.push(cur);
        }
        out
    }

    /// The order-`n` Jacobi section: symmetric tridiagonal with diagonal
    /// `α_0..α_{n-1}` and off-diagonal `√β_1..√β_{n-1}`, optionally with a
    /// shift added to the last diagonal entry (used for kernel-polynomial
    /// roots).
    fn jacobi_section(&self, n: usize, last_diag_shift: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.alphas[i];
            if i + 1 < n {
                let off = self.betas[i].sqrt();
                m[(i, i + 1)] = off;
                m[(i + 1, i)] = off;
            }
        }
        m[(n - 1, n - 1)] += last_diag_shift;
        m
    }

    fn positivity_tol(&self) -> f64 {
        RITZ_POSITIVITY_REL_TOL * self.measure.spectral_radius().max(1.0)
    }

    /// Ritz values of order `n` if they are all strictly positive (the
    /// iteration is then well defined), otherwise an error carrying the
    /// offending value.
    fn well_defined_ritz(&self, n: usize) -> Result<Vec<f64>> {
        let ritz = ritz_values(self, n)?;
        let tol = self.positivity_tol();
        if let Some(&bad) = ritz.iter().find(|&&g| g <= tol) {
            return Err(Error::IterationNotWellDefined { n, value: bad });
        }
        Ok(ritz)
    }
}

/// Run the discrete Stieltjes procedure on a measure.
///
/// Zero-weight atoms are skipped (they contribute nothing to the inner
/// product); at least one weighted atom is required.
pub fn stieltjes(measure: &SpectralMeasure) -> Result<JacobiRecurrence> {
    let atoms: Vec<(f64, f64)> = measure
        .lambdas()
        .iter()
        .zip(measure.weights())
        .filter(|(_, w)| w.abs() > 0.0)
        .map(|(&l, &w)| (l, w * w))
        .collect();
    if atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let count = atoms.len();
    let mass: f64 = atoms.iter().map(|&(_, w2)| w2).sum();
    let diam = measure.lambda_max() - measure.lambda_min();

    let mut p_prev = vec![0.0; count];
    let mut p_cur = vec![1.0; count];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut norm_sq = vec![mass];

    for k in 0..count {
        let cur_norm: f64 = norm_sq[k];
        let alpha: f64 = atoms
            .iter()
            .zip(&p_cur)
            .map(|(&(l, w2), &p)| w2 * l * p * p)
            .sum::<f64>()
            / cur_norm;
        alphas.push(alpha);

        let beta = if k == 0 { 0.0 } else { betas[k - 1] };
        let mut next_norm = 0.0;
        for (i, &(l, w2)) in atoms.iter().enumerate() {
            let next = (l - alpha) * p_cur[i] - beta * p_prev[i];
            p_prev[i] = p_cur[i];
            p_cur[i] = next;
            next_norm += w2 * next * next;
        }
        norm_sq.push(next_norm);

        let threshold = GRADE_RATIO_TOL * cur_norm * diam.max(1.0).powi(2);
        if k + 1 == count || next_norm <= threshold {
            break;
        }
        betas.push(next_norm / cur_norm);
    }

    Ok(JacobiRecurrence {
        measure: measure.clone(),
        alphas,
        betas,
        norm_sq,
    })
}

/// Roots of `π_n`: the eigenvalues of the order-`n` Jacobi section, sorted
/// increasing. Requires `1 ≤ n ≤ ℓ`.
pub fn ritz_values(rec: &JacobiRecurrence, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::IterationOutOfRange { n, max: rec.grade() });
    }
    rec.check_order(n)?;
    let section = rec.jacobi_section(n, 0.0);
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(section)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs)
}

/// Evaluate the monic `π_n` at `x` via the recurrence. Requires `n ≤ ℓ`.
pub fn eval_pi(rec: &JacobiRecurrence, n: usize, x: f64) -> Result<f64> {
    rec.check_order(n)?;
    Ok(*rec.pi_sweep(n, x).last().unwrap())
}

/// Evaluate the residual polynomial `ς_n = π_n / π_n(0)` at `x`.
///
/// Requires the order-`n` iteration to be well defined (all Ritz values
/// strictly positive); `n = 0` gives the constant 1.
pub fn eval_varsigma(rec: &JacobiRecurrence, n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        rec.check_order(0)?;
        return Ok(1.0);
    }
    rec.well_defined_ritz(n)?;
    let at_x = eval_pi(rec, n, x)?;
    let at_zero = eval_pi(rec, n, 0.0)?;
    Ok(at_x / at_zero)
}

/// Evaluate the iterate polynomial `φ_k` (degree `k`) at `x`, where
/// `ς_{k+1}(x) = 1 - x φ_k(x)`.
///
/// Away from zero this computes `(1 - ς_{k+1}(x))/x`; for
/// `|x| ≤ 1e-6 · max(1, ρ)` it switches to the cancellation-free expansion
/// over the order-`(k+1)` Ritz values `γ_j`,
/// `φ_k(x) = Σ_j γ_j^{-1} Π_{i<j} (1 - x/γ_i)`, whose value at zero is
/// `-ς_{k+1}'(0) = Σ_j 1/γ_j`.
pub fn eval_phi(rec: &JacobiRecurrence, k: usize, x: f64) -> Result<f64> {
    let n = k + 1;
    let ritz = rec.well_defined_ritz(n)?;
    let scale = rec.measure().spectral_radius().max(1.0);
    if x.abs() > PHI_DIRECT_THRESHOLD * scale {
        let varsigma = eval_pi(rec, n, x)? / eval_pi(rec, n, 0.0)?;
        Ok((1.0 - varsigma) / x)
    } else {
        let mut sum = 0.0;
        let mut prod = 1.0;
        for &g in &ritz {
            sum += prod / g;
            prod *= 1.0 - x / g;
        }
        Ok(sum)
    }
}

/// Which polynomial family a [`PolyHandle`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyTag {
    /// Monic orthogonal `π_n`.
    Pi,
    /// Residual polynomial `ς_n`.
    Varsigma,
    /// Iterate polynomial `φ_k`.
    Phi,
    /// Minimum-norm interpolation polynomial `ζ_n(·; λ)`.
    Zeta,
    /// `ξ_n = ζ_n / ζ_n(0)`.
    Xi,
}

/// A concrete member of one of the polynomial families, bound to its
/// recurrence. All evaluation goes through recurrence/kernel sums.
#[derive(Debug, Clone)]
pub struct PolyHandle<'a> {
    rec: &'a JacobiRecurrence,
    tag: PolyTag,
    degree: usize,
    /// Family order `n` (for `Phi` this is the order of the underlying
    /// residual polynomial, i.e. `degree + 1`).
    order: usize,
    /// Normalization point `λ` for `Zeta`/`Xi`.
    lambda: f64,
    /// Kernel coefficients `π_i(λ)/‖π_i‖²`, `i = 0..=n`, for `Zeta`/`Xi`.
    kernel_coeffs: Vec<f64>,
    /// `K_n(λ, λ)` for `Zeta`/`Xi`.
    knn: f64,
    /// `ζ_n(0)` for `Xi`.
    zeta_at_zero: f64,
    /// Order-`n` Ritz values (kept for `Phi`'s stable form near zero).
    ritz: Vec<f64>,
}

impl<'a> PolyHandle<'a> {
    /// Handle for the monic `π_n`, `n ≤ ℓ`.
    pub fn pi(rec: &'a JacobiRecurrence, n: usize) -> Result<Self> {
        rec.check_order(n)?;
        Ok(Self {
            rec,
            tag: PolyTag::Pi,
            degree: n,
            order: n,
            lambda: f64::NAN,
            kernel_coeffs: Vec::new(),
            knn: f64::NAN,
            zeta_at_zero: f64::NAN,
            ritz: Vec::new(),
        })
    }

    /// Handle for `ς_n`; requires the order-`n` iteration to be well defined.
    pub fn varsigma(rec: &'a JacobiRecurrence, n: usize) -> Result<Self> {
        let ritz = if n == 0 {
            rec.check_order(0)?;
            Vec::new()
        } else {
            rec.well_defined_ritz(n)?
        };
        Ok(Self {
            rec,
            tag: PolyTag::Varsigma,
            degree: n,
            order: n,
            lambda: f64::NAN,
            kernel_coeffs: Vec::new(),
            knn: f64::NAN,
            zeta_at_zero: f64::NAN,
            ritz,
        })
    }

    /// Handle for `φ_k` (degree `k`, order `k + 1`).
    pub fn phi(rec: &'a JacobiRecurrence, k: usize) -> Result<Self> {
        let ritz = rec.well_defined_ritz(k + 1)?;
        Ok(Self {
            rec,
            tag: PolyTag::Phi,
            degree: k,
            order: k + 1,
            lambda: f64::NAN,
            kernel_coeffs: Vec::new(),
            knn: f64::NAN,
            zeta_at_zero: f64::NAN,
            ritz,
        })
    }

    /// Handle for `ζ_n(·; λ)`, the minimum-norm degree-≤n polynomial with
    /// value 1 at `λ`. Requires `n ≤ ℓ - 1` so that the kernel is built from
    /// polynomials of positive norm.
    pub fn zeta(rec: &'a JacobiRecurrence, n: usize, lambda: f64) -> Result<Self> {
        if n + 1 > rec.grade() {
            return Err(Error::IterationOutOfRange {
                n,
                max: rec.grade().saturating_sub(1),
            });
        }
        let pis = rec.pi_sweep(n, lambda);
        let kernel_coeffs: Vec<f64> = pis
            .iter()
            .enumerate()
            .map(|(i, &p)| p / rec.norm_sq(i))
            .collect();
        let knn: f64 = kernel_coeffs.iter().zip(&pis).map(|(&c, &p)| c * p).sum();
        if !(knn.is_finite() && knn > 0.0) {
            return Err(Error::ContractViolation(format!(
                "kernel diagonal K_{n}(λ, λ) = {knn:.3e} is not positive"
            )));
        }
        Ok(Self {
            rec,
            tag: PolyTag::Zeta,
            degree: n,
            order: n,
            lambda,
            kernel_coeffs,
            knn,
            zeta_at_zero: f64::NAN,
            ritz: Vec::new(),
        })
    }

    /// Handle for `ξ_n = ζ_n / ζ_n(0)`. Fails when `ζ_n(0)` is numerically
    /// zero (impossible while `λ` and the kernel stay in the supported
    /// regime, where all roots of `ζ_n` are positive).
    pub fn xi(rec: &'a JacobiRecurrence, n: usize, lambda: f64) -> Result<Self> {
        let mut handle = Self::zeta(rec, n, lambda)?;
        let pis0 = rec.pi_sweep(n, 0.0);
        let num: f64 = handle
            .kernel_coeffs
            .iter()
            .zip(&pis0)
            .map(|(&c, &p)| c * p)
            .sum();
        let magnitude: f64 = handle
            .kernel_coeffs
            .iter()
            .zip(&pis0)
            .map(|(&c, &p)| (c * p).abs())
            .sum();
        let zeta_at_zero = num / handle.knn;
        if !zeta_at_zero.is_finite() || num.abs() <= XI_ZERO_REL_TOL * magnitude {
            return Err(Error::XiUndefined {
                value: zeta_at_zero,
                scale: magnitude / handle.knn,
            });
        }
        handle.tag = PolyTag::Xi;
        handle.zeta_at_zero = zeta_at_zero;
        Ok(handle)
    }

    pub fn tag(&self) -> PolyTag {
        self.tag
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Evaluate the polynomial at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.tag {
            PolyTag::Pi => *self.rec.pi_sweep(self.order, x).last().unwrap(),
            PolyTag::Varsigma => {
                if self.order == 0 {
                    return 1.0;
                }
                let sweep_x = self.rec.pi_sweep(self.order, x);
                let sweep_0 = self.rec.pi_sweep(self.order, 0.0);
                sweep_x.last().unwrap() / sweep_0.last().unwrap()
            }
            PolyTag::Phi => {
                let scale = self.rec.measure().spectral_radius().max(1.0);
                if x.abs() > PHI_DIRECT_THRESHOLD * scale {
                    let sweep_x = self.rec.pi_sweep(self.order, x);
                    let sweep_0 = self.rec.pi_sweep(self.order, 0.0);
                    let varsigma = sweep_x.last().unwrap() / sweep_0.last().unwrap();
                    (1.0 - varsigma) / x
                } else {
                    let mut sum = 0.0;
                    let mut prod = 1.0;
                    for &g in &self.ritz {
                        sum += prod / g;
                        prod *= 1.0 - x / g;
                    }
                    sum
                }
            }
            PolyTag::Zeta | PolyTag::Xi => {
                let pis = self.rec.pi_sweep(self.degree, x);
                let kernel: f64 = self
                    .kernel_coeffs
                    .iter()
                    .zip(&pis)
                    .map(|(&c, &p)| c * p)
                    .sum();
                let zeta = kernel / self.knn;
                if self.tag == PolyTag::Zeta {
                    zeta
                } else {
                    zeta / self.zeta_at_zero
                }
            }
        }
    }

    /// Measure norm `‖·‖²`. Closed forms are used where available
    /// (`‖π_n‖²` from the recurrence, `‖ζ_n‖² = 1/K_n(λ, λ)`); the other
    /// families are summed directly over the atoms.
    pub fn norm_sq(&self) -> f64 {
        match self.tag {
            PolyTag::Pi => self.rec.norm_sq(self.order),
            PolyTag::Varsigma => {
                if self.order == 0 {
                    return self.rec.measure().total_mass();
                }
                let at_zero = *self.rec.pi_sweep(self.order, 0.0).last().unwrap();
                self.rec.norm_sq(self.order) / (at_zero * at_zero)
            }
            PolyTag::Zeta => 1.0 / self.knn,
            PolyTag::Xi => 1.0 / self.knn / (self.zeta_at_zero * self.zeta_at_zero),
            PolyTag::Phi => self.rec.measure().norm_sq(|x| self.eval(x)),
        }
    }

    /// Value at zero without re-deriving handle-specific constants.
    pub fn value_at_zero(&self) -> f64 {
        match self.tag {
            PolyTag::Xi => 1.0,
            PolyTag::Phi => self.ritz.iter().map(|g| 1.0 / g).sum(),
            _ => self.eval(0.0),
        }
    }

    /// Roots of a `Zeta`/`Xi` handle (they coincide), sorted increasing.
    ///
    /// By the Christoffel–Darboux identity, `(x - λ) K_n(λ, x)` is
    /// proportional to `π_{n+1}(x) - t π_n(x)` with `t = π_{n+1}(λ)/π_n(λ)`,
    /// and the roots of that combination are the eigenvalues of the
    /// order-`(n+1)` Jacobi section with `t` added to its last diagonal
    /// entry. Dropping the eigenvalue at `λ` leaves the `n` roots of `ζ_n`,
    /// obtained from a symmetric eigenproblem (hence real and stable).
    pub fn roots(&self) -> Result<Vec<f64>> {
        if !matches!(self.tag, PolyTag::Zeta | PolyTag::Xi) {
            return Err(Error::InvalidParam(
                "roots() is implemented for zeta/xi handles".into(),
            ));
        }
        let n = self.degree;
        if n == 0 {
            return Ok(Vec::new());
        }
        let sweep = self.rec.pi_sweep(n + 1, self.lambda);
        let pi_n = sweep[n];
        let pi_n1 = sweep[n + 1];
        let scale = self.rec.measure().spectral_radius().max(1.0);
        if pi_n.abs() <= 1e-300 {
            return Err(Error::ContractViolation(format!(
                "normalization point {:.6e} is numerically a root of π_{n}",
                self.lambda
            )));
        }
        let t = pi_n1 / pi_n;
        let section = self.rec.jacobi_section(n + 1, t);
        let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(section)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Remove the known eigenvalue at λ.
        let (idx, dist) = eigs
            .iter()
            .enumerate()
            .map(|(i, &e)| (i, (e - self.lambda).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if dist > 1e-6 * scale.max(self.lambda.abs()) {
            return Err(Error::ContractViolation(format!(
                "kernel-root section lost the interpolation point: nearest eigenvalue is {dist:.3e} away from λ"
            )));
        }
        eigs.remove(idx);
        Ok(eigs)
    }
}
