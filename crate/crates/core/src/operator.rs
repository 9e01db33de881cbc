//! Symmetric linear operators and their dense eigendecompositions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative entry tolerance for the symmetry check at construction.
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative max-norm tolerance for `Q Λ Qᵀ` reconstructing the input.
const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Max-norm tolerance for `QᵀQ - I`.
const ORTHONORMALITY_TOL: f64 = 1e-12;

type ApplyFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A symmetric operator on `R^dim`, stored densely and/or as a matvec closure.
///
/// Instances are immutable after construction and can be shared across
/// threads. When both representations are present they are required to agree;
/// [`SymmetricOperator::check_apply_consistency`] verifies this on random
/// vectors.
#[derive(Clone)]
pub struct SymmetricOperator {
    dim: usize,
    dense: Option<DMatrix<f64>>,
    apply: Option<ApplyFn>,
}

impl std::fmt::Debug for SymmetricOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricOperator")
            .field("dim", &self.dim)
            .field("dense", &self.dense.is_some())
            .field("apply", &self.apply.is_some())
            .finish()
    }
}

impl SymmetricOperator {
    /// Wrap a dense matrix, verifying symmetry entrywise at a relative
    /// tolerance of `1e-12` against the largest entry magnitude.
    pub fn from_dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "dense operator must be square",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let scale = matrix.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let tol = SYMMETRY_TOL * scale;
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                let diff = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if diff > tol {
                    return Err(Error::NotSymmetric { i, j, diff, tol });
                }
            }
        }
        Ok(Self {
            dim: matrix.nrows(),
            dense: Some(matrix),
            apply: None,
        })
    }

    /// Wrap a matvec closure. The closure must implement a symmetric operator;
    /// this is checked probabilistically by [`Self::check_apply_consistency`]
    /// rather than at construction.
    pub fn from_apply<F>(dim: usize, apply: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            dense: None,
            apply: Some(Arc::new(apply)),
        }
    }

    /// Diagonal operator with the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            dim: diag.len(),
            dense: Some(DMatrix::from_diagonal(&DVector::from_column_slice(diag))),
            apply: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Apply the operator to a vector.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim, "operator/vector dimension mismatch");
        if let Some(dense) = &self.dense {
            dense * v
        } else {
            (self.apply.as_ref().expect("operator has no representation"))(v)
        }
    }

    /// The quadratic form `⟨u, A v⟩`.
    pub fn quad(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.apply(v))
    }

    /// Dense realization, materialized column-by-column for closure-backed
    /// operators.
    pub fn dense_realization(&self) -> DMatrix<f64> {
        if let Some(dense) = &self.dense {
            return dense.clone();
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let mut e = DVector::zeros(self.dim);
        for j in 0..self.dim {
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        out
    }

    /// Check `|⟨u, A v⟩ - ⟨v, A u⟩|` and (when a dense form exists) closure /
    /// dense agreement on `trials` random unit vectors.
    pub fn check_apply_consistency<R: rand::Rng>(&self, rng: &mut R, trials: usize) -> Result<()> {
        let scale = self.norm_estimate(rng).max(1.0);
        for _ in 0..trials {
            let u = random_unit(rng, self.dim);
            let v = random_unit(rng, self.dim);
            let auv = self.quad(&u, &v);
            let avu = self.quad(&v, &u);
            if (auv - avu).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric {
                    i: 0,
                    j: 0,
                    diff: (auv - avu).abs(),
                    tol: SYMMETRY_TOL * scale,
                });
            }
            if let (Some(dense), Some(apply)) = (&self.dense, &self.apply) {
                let diff = (dense * &v - apply(&v)).amax();
                if diff > SYMMETRY_TOL * scale {
                    return Err(Error::ContractViolation(format!(
                        "dense and closure forms disagree by {diff:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Crude spectral-norm estimate by power iteration (deterministic given
    /// the generator state); adequate for tolerance scaling.
    pub fn norm_estimate<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let mut v = random_unit(rng, self.dim);
        let mut norm = 0.0;
        for _ in 0..40 {
            let w = self.apply(&v);
            norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = w / norm;
        }
        norm
    }
}

fn random_unit<R: rand::Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Dense symmetric eigendecomposition `A = Q Λ Qᵀ` with eigenvalues sorted in
/// nonincreasing order and orthonormal columns in `Q`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `max_i |λ_i|`.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Smallest eigenvalue (the last one in the sorted order).
    pub fn min_eigenvalue(&self) -> f64 {
        *self
            .eigenvalues
            .as_slice()
            .last()
            .expect("empty decomposition")
    }
}

/// Eigendecompose a symmetric operator, enforcing the orthonormality and
/// reconstruction contracts (`1e-12` / `1e-10` relative in max norm).
pub fn symmetric_eigendecompose(op: &SymmetricOperator) -> Result<EigenDecomposition> {
    let a = op.dense_realization();
    if a.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "cannot eigendecompose the empty operator",
            expected: 1,
            got: 0,
        });
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let sym = nalgebra::SymmetricEigen::new(a.clone());

    // Sort nonincreasing, permuting eigenvector columns accordingly.
    let n = sym.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sym.eigenvalues[j]
            .partial_cmp(&sym.eigenvalues[i])
            .expect("non-finite eigenvalue")
    });
    let eigenvalues = DVector::from_fn(n, |i, _| sym.eigenvalues[order[i]]);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &sym.eigenvectors.column(src));
    }

    let qtq = eigenvectors.transpose() * &eigenvectors;
    let ortho_residual = (&qtq - DMatrix::identity(n, n)).amax();
    if ortho_residual > ORTHONORMALITY_TOL {
        return Err(Error::EigenReconstruction {
            residual: ortho_residual,
            tol: ORTHONORMALITY_TOL,
        });
    }
    let recon = &eigenvectors * DMatrix::from_diagonal(&eigenvalues) * eigenvectors.transpose();
    let recon_residual = (&recon - &a).amax();
    if recon_residual > RECONSTRUCTION_TOL * scale {
        return Err(Error::EigenReconstruction {
            residual: recon_residual,
            tol: RECONSTRUCTION_TOL * scale,
        });
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 1e-3;
        assert!(matches!(
            SymmetricOperator::from_dense(m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eigendecomposition_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 20, 60] {
            let a = random_symmetric(&mut rng, n);
            let op = SymmetricOperator::from_dense(a.clone()).unwrap();
            let eig = symmetric_eigendecompose(&op).unwrap();
            for i in 1..n {
                assert!(eig.eigenvalues[i - 1] >= eig.eigenvalues[i]);
            }
            let recon = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues)
                * eig.eigenvectors.transpose();
            assert!((recon - &a).amax() <= 1e-10 * a.amax().max(1.0));
        }
    }

    #[test]
    fn closure_operator_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_symmetric(&mut rng, 8);
        let a2 = a.clone();
        let op = SymmetricOperator::from_apply(8, move |v| &a2 * v);
        let dense = op.dense_realization();
        assert!((dense - &a).amax() <= 1e-15);
        op.check_apply_consistency(&mut rng, 10).unwrap();
    }

    #[test]
    fn known_eigenvalues_recovered() {
        let op = SymmetricOperator::from_diagonal(&[3.0, -1.0, 0.5]);
        let eig = symmetric_eigendecompose(&op).unwrap();
        let got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        assert_eq!(got, vec![3.0, 0.5, -1.0]);
    }
}
