//! Discrete spectral measures and head/tail splits.
//!
//! A [`SpectralMeasure`] is a finite list of atoms `(λ_i, b_i)`: the distinct
//! eigenvalues of a symmetric operator together with the norms of the
//! projections of a vector `b` onto the corresponding eigenspaces. It induces
//! the semi-inner product `⟨p, q⟩ = Σ_i b_i² p(λ_i) q(λ_i)` on polynomials,
//! which is what the Jacobi/Lanczos machinery in [`crate::jacobi`] is built
//! on.
//!
//! A [`SplitSpectralMeasure`] partitions the atoms into a positive-definite
//! *head* (eigenvalues `λ_1 > … > λ_d > 0`) and a small-magnitude *tail*
//! strictly below the head. The coupling analysis in [`crate::sigma`]
//! quantifies how the tail perturbs the conjugate-gradient dynamics of the
//! head.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::io::{fmt_f64, parse_f64_field};
use crate::operator::{symmetric_eigendecompose, SymmetricOperator};
use crate::{Error, Result};

/// Relative eigenvalue-merge tolerance used by [`measure_from_operator`],
/// scaled by `max(1, spectral radius)`.
const MERGE_REL_TOL: f64 = 1e-9;

/// A discrete measure `Σ_i b_i² δ_{λ_i}` with strictly decreasing atoms.
///
/// Zero-weight atoms are retained (they still mark spectrum locations) but are
/// excluded from the grade and from the orthogonal-polynomial recurrence,
/// since they contribute nothing to the semi-inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralMeasure {
    /// Build a measure from atom locations and weights.
    ///
    /// `lambdas` must be finite and strictly decreasing; `weights` must be
    /// finite and of the same length. Weights may carry any sign (only their
    /// squares enter the inner product).
    pub fn new(lambdas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if lambdas.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "measure atoms and weights",
                expected: lambdas.len(),
                got: weights.len(),
            });
        }
        for (i, (&l, &w)) in lambdas.iter().zip(&weights).enumerate() {
            if !l.is_finite() || !w.is_finite() {
                return Err(Error::NonFinite {
                    context: "spectral measure atom",
                });
            }
            if i > 0 && l >= lambdas[i - 1] {
                return Err(Error::UnsortedMeasure { index: i });
            }
        }
        Ok(Self { lambdas, weights })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest atom `λ_1`.
    pub fn lambda_max(&self) -> f64 {
        self.lambdas[0]
    }

    /// Smallest atom `λ_m`.
    pub fn lambda_min(&self) -> f64 {
        *self.lambdas.last().unwrap()
    }

    /// `max_i |λ_i|`.
    pub fn spectral_radius(&self) -> f64 {
        self.lambdas.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Total mass `Σ_i b_i²` (equals `‖b‖²` for measures extracted from an
    /// operator/vector pair).
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Semi-inner product `⟨p, q⟩ = Σ_i b_i² p(λ_i) q(λ_i)`.
    pub fn inner_product(&self, p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| w * w * p(l) * q(l))
            .sum()
    }

    /// Semi-norm squared `‖p‖² = Σ_i b_i² p(λ_i)²`.
    pub fn norm_sq(&self, p: impl Fn(f64) -> f64) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| {
                let v = p(l);
                w * w * v * v
            })
            .sum()
    }

    /// Indices of atoms whose weight is numerically zero at `weight_tol`.
    pub fn zero_weight_atoms(&self, weight_tol: f64) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() <= weight_tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Diagonal realization `(A, b)` with `A = diag(λ)` and `b` the weight
    /// vector; conjugate gradients on this pair reproduces the polynomial
    /// dynamics of the measure exactly.
    pub fn dense_system(&self) -> (SymmetricOperator, DVector<f64>) {
        (
            SymmetricOperator::from_diagonal(&self.lambdas),
            DVector::from_column_slice(&self.weights),
        )
    }

    /// Write the `lambda,weight` CSV form with full-precision floats.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "lambda,weight")?;
        for (&l, &w) in self.lambdas.iter().zip(&self.weights) {
            writeln!(out, "{},{}", fmt_f64(l), fmt_f64(w))?;
        }
        Ok(())
    }

    /// Read the CSV form produced by [`Self::write_csv`] (or hand-written
    /// files). Rows may appear in any order; an optional third column `part`
    /// with values `head`/`tail` turns the file into a split measure, in
    /// which case use [`SplitSpectralMeasure::read_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let rows = read_rows(input)?;
        let (lambdas, weights): (Vec<f64>, Vec<f64>) =
            rows.into_iter().map(|r| (r.lambda, r.weight)).unzip();
        sorted_measure(lambdas, weights)
    }
}

/// One parsed CSV row.
struct Row {
    lambda: f64,
    weight: f64,
    part: Option<Part>,
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Part {
    Head,
    Tail,
}

fn read_rows<R: BufRead>(input: R) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::EmptyMeasure),
    };
    let header = header.trim();
    let has_part = match header {
        "lambda,weight" => false,
        "lambda,weight,part" => true,
        other => {
            return Err(Error::CsvParse {
                line: 1,
                msg: format!("unexpected header {other:?}"),
            })
        }
    };
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if has_part { 3 } else { 2 };
        if fields.len() != expected {
            return Err(Error::CsvParse {
                line: lineno,
                msg: format!("expected {expected} fields, got {}", fields.len()),
            });
        }
        let part = if has_part {
            Some(match fields[2].trim() {
                "head" => Part::Head,
                "tail" => Part::Tail,
                other => {
                    return Err(Error::CsvParse {
                        line: lineno,
                        msg: format!("part must be head or tail, got {other:?}"),
                    })
                }
            })
        } else {
            None
        };
        rows.push(Row {
            lambda: parse_f64_field(fields[0], lineno)?,
            weight: parse_f64_field(fields[1], lineno)?,
            part,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    Ok(rows)
}

fn sorted_measure(mut lambdas: Vec<f64>, mut weights: Vec<f64>) -> Result<SpectralMeasure> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[j].partial_cmp(&lambdas[i]).unwrap());
    lambdas = order.iter().map(|&i| lambdas[i]).collect();
    weights = order.iter().map(|&i| weights[i]).collect();
    SpectralMeasure::new(lambdas, weights)
}

/// Number of atoms carrying weight: `#{i : |b_i| > weight_tol}`.
///
/// For a measure extracted from `(A, b)` this is the grade of `b` with
/// respect to `A` — the dimension at which the Krylov spaces stop growing and
/// the degree at which the monic orthogonal polynomial family terminates.
pub fn grade(measure: &SpectralMeasure, weight_tol: f64) -> usize {
    measure
        .weights
        .iter()
        .filter(|w| w.abs() > weight_tol)
        .count()
}

/// Extract the spectral measure of `(op, b)`.
///
/// Eigenvalues closer than `1e-9 · max(1, spectral radius)` are merged into a
/// single atom whose weight is the norm of the projection of `b` onto the
/// merged eigenspace, so `Σ_i b_i² = ‖b‖²` exactly up to roundoff. Zero-weight
/// atoms are retained; [`grade`] and the recurrence ignore them.
pub fn measure_from_operator(op: &SymmetricOperator, b: &DVector<f64>) -> Result<SpectralMeasure> {
    if b.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            context: "operator and vector",
            expected: op.dim(),
            got: b.len(),
        });
    }
    let eig = symmetric_eigendecompose(op)?;
    let coeffs = eig.eigenvectors.transpose() * b;
    let tol = MERGE_REL_TOL * eig.spectral_radius().max(1.0);

    let mut lambdas = Vec::new();
    let mut weights = Vec::new();
    let n = eig.eigenvalues.len();
    let mut i = 0;
    while i < n {
        // Group eigenvalues by chaining the merge tolerance between neighbors
        // (sorted nonincreasing, so neighbors are the only candidates).
        let mut j = i + 1;
        while j < n && (eig.eigenvalues[j - 1] - eig.eigenvalues[j]).abs() <= tol {
            j += 1;
        }
        let mass: f64 = (i..j).map(|k| coeffs[k] * coeffs[k]).sum();
        let mean: f64 = (i..j).map(|k| eig.eigenvalues[k]).sum::<f64>() / (j - i) as f64;
        lambdas.push(mean);
        weights.push(mass.sqrt());
        i = j;
    }
    SpectralMeasure::new(lambdas, weights)
}

/// A spectral measure with a designated positive-definite head.
///
/// Invariants: the head is nonempty with `λ_d > 0`, every tail atom lies
/// strictly below `λ_d`, and the tail (possibly empty) is itself strictly
/// decreasing.
#[derive(Debug, Clone)]
pub struct SplitSpectralMeasure {
    head: SpectralMeasure,
    tail: Option<SpectralMeasure>,
}

impl SplitSpectralMeasure {
    pub fn new(head: SpectralMeasure, tail: Option<SpectralMeasure>) -> Result<Self> {
        if head.lambda_min() <= 0.0 {
            return Err(Error::InvalidSplit {
                reason: format!(
                    "head must be positive definite; smallest head atom is {:.6e}",
                    head.lambda_min()
                ),
            });
        }
        if let Some(t) = &tail {
            if t.lambda_max() >= head.lambda_min() {
                return Err(Error::InvalidSplit {
                    reason: format!(
                        "tail atom {:.6e} is not strictly below the head minimum {:.6e}",
                        t.lambda_max(),
                        head.lambda_min()
                    ),
                });
            }
        }
        Ok(Self { head, tail })
    }

    pub fn head(&self) -> &SpectralMeasure {
        &self.head
    }

    pub fn tail_len(&self) -> usize {
        self.tail.as_ref().map_or(0, |t| t.len())
    }

    pub fn tail_lambdas(&self) -> &[f64] {
        self.tail.as_ref().map_or(&[], |t| t.lambdas())
    }

    pub fn tail_weights(&self) -> &[f64] {
        self.tail.as_ref().map_or(&[], |t| t.weights())
    }

    /// Smallest head eigenvalue `λ_d`.
    pub fn lambda_d(&self) -> f64 {
        self.head.lambda_min()
    }

    /// Largest tail magnitude `ε = max_j |λ_j|` (zero for an empty tail).
    pub fn tail_eps(&self) -> f64 {
        self.tail_lambdas().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `‖B‖_F² = Σ_j b_j²` over the tail.
    pub fn tail_frobenius_sq(&self) -> f64 {
        self.tail_weights().iter().map(|w| w * w).sum()
    }

    /// The full (head plus tail) measure, still strictly decreasing because
    /// every tail atom lies below the head.
    pub fn full(&self) -> SpectralMeasure {
        let mut lambdas = self.head.lambdas().to_vec();
        let mut weights = self.head.weights().to_vec();
        lambdas.extend_from_slice(self.tail_lambdas());
        weights.extend_from_slice(self.tail_weights());
        SpectralMeasure::new(lambdas, weights).expect("split invariants imply a valid full measure")
    }

    /// Write the three-column CSV form (`lambda,weight,part`).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "lambda,weight,part")?;
        for (&l, &w) in self.head.lambdas().iter().zip(self.head.weights()) {
            writeln!(out, "{},{},head", fmt_f64(l), fmt_f64(w))?;
        }
        for (&l, &w) in self.tail_lambdas().iter().zip(self.tail_weights()) {
            writeln!(out, "{},{},tail", fmt_f64(l), fmt_f64(w))?;
        }
        Ok(())
    }

    /// Read a three-column CSV. Files without a `part` column are rejected;
    /// use [`SpectralMeasure::read_csv`] for plain measures.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let rows = read_rows(input)?;
        if rows.iter().any(|r| r.part.is_none()) {
            return Err(Error::InvalidSplit {
                reason: "file has no part column; cannot build a head/tail split".into(),
            });
        }
        let mut head_l = Vec::new();
        let mut head_w = Vec::new();
        let mut tail_l = Vec::new();
        let mut tail_w = Vec::new();
        for r in rows {
            match r.part.unwrap() {
                Part::Head => {
                    head_l.push(r.lambda);
                    head_w.push(r.weight);
                }
                Part::Tail => {
                    tail_l.push(r.lambda);
                    tail_w.push(r.weight);
                }
            }
        }
        if head_l.is_empty() {
            return Err(Error::InvalidSplit {
                reason: "split file has no head rows".into(),
            });
        }
        let head = sorted_measure(head_l, head_w)?;
        let tail = if tail_l.is_empty() {
            None
        } else {
            Some(sorted_measure(tail_l, tail_w)?)
        };
        Self::new(head, tail)
    }

    /// Reference instance used throughout the experiment suite: a tight,
    /// well-conditioned head (ten eigenvalues evenly spaced in
    /// `[0.95, 1.05]`, equal weights normalized to unit head mass) plus a
    /// single zero eigenvalue carrying weight `1e-3`.
    ///
    /// Conjugate gradients on the full system converges fast in residual yet
    /// its late iterates blow up, which is exactly the regime the coupling
    /// analysis describes.
    pub fn clustered_with_zero_tail() -> Self {
        let m = 10;
        let mut lambdas: Vec<f64> = (0..m)
            .map(|i| 0.95 + 0.1 * i as f64 / (m - 1) as f64)
            .collect();
        lambdas.reverse();
        let w = 1.0 / (m as f64).sqrt();
        let head = SpectralMeasure::new(lambdas, vec![w; m]).unwrap();
        let tail = SpectralMeasure::new(vec![0.0], vec![1e-3]).unwrap();
        Self::new(head, Some(tail)).unwrap()
    }

    /// Draw a random split with a spread positive head and a tiny tail:
    /// head size 3–8 with eigenvalues in `[0.5, 2.5]` and weights in
    /// `[0.3, 1]`; tail size 1–3 with `|λ| ≤ 1e-3` and weights in
    /// `[1e-3, 1e-2]`.
    pub fn sample_random<R: rand::Rng>(rng: &mut R) -> Self {
        let m = rng.random_range(3..=8);
        let mut lambdas: Vec<f64> = (0..m)
            .map(|i| 0.5 + 2.0 * (i as f64 + 0.1 + 0.8 * rng.random_range(0.0..1.0)) / m as f64)
            .collect();
        lambdas.reverse();
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..1.0)).collect();
        let head = SpectralMeasure::new(lambdas, weights).unwrap();

        let t = rng.random_range(1..=3usize);
        // Disjoint sub-intervals of [-1e-3, 1e-3] keep tail atoms distinct.
        let mut tail_l: Vec<f64> = (0..t)
            .map(|i| -1e-3 + 2e-3 * (i as f64 + 0.1 + 0.8 * rng.random_range(0.0..1.0)) / t as f64)
            .collect();
        tail_l.reverse();
        let tail_w: Vec<f64> = (0..t).map(|_| rng.random_range(1e-3..1e-2)).collect();
        let tail = SpectralMeasure::new(tail_l, tail_w).unwrap();
        Self::new(head, Some(tail)).unwrap()
    }
}
