//! Dense real linear algebra over density matrices: construction, validation,
//! similarity, entropy, composition, and partial trace.
//!
//! All state is real-valued (`f64`) and stored row-major. Word states are
//! small (d = 8 by default), so operations are written as plain loops;
//! symmetric eigendecompositions are delegated to `nalgebra`. Validation is
//! an explicit call ([`DensityMatrix::validate`]), not an implicit cost on
//! every operation.

use nalgebra::DMatrix;
use thiserror::Error;

/// Max off-diagonal asymmetry tolerated by [`DensityMatrix::validate`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Max trace deviation from 1 tolerated by [`DensityMatrix::validate`].
pub const TRACE_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated by [`DensityMatrix::validate`].
pub const PSD_EIG_TOL: f64 = -1e-10;
/// Default eigenvalue floor applied before refactorization.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;
/// Largest composite dimension [`tensor_product`] will build.
pub const TENSOR_DIM_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("mixture is empty")]
    EmptyMixture,
    #[error("mixture probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("state vector norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("state vector is all zero")]
    ZeroVector,
    #[error("cholesky factor has no nonzero entry")]
    ZeroFactor,
    #[error("cholesky factor diagonal entry {0} is negative")]
    NegativeDiagonal(f64),
    #[error("matrix is not symmetric (max deviation {0})")]
    NotSymmetric(f64),
    #[error("trace deviates from 1 by {0}")]
    TraceDeviation(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("composite dimension {0} exceeds cap {1}")]
    SizeCapExceeded(usize, usize),
    #[error("subsystem dims ({0}, {1}) do not factor matrix dimension {2}")]
    BadSubsystemDims(usize, usize, usize),
    #[error("mixture weights are all zero")]
    ZeroWeights,
    #[error("negative mixture weight {0}")]
    NegativeWeight(f64),
}

/// Which subsystem [`partial_trace`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

/// Logarithm base for entropy values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// A d×d real symmetric positive-semidefinite matrix with unit trace: the
/// semantic state of a linguistic element.
///
/// Operations in this module produce matrices satisfying the invariants up to
/// floating-point error; [`validate`](Self::validate) checks them explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl DensityMatrix {
    /// Wraps row-major entries without validating them.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), dim * dim, "entry count must be dim^2");
        assert!(dim > 0, "dimension must be positive");
        Self { dim, entries }
    }

    /// The maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0 / dim as f64;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = sym_eigen(self.dim, &self.entries);
        vals
    }

    /// Largest elementwise deviation from `other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks symmetry (≤ 1e-12), trace (|Tr − 1| ≤ 1e-12), and positive
    /// semidefiniteness (min eigenvalue ≥ −1e-10).
    pub fn validate(&self) -> Result<(), LinalgError> {
        let mut max_asym = 0.0f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                max_asym = max_asym.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        if max_asym > SYMMETRY_TOL {
            return Err(LinalgError::NotSymmetric(max_asym));
        }
        let trace_dev = (self.trace() - 1.0).abs();
        if trace_dev > TRACE_TOL {
            return Err(LinalgError::TraceDeviation(trace_dev));
        }
        let min_eig = self
            .eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < PSD_EIG_TOL {
            return Err(LinalgError::NotPsd(min_eig));
        }
        Ok(())
    }
}

/// A unit-norm real vector: a pure state in the sememe basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureStateVector {
    amplitudes: Vec<f64>,
}

impl PureStateVector {
    /// Builds from amplitudes; the Euclidean norm must be 1 within 1e-12.
    pub fn new(amplitudes: Vec<f64>) -> Result<Self, LinalgError> {
        if amplitudes.is_empty() {
            return Err(LinalgError::ZeroVector);
        }
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(LinalgError::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(mut amplitudes: Vec<f64>) -> Result<Self, LinalgError> {
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LinalgError::ZeroVector);
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Ok(Self { amplitudes })
    }

    /// The k-th standard basis vector of the given dimension.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim);
        let mut amplitudes = vec![0.0; dim];
        amplitudes[k] = 1.0;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// One branch of a statistical mixture: a pure state and its probability.
#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub probability: f64,
    pub state: PureStateVector,
}

/// Lower-triangular d×d factor with nonnegative diagonal, stored packed
/// row-major (d(d+1)/2 scalars). The trainable parametrization of a
/// [`DensityMatrix`]: ρ = LLᵀ / Tr(LLᵀ).
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

/// Packed length of the lower triangle for a given dimension.
pub const fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index of entry (i, j), j ≤ i, in the packed row-major lower triangle.
#[inline]
pub const fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

impl CholeskyFactor {
    /// Builds from packed entries; diagonal entries must be ≥ 0.
    pub fn new(dim: usize, lower: Vec<f64>) -> Result<Self, LinalgError> {
        assert_eq!(lower.len(), packed_len(dim), "packed length must match dim");
        for i in 0..dim {
            let d = lower[packed_index(i, i)];
            if d < 0.0 {
                return Err(LinalgError::NegativeDiagonal(d));
            }
        }
        Ok(Self { dim, lower })
    }

    pub fn identity(dim: usize) -> Self {
        let mut lower = vec![0.0; packed_len(dim)];
        for i in 0..dim {
            lower[packed_index(i, i)] = 1.0;
        }
        Self { dim, lower }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Mutable packed entries. Callers that can drive diagonal entries
    /// negative must follow up with [`clamp_diagonal`](Self::clamp_diagonal).
    pub fn lower_mut(&mut self) -> &mut [f64] {
        &mut self.lower
    }

    /// Entry (i, j) with j ≤ i.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[packed_index(i, j)]
    }

    /// Projects the diagonal back onto the nonnegative half-line.
    pub fn clamp_diagonal(&mut self) {
        for i in 0..self.dim {
            let idx = packed_index(i, i);
            if self.lower[idx] < 0.0 {
                self.lower[idx] = 0.0;
            }
        }
    }
}

/// Builds Σ pᵢ |ψᵢ⟩⟨ψᵢ| from mixture components.
///
/// Probabilities must each lie in [0, 1] and sum to 1 within 1e-9; all states
/// must share a dimension.
pub fn density_from_mixture(components: &[MixtureComponent]) -> Result<DensityMatrix, LinalgError> {
    let first = components.first().ok_or(LinalgError::EmptyMixture)?;
    let dim = first.state.dim();
    let mut sum_p = 0.0;
    for c in components {
        if c.state.dim() != dim {
            return Err(LinalgError::DimensionMismatch(dim, c.state.dim()));
        }
        if !(0.0..=1.0 + 1e-12).contains(&c.probability) {
            return Err(LinalgError::InvalidProbability(c.probability));
        }
        sum_p += c.probability;
    }
    if (sum_p - 1.0).abs() > 1e-9 {
        return Err(LinalgError::ProbabilitySum(sum_p));
    }
    let mut entries = vec![0.0; dim * dim];
    for c in components {
        let amps = c.state.amplitudes();
        for i in 0..dim {
            let pi = c.probability * amps[i];
            if pi == 0.0 {
                continue;
            }
            for j in 0..dim {
                entries[i * dim + j] += pi * amps[j];
            }
        }
    }
    Ok(DensityMatrix::from_entries(dim, entries))
}

/// Maps a factor to its density matrix: LLᵀ / Tr(LLᵀ).
///
/// Fails only on an all-zero factor, where the normalization is undefined.
pub fn cholesky_to_density(factor: &CholeskyFactor) -> Result<DensityMatrix, LinalgError> {
    let dim = factor.dim();
    let (gram, trace) = gram_of_packed(dim, factor.lower());
    if trace == 0.0 {
        return Err(LinalgError::ZeroFactor);
    }
    let entries = gram.into_iter().map(|x| x / trace).collect();
    Ok(DensityMatrix::from_entries(dim, entries))
}

/// LLᵀ of a packed lower triangle, with its trace (= sum of squared entries).
pub(crate) fn gram_of_packed(dim: usize, lower: &[f64]) -> (Vec<f64>, f64) {
    let mut gram = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..=j {
                s += lower[packed_index(i, k)] * lower[packed_index(j, k)];
            }
            gram[i * dim + j] = s;
            gram[j * dim + i] = s;
        }
    }
    let trace = lower.iter().map(|x| x * x).sum();
    (gram, trace)
}

/// Refactors a density matrix into a Cholesky factor, flooring eigenvalues at
/// `eig_floor` first so rank-deficient inputs factor cleanly.
///
/// Accepts slightly noisy imports: symmetry gate 1e-8, trace gate 1e-6.
pub fn density_to_cholesky(
    rho: &DensityMatrix,
    eig_floor: f64,
) -> Result<CholeskyFactor, LinalgError> {
    assert!(eig_floor >= 0.0, "eigenvalue floor must be nonnegative");
    let dim = rho.dim();
    let mut max_asym = 0.0f64;
    for i in 0..dim {
        for j in (i + 1)..dim {
            max_asym = max_asym.max((rho.get(i, j) - rho.get(j, i)).abs());
        }
    }
    if max_asym > 1e-8 {
        return Err(LinalgError::NotSymmetric(max_asym));
    }
    let trace_dev = (rho.trace() - 1.0).abs();
    if trace_dev > 1e-6 {
        return Err(LinalgError::TraceDeviation(trace_dev));
    }

    let (vals, vecs) = sym_eigen(dim, rho.entries());
    let floored: Vec<f64> = vals.iter().map(|&v| v.max(eig_floor)).collect();
    let total: f64 = floored.iter().sum();

    // V diag(λ/total) Vᵀ, positive definite whenever eig_floor > 0.
    let mut rebuilt = vec![0.0; dim * dim];
    for (k, &lam) in floored.iter().enumerate() {
        let w = lam / total;
        for i in 0..dim {
            let vi = vecs[(i, k)];
            if vi == 0.0 {
                continue;
            }
            for j in 0..dim {
                rebuilt[i * dim + j] += w * vi * vecs[(j, k)];
            }
        }
    }

    let lower = factor_lower(dim, &rebuilt);
    CholeskyFactor::new(dim, lower)
}

/// Standard Cholesky factorization of a symmetric PSD matrix, tolerant of
/// exactly-zero pivots on rank-deficient inputs.
fn factor_lower(dim: usize, a: &[f64]) -> Vec<f64> {
    let mut lower = vec![0.0; packed_len(dim)];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= lower[packed_index(i, k)] * lower[packed_index(j, k)];
            }
            if i == j {
                lower[packed_index(i, i)] = s.max(0.0).sqrt();
            } else {
                let pivot = lower[packed_index(j, j)];
                lower[packed_index(i, j)] = if pivot > 0.0 { s / pivot } else { 0.0 };
            }
        }
    }
    lower
}

/// Trace inner product Tr(ρσ), clamped to [0, 1].
///
/// For symmetric PSD trace-one inputs this lies in [0, 1] and coincides with
/// Uhlmann fidelity when either argument is pure; it is the similarity used
/// in training.
pub fn hs_similarity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, LinalgError> {
    if rho.dim() != sigma.dim() {
        return Err(LinalgError::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    Ok(trace_inner(rho.entries(), sigma.entries()).clamp(0.0, 1.0))
}

/// Σᵢⱼ aᵢⱼ bᵢⱼ — equals Tr(AB) for symmetric matrices.
pub(crate) fn trace_inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))², in [0, 1].
///
/// Evaluated as the squared trace norm ‖√σ √ρ‖₁² via singular values, which
/// sidesteps the square roots of noise-scale eigenvalues the direct form
/// produces on rank-deficient inputs.
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, LinalgError> {
    let dim = rho.dim();
    if dim != sigma.dim() {
        return Err(LinalgError::DimensionMismatch(dim, sigma.dim()));
    }
    let product = matrix_sqrt(dim, sigma.entries()) * matrix_sqrt(dim, rho.entries());
    let trace_norm: f64 = product.singular_values().iter().sum();
    Ok((trace_norm * trace_norm).clamp(0.0, 1.0))
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues
/// clamped to 0).
fn matrix_sqrt(dim: usize, entries: &[f64]) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(dim, entries);
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    for (k, &lam) in vals.iter().enumerate() {
        let root = lam.max(0.0).sqrt();
        if root == 0.0 {
            continue;
        }
        for i in 0..dim {
            for j in 0..dim {
                out[(i, j)] += root * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    out
}

/// Von Neumann entropy S(ρ) = −Σ λᵢ log λᵢ with eigenvalues clamped to
/// [0, 1] and 0·log 0 = 0. Nonnegative, at most log d.
pub fn von_neumann_entropy(rho: &DensityMatrix, base: LogBase) -> f64 {
    let (vals, _) = sym_eigen(rho.dim(), rho.entries());
    let nats: f64 = vals
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    let s = match base {
        LogBase::Natural => nats,
        LogBase::Two => nats / std::f64::consts::LN_2,
    };
    s.max(0.0)
}

/// Kronecker product ρ ⊗ σ: the composition of non-interacting elements.
pub fn tensor_product(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
) -> Result<DensityMatrix, LinalgError> {
    let (d1, d2) = (rho.dim(), sigma.dim());
    let dim = d1 * d2;
    if dim > TENSOR_DIM_CAP {
        return Err(LinalgError::SizeCapExceeded(dim, TENSOR_DIM_CAP));
    }
    let mut entries = vec![0.0; dim * dim];
    for i1 in 0..d1 {
        for j1 in 0..d1 {
            let r = rho.get(i1, j1);
            if r == 0.0 {
                continue;
            }
            for i2 in 0..d2 {
                for j2 in 0..d2 {
                    entries[(i1 * d2 + i2) * dim + (j1 * d2 + j2)] = r * sigma.get(i2, j2);
                }
            }
        }
    }
    Ok(DensityMatrix::from_entries(dim, entries))
}

/// Traces out one subsystem of a bipartite state with dims (d₁, d₂).
pub fn partial_trace(
    rho: &DensityMatrix,
    dims: (usize, usize),
    keep: Keep,
) -> Result<DensityMatrix, LinalgError> {
    let (d1, d2) = dims;
    if d1 * d2 != rho.dim() {
        return Err(LinalgError::BadSubsystemDims(d1, d2, rho.dim()));
    }
    match keep {
        Keep::First => {
            let mut entries = vec![0.0; d1 * d1];
            for i in 0..d1 {
                for j in 0..d1 {
                    let mut s = 0.0;
                    for b in 0..d2 {
                        s += rho.get(i * d2 + b, j * d2 + b);
                    }
                    entries[i * d1 + j] = s;
                }
            }
            Ok(DensityMatrix::from_entries(d1, entries))
        }
        Keep::Second => {
            let mut entries = vec![0.0; d2 * d2];
            for a in 0..d2 {
                for b in 0..d2 {
                    let mut s = 0.0;
                    for i in 0..d1 {
                        s += rho.get(i * d2 + a, i * d2 + b);
                    }
                    entries[a * d2 + b] = s;
                }
            }
            Ok(DensityMatrix::from_entries(d2, entries))
        }
    }
}

/// Convex combination Σ wᵢ ρᵢ / Σ wᵢ of density matrices.
///
/// Weights must be nonnegative and not all zero; they are normalized
/// internally.
pub fn mixture_average(weighted: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix, LinalgError> {
    let (_, first) = weighted.first().ok_or(LinalgError::EmptyMixture)?;
    let dim = first.dim();
    let mut total = 0.0;
    for (w, m) in weighted {
        if m.dim() != dim {
            return Err(LinalgError::DimensionMismatch(dim, m.dim()));
        }
        if *w < 0.0 {
            return Err(LinalgError::NegativeWeight(*w));
        }
        total += w;
    }
    if total == 0.0 {
        return Err(LinalgError::ZeroWeights);
    }
    // Accumulate Σ wᵢ ρᵢ first and divide once, so mixtures of identical
    // content normalize identically.
    let mut entries = vec![0.0; dim * dim];
    for (w, m) in weighted {
        if *w == 0.0 {
            continue;
        }
        for (acc, x) in entries.iter_mut().zip(m.entries()) {
            *acc += w * x;
        }
    }
    for x in &mut entries {
        *x /= total;
    }
    Ok(DensityMatrix::from_entries(dim, entries))
}

/// Symmetric eigendecomposition; returns eigenvalues in descending order with
/// the matching eigenvectors as columns.
pub(crate) fn sym_eigen(dim: usize, entries: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = DMatrix::from_row_slice(dim, dim, entries);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::<f64>::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..dim {
            vecs[(i, col)] = eig.eigenvectors[(i, k)];
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_factor(rng: &mut ChaCha8Rng, dim: usize) -> CholeskyFactor {
        let mut lower: Vec<f64> = (0..packed_len(dim)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..dim {
            let idx = packed_index(i, i);
            lower[idx] = lower[idx].abs();
        }
        CholeskyFactor::new(dim, lower).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
        cholesky_to_density(&random_factor(rng, dim)).unwrap()
    }

    fn three_sense_diag() -> DensityMatrix {
        let comps = vec![
            MixtureComponent { probability: 6.0 / 40.0, state: PureStateVector::basis(3, 0) },
            MixtureComponent { probability: 25.0 / 40.0, state: PureStateVector::basis(3, 1) },
            MixtureComponent { probability: 9.0 / 40.0, state: PureStateVector::basis(3, 2) },
        ];
        density_from_mixture(&comps).unwrap()
    }

    #[test]
    fn mixture_of_orthonormal_states_is_diagonal() {
        let rho = three_sense_diag();
        let expect = [0.15, 0.625, 0.225];
        for i in 0..3 {
            assert!((rho.get(i, i) - expect[i]).abs() <= 1e-12);
            for j in 0..3 {
                if i != j {
                    assert_eq!(rho.get(i, j), 0.0);
                }
            }
        }
        rho.validate().unwrap();
    }

    #[test]
    fn single_pure_component() {
        let comps = vec![MixtureComponent { probability: 1.0, state: PureStateVector::basis(4, 0) }];
        let rho = density_from_mixture(&comps).unwrap();
        assert_eq!(rho.get(0, 0), 1.0);
        assert_eq!(rho.trace(), 1.0);
    }

    #[test]
    fn two_block_mixture() {
        // p = (1/6, 5/6) over (e0+e2)/√2 and (e4+e5)/√2 in dim 6.
        let s1 = PureStateVector::normalized(vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let s2 = PureStateVector::normalized(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let rho = density_from_mixture(&[
            MixtureComponent { probability: 1.0 / 6.0, state: s1 },
            MixtureComponent { probability: 5.0 / 6.0, state: s2 },
        ])
        .unwrap();
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert!((rho.get(i, j) - 1.0 / 12.0).abs() <= 1e-12);
        }
        for (i, j) in [(4, 4), (4, 5), (5, 4), (5, 5)] {
            assert!((rho.get(i, j) - 5.0 / 12.0).abs() <= 1e-12);
        }
        assert_eq!(rho.get(1, 1), 0.0);
        rho.validate().unwrap();
    }

    #[test]
    fn mixture_rejects_bad_probability_sum() {
        let comps = vec![MixtureComponent { probability: 0.5, state: PureStateVector::basis(2, 0) }];
        assert!(matches!(
            density_from_mixture(&comps),
            Err(LinalgError::ProbabilitySum(_))
        ));
    }

    #[test]
    fn mixture_rejects_dim_mismatch() {
        let comps = vec![
            MixtureComponent { probability: 0.5, state: PureStateVector::basis(2, 0) },
            MixtureComponent { probability: 0.5, state: PureStateVector::basis(3, 0) },
        ];
        assert!(matches!(
            density_from_mixture(&comps),
            Err(LinalgError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn identity_factor_gives_maximally_mixed() {
        let rho = cholesky_to_density(&CholeskyFactor::identity(8)).unwrap();
        assert_eq!(rho.max_abs_diff(&DensityMatrix::maximally_mixed(8)), 0.0);
    }

    #[test]
    fn factor_scale_is_normalized_away() {
        let mut lower = vec![0.0; packed_len(4)];
        lower[0] = 3.0;
        let rho = cholesky_to_density(&CholeskyFactor::new(4, lower).unwrap()).unwrap();
        assert_eq!(rho.get(0, 0), 1.0);
        assert_eq!(rho.trace(), 1.0);
    }

    #[test]
    fn zero_factor_rejected() {
        let f = CholeskyFactor::new(3, vec![0.0; packed_len(3)]).unwrap();
        assert!(matches!(cholesky_to_density(&f), Err(LinalgError::ZeroFactor)));
    }

    #[test]
    fn negative_diagonal_rejected() {
        let mut lower = vec![0.0; packed_len(2)];
        lower[packed_index(1, 1)] = -0.5;
        assert!(matches!(
            CholeskyFactor::new(2, lower),
            Err(LinalgError::NegativeDiagonal(_))
        ));
    }

    #[test]
    fn refactorization_round_trip_diagonal() {
        let rho = three_sense_diag();
        let l = density_to_cholesky(&rho, DEFAULT_EIG_FLOOR).unwrap();
        let back = cholesky_to_density(&l).unwrap();
        assert!(rho.max_abs_diff(&back) <= 1e-10);
    }

    #[test]
    fn refactorization_round_trip_identity() {
        let rho = DensityMatrix::maximally_mixed(8);
        let l = density_to_cholesky(&rho, DEFAULT_EIG_FLOOR).unwrap();
        let back = cholesky_to_density(&l).unwrap();
        assert!(rho.max_abs_diff(&back) <= 1e-12);
    }

    #[test]
    fn refactorization_round_trip_rank_deficient() {
        // Rank-2 state needs the eigenvalue floor before factoring.
        let s1 = PureStateVector::normalized(vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let s2 = PureStateVector::normalized(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let rho = density_from_mixture(&[
            MixtureComponent { probability: 1.0 / 6.0, state: s1 },
            MixtureComponent { probability: 5.0 / 6.0, state: s2 },
        ])
        .unwrap();
        let l = density_to_cholesky(&rho, DEFAULT_EIG_FLOOR).unwrap();
        let back = cholesky_to_density(&l).unwrap();
        assert!(rho.max_abs_diff(&back) <= 1e-8);
    }

    #[test]
    fn refactorization_rejects_asymmetry() {
        let mut entries = DensityMatrix::maximally_mixed(3).entries().to_vec();
        entries[1] += 1e-3;
        let rho = DensityMatrix::from_entries(3, entries);
        assert!(matches!(
            density_to_cholesky(&rho, 0.0),
            Err(LinalgError::NotSymmetric(_))
        ));
    }

    #[test]
    fn refactorization_rejects_trace_deviation() {
        let mut entries = DensityMatrix::maximally_mixed(3).entries().to_vec();
        entries[0] += 1e-3;
        let rho = DensityMatrix::from_entries(3, entries);
        assert!(matches!(
            density_to_cholesky(&rho, 0.0),
            Err(LinalgError::TraceDeviation(_))
        ));
    }

    #[test]
    fn hs_similarity_pure_states() {
        let a = density_from_mixture(&[MixtureComponent {
            probability: 1.0,
            state: PureStateVector::basis(4, 1),
        }])
        .unwrap();
        let b = density_from_mixture(&[MixtureComponent {
            probability: 1.0,
            state: PureStateVector::basis(4, 2),
        }])
        .unwrap();
        assert_eq!(hs_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(hs_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn hs_similarity_printed_diagonals() {
        let rho = three_sense_diag();
        let sigma = DensityMatrix::from_entries(
            3,
            vec![0.285, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.465],
        );
        // Oracle: direct elementwise product-sum over the diagonals.
        let expect = 0.15 * 0.285 + 0.625 * 0.25 + 0.225 * 0.465;
        assert_relative_eq!(hs_similarity(&rho, &sigma).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn hs_similarity_symmetric_and_purity_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_density(&mut rng, 6);
            let b = random_density(&mut rng, 6);
            let ab = hs_similarity(&a, &b).unwrap();
            let ba = hs_similarity(&b, &a).unwrap();
            assert_eq!(ab, ba);
            let purity = hs_similarity(&a, &a).unwrap();
            assert!(purity >= 1.0 / 6.0 - 1e-12 && purity <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn hs_similarity_rejects_dim_mismatch() {
        let a = DensityMatrix::maximally_mixed(2);
        let b = DensityMatrix::maximally_mixed(3);
        assert!(hs_similarity(&a, &b).is_err());
    }

    #[test]
    fn uhlmann_self_fidelity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rho = random_density(&mut rng, 5);
            assert!((uhlmann_fidelity(&rho, &rho).unwrap() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn uhlmann_commuting_closed_form() {
        let rho = DensityMatrix::from_entries(2, vec![0.5, 0.0, 0.0, 0.5]);
        let sigma = DensityMatrix::from_entries(2, vec![1.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(uhlmann_fidelity(&rho, &sigma).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn uhlmann_pure_pair_equals_overlap_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sa = PureStateVector::normalized(a).unwrap();
            let sb = PureStateVector::normalized(b).unwrap();
            let overlap: f64 = sa
                .amplitudes()
                .iter()
                .zip(sb.amplitudes())
                .map(|(x, y)| x * y)
                .sum();
            let rho = density_from_mixture(&[MixtureComponent { probability: 1.0, state: sa }])
                .unwrap();
            let sigma = density_from_mixture(&[MixtureComponent { probability: 1.0, state: sb }])
                .unwrap();
            let f = uhlmann_fidelity(&rho, &sigma).unwrap();
            assert!((f - overlap * overlap).abs() <= 1e-10);
        }
    }

    #[test]
    fn entropy_of_pure_state_is_zero() {
        let rho = density_from_mixture(&[MixtureComponent {
            probability: 1.0,
            state: PureStateVector::basis(8, 3),
        }])
        .unwrap();
        assert!(von_neumann_entropy(&rho, LogBase::Natural).abs() <= 1e-12);
    }

    #[test]
    fn entropy_of_maximally_mixed() {
        let rho = DensityMatrix::maximally_mixed(8);
        assert!((von_neumann_entropy(&rho, LogBase::Natural) - 8.0f64.ln()).abs() <= 1e-12);
        assert!((von_neumann_entropy(&rho, LogBase::Two) - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn entropy_matches_direct_sum_on_diagonal() {
        let rho = three_sense_diag();
        let oracle: f64 = [0.15f64, 0.625, 0.225].iter().map(|p| -p * p.ln()).sum();
        assert!((von_neumann_entropy(&rho, LogBase::Natural) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn entropy_additive_on_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let a = random_density(&mut rng, 3);
            let b = random_density(&mut rng, 4);
            let prod = tensor_product(&a, &b).unwrap();
            let lhs = von_neumann_entropy(&prod, LogBase::Natural);
            let rhs = von_neumann_entropy(&a, LogBase::Natural)
                + von_neumann_entropy(&b, LogBase::Natural);
            assert!((lhs - rhs).abs() <= 1e-8);
        }
    }

    #[test]
    fn entropy_concavity_and_mixing_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let n = rng.gen_range(2..5);
            let parts: Vec<DensityMatrix> = (0..n).map(|_| random_density(&mut rng, 4)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let weighted: Vec<(f64, &DensityMatrix)> =
                weights.iter().copied().zip(parts.iter()).collect();
            let mixed = mixture_average(&weighted).unwrap();
            let s_mix = von_neumann_entropy(&mixed, LogBase::Natural);
            let avg_s: f64 = weights
                .iter()
                .zip(&parts)
                .map(|(w, p)| w * von_neumann_entropy(p, LogBase::Natural))
                .sum();
            let h_w: f64 = weights.iter().map(|w| -w * w.ln()).sum();
            assert!(s_mix >= avg_s - 1e-8, "concavity violated: {s_mix} < {avg_s}");
            assert!(
                s_mix <= avg_s + h_w + 1e-8,
                "mixing bound violated: {s_mix} > {avg_s} + {h_w}"
            );
        }
    }

    #[test]
    fn tensor_product_basis_case() {
        let a = DensityMatrix::from_entries(2, vec![1.0, 0.0, 0.0, 0.0]);
        let b = DensityMatrix::from_entries(2, vec![0.0, 0.0, 0.0, 1.0]);
        let prod = tensor_product(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (1, 1) { 1.0 } else { 0.0 };
                assert_eq!(prod.get(i, j), expect);
            }
        }
    }

    #[test]
    fn tensor_product_with_scalar_identity() {
        let rho = three_sense_diag();
        let one = DensityMatrix::from_entries(1, vec![1.0]);
        let prod = tensor_product(&rho, &one).unwrap();
        assert_eq!(prod.max_abs_diff(&rho), 0.0);
    }

    #[test]
    fn tensor_product_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = random_density(&mut rng, 3);
        let b = random_density(&mut rng, 3);
        let prod = tensor_product(&a, &b).unwrap();
        for i1 in 0..3 {
            for j1 in 0..3 {
                for i2 in 0..3 {
                    for j2 in 0..3 {
                        let expect = a.get(i1, j1) * b.get(i2, j2);
                        assert_eq!(prod.get(i1 * 3 + i2, j1 * 3 + j2), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_product_of_diagonal_word_states() {
        let a = three_sense_diag();
        let b = DensityMatrix::from_entries(
            3,
            vec![0.285, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.465],
        );
        let prod = tensor_product(&a, &b).unwrap();
        assert_eq!(prod.dim(), 9);
        // The composite diagonal is the outer product of the two diagonals.
        for i in 0..3 {
            for j in 0..3 {
                let expect = a.get(i, i) * b.get(j, j);
                assert_eq!(prod.get(i * 3 + j, i * 3 + j), expect);
            }
        }
        assert!((prod.trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tensor_product_factorizes_observable_traces() {
        // Tr((ρ⊗σ)(A⊗B)) = Tr(ρA)·Tr(σB) for symmetric test observables.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let random_symmetric = |rng: &mut ChaCha8Rng, d: usize| {
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..=i {
                    let x = rng.gen_range(-1.0..1.0);
                    m[i * d + j] = x;
                    m[j * d + i] = x;
                }
            }
            m
        };
        for _ in 0..20 {
            let rho = random_density(&mut rng, 3);
            let sigma = random_density(&mut rng, 4);
            let obs_a = random_symmetric(&mut rng, 3);
            let obs_b = random_symmetric(&mut rng, 4);
            let prod = tensor_product(&rho, &sigma).unwrap();
            let mut obs_ab = vec![0.0; 144];
            for i1 in 0..3 {
                for j1 in 0..3 {
                    for i2 in 0..4 {
                        for j2 in 0..4 {
                            obs_ab[(i1 * 4 + i2) * 12 + (j1 * 4 + j2)] =
                                obs_a[i1 * 3 + j1] * obs_b[i2 * 4 + j2];
                        }
                    }
                }
            }
            let lhs = trace_inner(prod.entries(), &obs_ab);
            let rhs = trace_inner(rho.entries(), &obs_a) * trace_inner(sigma.entries(), &obs_b);
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tensor_product_respects_cap() {
        let a = DensityMatrix::maximally_mixed(128);
        let b = DensityMatrix::maximally_mixed(64);
        assert!(matches!(
            tensor_product(&a, &b),
            Err(LinalgError::SizeCapExceeded(8192, TENSOR_DIM_CAP))
        ));
    }

    #[test]
    fn partial_trace_inverts_tensor_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let a = random_density(&mut rng, 3);
        let b = random_density(&mut rng, 4);
        let prod = tensor_product(&a, &b).unwrap();
        let ta = partial_trace(&prod, (3, 4), Keep::First).unwrap();
        let tb = partial_trace(&prod, (3, 4), Keep::Second).unwrap();
        assert!(ta.max_abs_diff(&a) <= 1e-12);
        assert!(tb.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn partial_trace_product_recovery_with_identity_block() {
        let rho = three_sense_diag();
        let id4 = DensityMatrix::maximally_mixed(4);
        let prod = tensor_product(&rho, &id4).unwrap();
        let back = partial_trace(&prod, (3, 4), Keep::First).unwrap();
        assert!(back.max_abs_diff(&rho) <= 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let rho = DensityMatrix::maximally_mixed(6);
        assert!(matches!(
            partial_trace(&rho, (4, 2), Keep::First),
            Err(LinalgError::BadSubsystemDims(4, 2, 6))
        ));
    }

    #[test]
    fn mixture_average_identity_and_symmetry() {
        let a = DensityMatrix::from_entries(2, vec![1.0, 0.0, 0.0, 0.0]);
        let b = DensityMatrix::from_entries(2, vec![0.0, 0.0, 0.0, 1.0]);
        let single = mixture_average(&[(1.0, &a)]).unwrap();
        assert_eq!(single.max_abs_diff(&a), 0.0);
        let even = mixture_average(&[(1.0, &a), (1.0, &b)]).unwrap();
        assert_eq!(even.max_abs_diff(&DensityMatrix::maximally_mixed(2)), 0.0);
    }

    #[test]
    fn mixture_average_rejects_degenerate_inputs() {
        assert!(matches!(mixture_average(&[]), Err(LinalgError::EmptyMixture)));
        let a = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            mixture_average(&[(0.0, &a)]),
            Err(LinalgError::ZeroWeights)
        ));
        assert!(matches!(
            mixture_average(&[(-1.0, &a)]),
            Err(LinalgError::NegativeWeight(_))
        ));
    }

    #[test]
    fn validate_flags_bad_matrices() {
        let asym = DensityMatrix::from_entries(2, vec![0.5, 1e-6, 0.0, 0.5]);
        assert!(matches!(asym.validate(), Err(LinalgError::NotSymmetric(_))));
        let off_trace = DensityMatrix::from_entries(2, vec![0.6, 0.0, 0.0, 0.5]);
        assert!(matches!(off_trace.validate(), Err(LinalgError::TraceDeviation(_))));
        let indef = DensityMatrix::from_entries(2, vec![1.1, 0.0, 0.0, -0.1]);
        assert!(matches!(indef.validate(), Err(LinalgError::NotPsd(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn factor_strategy(dim: usize) -> impl Strategy<Value = CholeskyFactor> {
            proptest::collection::vec(-1.0f64..1.0, packed_len(dim)).prop_map(move |mut lower| {
                for i in 0..dim {
                    let idx = packed_index(i, i);
                    lower[idx] = lower[idx].abs();
                }
                CholeskyFactor::new(dim, lower).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn factored_densities_are_valid(factor in factor_strategy(8)) {
                match cholesky_to_density(&factor) {
                    Ok(rho) => rho.validate().unwrap(),
                    Err(LinalgError::ZeroFactor) => {}
                    Err(e) => panic!("unexpected error: {e}"),
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn refactorization_round_trips(factor in factor_strategy(6)) {
                prop_assume!(factor.lower().iter().any(|&x| x != 0.0));
                let rho = cholesky_to_density(&factor).unwrap();
                let l = density_to_cholesky(&rho, DEFAULT_EIG_FLOOR).unwrap();
                let back = cholesky_to_density(&l).unwrap();
                prop_assert!(rho.max_abs_diff(&back) <= 1e-8);
            }

            #[test]
            fn uhlmann_commuting_pairs(
                p in proptest::collection::vec(0.01f64..1.0, 4),
                q in proptest::collection::vec(0.01f64..1.0, 4),
            ) {
                let ps: f64 = p.iter().sum();
                let qs: f64 = q.iter().sum();
                let mut re = vec![0.0; 16];
                let mut se = vec![0.0; 16];
                for i in 0..4 {
                    re[i * 4 + i] = p[i] / ps;
                    se[i * 4 + i] = q[i] / qs;
                }
                let rho = DensityMatrix::from_entries(4, re.clone());
                let sigma = DensityMatrix::from_entries(4, se.clone());
                let expect: f64 = (0..4)
                    .map(|i| (re[i * 4 + i] * se[i * 4 + i]).sqrt())
                    .sum::<f64>()
                    .powi(2);
                let f = uhlmann_fidelity(&rho, &sigma).unwrap();
                prop_assert!((f - expect).abs() <= 1e-10);
            }
        }
    }
}
