//! Exact small-scale statevector simulation of the density-matrix encoding:
//! purification on 2·log₂(d) qubits and swap-test fidelity estimation.
//!
//! State preparation is direct amplitude loading (gate-level synthesis of the
//! preparation rotations is out of scope); the swap test itself is simulated
//! gate by gate — Hadamard, controlled-SWAP of the two principal registers,
//! Hadamard — so the circuit output can be checked against the algebraic
//! identity P(0) = (1 + Tr(ρσ))/2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{
    density_from_mixture, partial_trace, sym_eigen, DensityMatrix, Keep, LinalgError,
    MixtureComponent, PureStateVector,
};
use crate::par::Parallelism;

/// Largest principal register simulated exactly (d ≤ 64).
pub const MAX_PRINCIPAL_QUBITS: usize = 6;

/// Shots per RNG shard in [`swap_test_sample`]; fixed so the counts are
/// identical whether shards run sequentially or in parallel.
const SHOT_SHARD: u64 = 1 << 14;

#[derive(Debug, Error)]
pub enum QcircError {
    #[error("dimension {0} is not a power of two ≥ 2")]
    PowerOfTwoRequired(usize),
    #[error("dimension {0} needs more than {MAX_PRINCIPAL_QUBITS} principal qubits")]
    TooLarge(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Real amplitudes over `num_qubits` qubits, unit norm. Qubit 0 is the most
/// significant bit of the amplitude index.
#[derive(Debug, Clone)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<f64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<f64>) -> Result<Self, QcircError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QcircError::PowerOfTwoRequired(len));
        }
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QcircError::Linalg(LinalgError::NotNormalized(norm)));
        }
        Ok(Self { num_qubits: len.trailing_zeros() as usize, amplitudes })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// Measurement tally of a repeated swap test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotResult {
    pub shots: u64,
    pub zeros: u64,
}

impl ShotResult {
    /// Empirical estimate of P(control = 0).
    pub fn estimate(&self) -> f64 {
        self.zeros as f64 / self.shots as f64
    }
}

fn principal_qubits(dim: usize) -> Result<usize, QcircError> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(QcircError::PowerOfTwoRequired(dim));
    }
    let m = dim.trailing_zeros() as usize;
    if m > MAX_PRINCIPAL_QUBITS {
        return Err(QcircError::TooLarge(dim));
    }
    Ok(m)
}

/// Qubit count of a purification of a d-dimensional state: 2·log₂(d).
pub fn purification_qubits(dim: usize) -> Result<usize, QcircError> {
    Ok(2 * principal_qubits(dim)?)
}

/// Purifies ρ into |Φ⟩ = Σᵢ √pᵢ |ψᵢ⟩⊗|i⟩ on 2·log₂(d) qubits, with
/// (pᵢ, ψᵢ) the eigenpairs in descending eigenvalue order (negatives clamped
/// to 0, then renormalized). The principal register is the first log₂(d)
/// qubits; tracing out the ancilla register recovers ρ.
pub fn purify(rho: &DensityMatrix) -> Result<StateVector, QcircError> {
    let dim = rho.dim();
    principal_qubits(dim)?;
    let (vals, vecs) = sym_eigen(dim, rho.entries());
    let clamped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut amplitudes = vec![0.0; dim * dim];
    for (i, &p) in clamped.iter().enumerate() {
        let root = (p / total).sqrt();
        if root == 0.0 {
            continue;
        }
        for a in 0..dim {
            amplitudes[a * dim + i] = root * vecs[(a, i)];
        }
    }
    StateVector::new(amplitudes)
}

/// Reduced state of the principal register: Tr_ancilla |Φ⟩⟨Φ|.
pub fn recover_principal(state: &StateVector) -> Result<DensityMatrix, QcircError> {
    let q = state.num_qubits();
    if !q.is_multiple_of(2) {
        return Err(QcircError::PowerOfTwoRequired(state.amplitudes().len()));
    }
    let d = 1usize << (q / 2);
    let pure = PureStateVector::new(state.amplitudes().to_vec()).map_err(QcircError::Linalg)?;
    let full = density_from_mixture(&[MixtureComponent { probability: 1.0, state: pure }])?;
    Ok(partial_trace(&full, (d, d), Keep::First)?)
}

#[inline]
fn qubit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

fn hadamard(amplitudes: &mut [f64], num_qubits: usize, qubit: usize) {
    let mask = qubit_mask(num_qubits, qubit);
    for i in 0..amplitudes.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a, b) = (amplitudes[i], amplitudes[j]);
            amplitudes[i] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
            amplitudes[j] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
}

/// Swaps two equal-length qubit registers when the control qubit is 1.
fn controlled_swap_registers(
    amplitudes: &mut [f64],
    num_qubits: usize,
    control: usize,
    reg_a: usize,
    reg_b: usize,
    reg_len: usize,
) {
    let control_mask = qubit_mask(num_qubits, control);
    for i in 0..amplitudes.len() {
        if i & control_mask == 0 {
            continue;
        }
        let mut j = i;
        for r in 0..reg_len {
            let ma = qubit_mask(num_qubits, reg_a + r);
            let mb = qubit_mask(num_qubits, reg_b + r);
            let bit_a = i & ma != 0;
            let bit_b = i & mb != 0;
            if bit_a != bit_b {
                j ^= ma | mb;
            }
        }
        if j > i {
            amplitudes.swap(i, j);
        }
    }
}

/// Simulates the swap-test circuit on purify(ρ) ⊗ purify(σ) with one control
/// qubit and returns the exact P(control = 0) = (1 + Tr(ρσ))/2.
///
/// The controlled-SWAP exchanges only the two principal registers, so the
/// measured overlap is the mixed-state trace inner product rather than the
/// purification overlap.
pub fn swap_test_exact(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, QcircError> {
    if rho.dim() != sigma.dim() {
        return Err(QcircError::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let m = principal_qubits(rho.dim())?;
    let phi_r = purify(rho)?;
    let phi_s = purify(sigma)?;

    // Layout: control (qubit 0) | purify(ρ) (qubits 1..=2m) | purify(σ).
    let num_qubits = 1 + 4 * m;
    let reg = 1usize << (2 * m);
    let mut amplitudes = vec![0.0; 1 << num_qubits];
    for (r, &ar) in phi_r.amplitudes().iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        for (s, &bs) in phi_s.amplitudes().iter().enumerate() {
            amplitudes[r * reg + s] = ar * bs;
        }
    }

    hadamard(&mut amplitudes, num_qubits, 0);
    controlled_swap_registers(&mut amplitudes, num_qubits, 0, 1, 1 + 2 * m, m);
    hadamard(&mut amplitudes, num_qubits, 0);

    let control_mask = qubit_mask(num_qubits, 0);
    let p0 = amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| i & control_mask == 0)
        .map(|(_, a)| a * a)
        .sum();
    Ok(p0)
}

/// Samples the swap-test control measurement `shots` times.
///
/// Deterministic for a given seed: shots are split into fixed-size shards
/// with per-shard generators, so sequential and parallel runs count the same
/// zeros.
pub fn swap_test_sample(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    shots: u64,
    seed: u64,
) -> Result<ShotResult, QcircError> {
    swap_test_sample_with(rho, sigma, shots, seed, Parallelism::Auto)
}

pub fn swap_test_sample_with(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    shots: u64,
    seed: u64,
    par: Parallelism,
) -> Result<ShotResult, QcircError> {
    assert!(shots >= 1, "at least one shot required");
    let p0 = swap_test_exact(rho, sigma)?;
    let shards: Vec<(u64, u64)> = (0..shots.div_ceil(SHOT_SHARD))
        .map(|s| (s, (shots - s * SHOT_SHARD).min(SHOT_SHARD)))
        .collect();
    let count_shard = |&(shard, n): &(u64, u64)| -> u64 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ shard.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        (0..n).filter(|_| rng.gen::<f64>() < p0).count() as u64
    };
    let zeros: u64 = {
        #[cfg(feature = "parallel")]
        {
            if par.is_parallel() {
                use rayon::prelude::*;
                shards.par_iter().map(count_shard).sum()
            } else {
                shards.iter().map(count_shard).sum()
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = par;
            shards.iter().map(count_shard).sum()
        }
    };
    Ok(ShotResult { shots, zeros })
}
