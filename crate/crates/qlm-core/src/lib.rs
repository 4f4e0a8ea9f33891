//! Quantum-inspired language modeling: vocabulary items embedded as
//! trace-one positive-semidefinite density matrices.
//!
//! The crate is organized around a small dense linear-algebra core and the
//! pipeline built on top of it:
//!
//! - [`linalg`] — density matrices, Cholesky parametrization, similarity,
//!   von Neumann entropy, tensor composition, partial trace.
//! - [`embed`] — vocabulary handling, per-word Cholesky factors, and the
//!   versioned binary model format.
//! - [`corpus`] — tokenization, context windows with frequency subsampling,
//!   and period manifests for diachronic analysis.
//! - [`trainer`] — CBOW-style SGD with negative sampling over the Cholesky
//!   parametrization, closed-form gradients.
//! - [`eval`] — word-similarity benchmarks (Pearson/Spearman) and
//!   nearest-neighbor queries.
//! - [`ensemble`] — frequency-weighted mixture states per corpus period and
//!   their entropy time series.
//! - [`qcirc`] — exact statevector simulation of density-matrix encoding via
//!   purification and swap-test fidelity estimation.
//!
//! Data-parallel sections (multi-worker training, shot sampling, batch
//! evaluation, per-period jobs) run on rayon when the default `parallel`
//! feature is enabled and fall back to sequential loops otherwise; see
//! [`par::Parallelism`].

pub mod corpus;
pub mod embed;
pub mod ensemble;
pub mod eval;
pub mod linalg;
pub mod par;
pub mod qcirc;
pub mod trainer;
