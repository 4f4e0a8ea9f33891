//! CBOW-style stochastic training of Cholesky-parametrized density matrices
//! with negative sampling.
//!
//! The objective for a (center, context) pair with negatives m is
//!
//! ```text
//! loss = −ln(s⁺ + ε) − Σₘ ln(1 − s⁻ₘ + ε),   s = Tr(ρ_ctx ρ_word)
//! ```
//!
//! where ρ_ctx is the uniform mixture of the context word states. Each word
//! is parametrized as ρ = LLᵀ/Tr(LLᵀ) with L lower triangular, so every SGD
//! iterate stays a valid density matrix; diagonals are clamped to ≥ 0 after
//! each update. Gradients are closed-form:
//!
//! ```text
//! ∇_L Tr(M ρ) = (2/T) (M − Tr(Mρ) I) L,   T = Tr(LLᵀ)
//! ```
//!
//! for any symmetric M, verified against central finite differences in the
//! test suite.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{windows, ContextPair};
use crate::embed::{build_vocab, init_embeddings, EmbeddingStore, ModelError, Vocabulary};
use crate::linalg::{
    gram_of_packed, mixture_average, packed_index, trace_inner, DensityMatrix, LinalgError,
};

/// Guard added inside the logarithms of the pair loss.
pub const LOSS_EPSILON: f64 = 1e-8;

/// Final learning rate as a fraction of the initial one.
const LR_FLOOR: f64 = 0.01;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corpus yields no context pairs")]
    EmptyCorpus,
    #[error("vocabulary needs at least 2 words to draw negatives")]
    VocabTooSmall,
    #[error("context is empty")]
    EmptyContext,
    #[error("loss became non-finite at epoch {epoch}, pair {pair}")]
    NanLoss { epoch: usize, pair: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Training hyperparameters. Defaults are dim 8 (3 qubits, 36 lower-triangle
/// parameters per word) and standard CBOW settings.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub subsample_t: f64,
    pub seed: u64,
    pub min_count: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.05,
            subsample_t: 1e-4,
            seed: 42,
            min_count: 5,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.dim < 2 {
            return Err(TrainError::InvalidConfig("dim must be at least 2".into()));
        }
        if self.window < 1 {
            return Err(TrainError::InvalidConfig("window must be at least 1".into()));
        }
        if self.negatives < 1 {
            return Err(TrainError::InvalidConfig("negatives must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.subsample_t < 0.0 {
            return Err(TrainError::InvalidConfig("subsample threshold must be ≥ 0".into()));
        }
        if self.min_count < 1 {
            return Err(TrainError::InvalidConfig("min_count must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(TrainError::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-run training telemetry.
#[derive(Debug, Clone)]
pub struct TrainStats {
    /// Mean loss per pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub pairs_processed: u64,
    pub wall_time: Duration,
}

/// Uniform mixture of the context words' density matrices.
pub fn context_state(store: &EmbeddingStore, context: &[u32]) -> Result<DensityMatrix, TrainError> {
    if context.is_empty() {
        return Err(TrainError::EmptyContext);
    }
    let densities: Vec<DensityMatrix> = context
        .iter()
        .map(|&id| store.density_by_id(id))
        .collect::<Result<_, _>>()?;
    let weighted: Vec<(f64, &DensityMatrix)> = densities.iter().map(|d| (1.0, d)).collect();
    Ok(mixture_average(&weighted)?)
}

/// Negative-sampling log loss for one pair, given the precomputed context
/// state.
pub fn pair_loss(
    store: &EmbeddingStore,
    center: u32,
    context_state: &DensityMatrix,
    negatives: &[u32],
) -> Result<f64, TrainError> {
    let s_pos = trace_inner(
        context_state.entries(),
        store.density_by_id(center)?.entries(),
    );
    let mut loss = -(s_pos + LOSS_EPSILON).ln();
    for &neg in negatives {
        let s_neg = trace_inner(context_state.entries(), store.density_by_id(neg)?.entries());
        loss -= (1.0 - s_neg + LOSS_EPSILON).ln();
    }
    Ok(loss)
}

/// Loss and per-word packed lower-triangle gradients for one pair.
#[derive(Debug, Clone)]
pub struct PairGradients {
    pub loss: f64,
    pub center: (u32, Vec<f64>),
    pub context: Vec<(u32, Vec<f64>)>,
    pub negatives: Vec<(u32, Vec<f64>)>,
}

/// Analytic gradients of the pair loss with respect to the center, context,
/// and negative factors (context gradients flow through the uniform average).
pub fn pair_gradients(
    store: &EmbeddingStore,
    center: u32,
    context: &[u32],
    negatives: &[u32],
) -> Result<PairGradients, TrainError> {
    if context.is_empty() {
        return Err(TrainError::EmptyContext);
    }
    let center_l = store.factor(center).lower();
    let ctx: Vec<&[f64]> = context.iter().map(|&id| store.factor(id).lower()).collect();
    let negs: Vec<&[f64]> = negatives.iter().map(|&id| store.factor(id).lower()).collect();
    let terms = compute_pair(store.dim(), center_l, &ctx, &negs);
    Ok(PairGradients {
        loss: terms.loss,
        center: (center, terms.center_grad),
        context: context.iter().copied().zip(terms.context_grads).collect(),
        negatives: negatives.iter().copied().zip(terms.negative_grads).collect(),
    })
}

struct PairTerms {
    loss: f64,
    center_grad: Vec<f64>,
    context_grads: Vec<Vec<f64>>,
    negative_grads: Vec<Vec<f64>>,
}

/// Density entries of a packed factor; all-zero factors (untrainable fixed
/// points of the scale-invariant parametrization) fall back to I/d.
fn density_of_packed(dim: usize, lower: &[f64]) -> Vec<f64> {
    let (mut gram, trace) = gram_of_packed(dim, lower);
    if trace == 0.0 {
        let mut id = vec![0.0; dim * dim];
        for i in 0..dim {
            id[i * dim + i] = 1.0 / dim as f64;
        }
        return id;
    }
    for x in &mut gram {
        *x /= trace;
    }
    gram
}

/// Value and packed gradient of f(L) = Tr(M · LLᵀ/Tr(LLᵀ)) for symmetric M.
fn trace_sim_grad(dim: usize, m: &[f64], lower: &[f64]) -> (f64, Vec<f64>) {
    let (gram, trace) = gram_of_packed(dim, lower);
    if trace == 0.0 {
        return (0.0, vec![0.0; lower.len()]);
    }
    let s = trace_inner(m, &gram) / trace;
    let scale = 2.0 / trace;
    let mut grad = vec![0.0; lower.len()];
    for i in 0..dim {
        for j in 0..=i {
            // (M L)_ij over the nonzero rows of column j.
            let mut ml = 0.0;
            for k in j..dim {
                ml += m[i * dim + k] * lower[packed_index(k, j)];
            }
            grad[packed_index(i, j)] = scale * (ml - s * lower[packed_index(i, j)]);
        }
    }
    (s, grad)
}

fn compute_pair(dim: usize, center: &[f64], ctx: &[&[f64]], negs: &[&[f64]]) -> PairTerms {
    let n = dim * dim;
    let mut rho_ctx = vec![0.0; n];
    for c in ctx {
        let rho = density_of_packed(dim, c);
        for (acc, x) in rho_ctx.iter_mut().zip(&rho) {
            *acc += x;
        }
    }
    let inv = 1.0 / ctx.len() as f64;
    for x in &mut rho_ctx {
        *x *= inv;
    }

    let (s_pos, g_pos) = trace_sim_grad(dim, &rho_ctx, center);
    let coeff_pos = -1.0 / (s_pos + LOSS_EPSILON);
    let mut loss = -(s_pos + LOSS_EPSILON).ln();
    let mut center_grad = g_pos;
    for g in &mut center_grad {
        *g *= coeff_pos;
    }

    // dloss/dρ_ctx, fed back through each context factor below.
    let mut ctx_sensitivity = density_of_packed(dim, center);
    for x in &mut ctx_sensitivity {
        *x *= coeff_pos;
    }

    let mut negative_grads = Vec::with_capacity(negs.len());
    for neg in negs {
        let (s_neg, g_neg) = trace_sim_grad(dim, &rho_ctx, neg);
        let coeff = 1.0 / (1.0 - s_neg + LOSS_EPSILON);
        loss -= (1.0 - s_neg + LOSS_EPSILON).ln();
        let mut grad = g_neg;
        for g in &mut grad {
            *g *= coeff;
        }
        negative_grads.push(grad);
        let rho_neg = density_of_packed(dim, neg);
        for (acc, x) in ctx_sensitivity.iter_mut().zip(&rho_neg) {
            *acc += coeff * x;
        }
    }

    let context_grads = ctx
        .iter()
        .map(|c| {
            let (_, mut grad) = trace_sim_grad(dim, &ctx_sensitivity, c);
            for g in &mut grad {
                *g *= inv;
            }
            grad
        })
        .collect();

    PairTerms { loss, center_grad, context_grads, negative_grads }
}

/// Draws negatives from the unigram^0.75 distribution.
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary) -> Self {
        assert!(vocab.len() >= 2, "negative sampling needs at least 2 words");
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for id in 0..vocab.len() as u32 {
            acc += (vocab.count(id) as f64).powf(0.75);
            cumulative.push(acc);
        }
        Self { cumulative }
    }

    /// Draws k ids, resampling any draw equal to `center`.
    pub fn draw<R: Rng>(&self, rng: &mut R, k: usize, center: u32) -> Vec<u32> {
        let total = *self.cumulative.last().unwrap();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            loop {
                let u = rng.gen::<f64>() * total;
                let id = self.cumulative.partition_point(|&c| c <= u) as u32;
                let id = id.min(self.cumulative.len() as u32 - 1);
                if id != center {
                    out.push(id);
                    break;
                }
            }
        }
        out
    }
}

/// One-shot convenience wrapper around [`NegativeSampler`].
pub fn negative_sample<R: Rng>(vocab: &Vocabulary, k: usize, rng: &mut R, center: u32) -> Vec<u32> {
    NegativeSampler::new(vocab).draw(rng, k, center)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains a store over the token stream.
///
/// Single-worker runs are bit-deterministic for a given seed. With
/// `workers > 1` (and the `parallel` feature) corpus shards update the
/// parameters without synchronization; every factor still remains a valid
/// density generator, but results vary run to run.
pub fn train(tokens: &[String], config: &TrainConfig) -> Result<(EmbeddingStore, TrainStats), TrainError> {
    config.validate()?;
    let start = Instant::now();
    let vocab = build_vocab(tokens.iter().cloned(), config.min_count)?;
    let mut store = init_embeddings(vocab, config.dim, config.seed);

    let mut pairs = windows(
        tokens,
        store.vocab(),
        config.window,
        config.subsample_t,
        epoch_seed(config.seed, 0),
    );
    if pairs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if store.vocab().len() < 2 {
        return Err(TrainError::VocabTooSmall);
    }
    let sampler = NegativeSampler::new(store.vocab());
    let total_budget = (pairs.len() as u64) * config.epochs as u64;

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut processed: u64 = 0;
    for epoch in 0..config.epochs {
        if epoch > 0 {
            pairs = windows(
                tokens,
                store.vocab(),
                config.window,
                config.subsample_t,
                epoch_seed(config.seed, epoch),
            );
            if pairs.is_empty() {
                return Err(TrainError::EmptyCorpus);
            }
        }
        let mean = if config.workers > 1 && cfg!(feature = "parallel") {
            #[cfg(feature = "parallel")]
            {
                hogwild_epoch(&mut store, &sampler, &pairs, config, epoch, processed, total_budget)?
            }
            #[cfg(not(feature = "parallel"))]
            {
                unreachable!()
            }
        } else {
            if config.workers > 1 {
                log::warn!("built without the `parallel` feature; training sequentially");
            }
            sequential_epoch(&mut store, &sampler, &pairs, config, epoch, processed, total_budget)?
        };
        processed += pairs.len() as u64;
        epoch_losses.push(mean);
        log::info!("epoch {} mean loss {:.6}", epoch + 1, mean);
    }

    let stats = TrainStats {
        epoch_losses,
        pairs_processed: processed,
        wall_time: start.elapsed(),
    };
    Ok((store, stats))
}

fn learning_rate(config: &TrainConfig, done: u64, total: u64) -> f64 {
    let frac = 1.0 - done as f64 / total as f64;
    config.learning_rate * frac.max(LR_FLOOR)
}

fn apply_update(factor: &mut crate::linalg::CholeskyFactor, grad: &[f64], lr: f64) {
    for (l, g) in factor.lower_mut().iter_mut().zip(grad) {
        *l -= lr * g;
    }
    factor.clamp_diagonal();
}

fn sequential_epoch(
    store: &mut EmbeddingStore,
    sampler: &NegativeSampler,
    pairs: &[ContextPair],
    config: &TrainConfig,
    epoch: usize,
    processed_before: u64,
    total_budget: u64,
) -> Result<f64, TrainError> {
    let dim = store.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch) ^ 0x6e65_6773);
    let mut loss_sum = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let lr = learning_rate(config, processed_before + i as u64, total_budget);
        let negs = sampler.draw(&mut rng, config.negatives, pair.center);
        let terms = {
            let center_l = store.factor(pair.center).lower();
            let ctx: Vec<&[f64]> =
                pair.context.iter().map(|&id| store.factor(id).lower()).collect();
            let negl: Vec<&[f64]> = negs.iter().map(|&id| store.factor(id).lower()).collect();
            compute_pair(dim, center_l, &ctx, &negl)
        };
        if !terms.loss.is_finite() {
            return Err(TrainError::NanLoss { epoch: epoch + 1, pair: i as u64 });
        }
        loss_sum += terms.loss;
        apply_update(store.factor_mut(pair.center), &terms.center_grad, lr);
        for (k, &id) in pair.context.iter().enumerate() {
            apply_update(store.factor_mut(id), &terms.context_grads[k], lr);
        }
        for (k, &id) in negs.iter().enumerate() {
            apply_update(store.factor_mut(id), &terms.negative_grads[k], lr);
        }
    }
    Ok(loss_sum / pairs.len() as f64)
}

/// Lock-free multi-worker epoch: shards update shared parameters through
/// relaxed atomics, tolerating lost updates as standard embedding trainers
/// do.
#[cfg(feature = "parallel")]
fn hogwild_epoch(
    store: &mut EmbeddingStore,
    sampler: &NegativeSampler,
    pairs: &[ContextPair],
    config: &TrainConfig,
    epoch: usize,
    processed_before: u64,
    total_budget: u64,
) -> Result<f64, TrainError> {
    use rayon::prelude::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    use crate::linalg::{packed_len, CholeskyFactor};

    let dim = store.dim();
    let len = packed_len(dim);
    let shared: Vec<AtomicU64> = store
        .factors()
        .iter()
        .flat_map(|f| f.lower().iter().map(|x| AtomicU64::new(x.to_bits())))
        .collect();
    let read_factor = |id: u32, buf: &mut Vec<f64>| {
        buf.clear();
        let base = id as usize * len;
        buf.extend(
            shared[base..base + len]
                .iter()
                .map(|b| f64::from_bits(b.load(Ordering::Relaxed))),
        );
    };
    let apply = |id: u32, grad: &[f64], lr: f64| {
        let base = id as usize * len;
        for (k, g) in grad.iter().enumerate() {
            let slot = &shared[base + k];
            let old = f64::from_bits(slot.load(Ordering::Relaxed));
            slot.store((old - lr * g).to_bits(), Ordering::Relaxed);
        }
        for i in 0..dim {
            let slot = &shared[base + packed_index(i, i)];
            let v = f64::from_bits(slot.load(Ordering::Relaxed));
            if v < 0.0 {
                slot.store(0.0f64.to_bits(), Ordering::Relaxed);
            }
        }
    };

    let counter = AtomicU64::new(0);
    let chunk = pairs.len().div_ceil(config.workers);
    let shard_results: Vec<(f64, Option<u64>)> = pairs
        .par_chunks(chunk)
        .enumerate()
        .map(|(shard, chunk_pairs)| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                epoch_seed(config.seed, epoch) ^ ((shard as u64) << 32) ^ 0x6e65_6773,
            );
            let mut center_buf = Vec::new();
            let mut loss_sum = 0.0;
            let mut nan_at = None;
            for (i, pair) in chunk_pairs.iter().enumerate() {
                let t = counter.fetch_add(1, Ordering::Relaxed);
                let lr = learning_rate(config, processed_before + t, total_budget);
                let negs = sampler.draw(&mut rng, config.negatives, pair.center);
                read_factor(pair.center, &mut center_buf);
                let ctx_bufs: Vec<Vec<f64>> = pair
                    .context
                    .iter()
                    .map(|&id| {
                        let mut b = Vec::new();
                        read_factor(id, &mut b);
                        b
                    })
                    .collect();
                let neg_bufs: Vec<Vec<f64>> = negs
                    .iter()
                    .map(|&id| {
                        let mut b = Vec::new();
                        read_factor(id, &mut b);
                        b
                    })
                    .collect();
                let ctx: Vec<&[f64]> = ctx_bufs.iter().map(|b| b.as_slice()).collect();
                let negl: Vec<&[f64]> = neg_bufs.iter().map(|b| b.as_slice()).collect();
                let terms = compute_pair(dim, &center_buf, &ctx, &negl);
                if !terms.loss.is_finite() {
                    nan_at = Some(i as u64);
                    break;
                }
                loss_sum += terms.loss;
                apply(pair.center, &terms.center_grad, lr);
                for (k, &id) in pair.context.iter().enumerate() {
                    apply(id, &terms.context_grads[k], lr);
                }
                for (k, &id) in negs.iter().enumerate() {
                    apply(id, &terms.negative_grads[k], lr);
                }
            }
            (loss_sum, nan_at)
        })
        .collect();

    let mut factors = Vec::with_capacity(store.vocab().len());
    for id in 0..store.vocab().len() {
        let base = id * len;
        let mut lower: Vec<f64> = shared[base..base + len]
            .iter()
            .map(|b| f64::from_bits(b.load(Ordering::Relaxed)))
            .collect();
        for i in 0..dim {
            let idx = packed_index(i, i);
            if lower[idx] < 0.0 {
                lower[idx] = 0.0;
            }
        }
        factors.push(CholeskyFactor::new(dim, lower).expect("clamped diagonal"));
    }
    store.replace_factors(factors);

    let mut loss_sum = 0.0;
    for (sum, nan) in shard_results {
        if let Some(pair) = nan {
            return Err(TrainError::NanLoss { epoch: epoch + 1, pair });
        }
        loss_sum += sum;
    }
    Ok(loss_sum / pairs.len() as f64)
}
