//! Frequency-weighted "linguistic ensemble" states per corpus period and
//! their von Neumann entropy time series.
//!
//! A period's ensemble is the convex mixture ρ = Σ_w f_w ρ_w with f_w the
//! in-vocabulary relative frequency of w in that period — the only
//! construction over trained embeddings that stays inside the density-matrix
//! formalism.

use std::collections::HashMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::corpus::{partition_by_period, CorpusError, PeriodManifest, TokenizeMode};
use crate::embed::{EmbeddingStore, ModelError};
use crate::linalg::{mixture_average, von_neumann_entropy, DensityMatrix, LinalgError, LogBase};
use crate::trainer::{train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("period {0:?} has no in-vocabulary tokens")]
    NoInVocabTokens(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Aggregate state of one corpus period.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub period_name: String,
    pub rho: DensityMatrix,
    /// All tokens seen in the period, including out-of-vocabulary ones.
    pub token_count: u64,
    /// Fraction of tokens that were in vocabulary.
    pub vocab_coverage: f64,
}

/// One output row of the entropy pipeline.
#[derive(Debug, Clone)]
pub struct EntropyRow {
    pub period: String,
    pub entropy: f64,
    pub tokens: u64,
    pub coverage: f64,
}

/// Entropy rows in manifest order.
#[derive(Debug, Clone)]
pub struct EntropySeries {
    pub rows: Vec<EntropyRow>,
}

impl EntropySeries {
    /// CSV with header `period,entropy,tokens,coverage`, LF line endings.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"period,entropy,tokens,coverage\n")?;
        for row in &self.rows {
            writeln!(w, "{},{},{},{}", row.period, row.entropy, row.tokens, row.coverage)?;
        }
        Ok(())
    }
}

/// Builds the frequency-weighted mixture state of a period's tokens.
pub fn ensemble_state(
    store: &EmbeddingStore,
    period_name: &str,
    tokens: &[String],
) -> Result<EnsembleState, EnsembleError> {
    let mut counts: HashMap<u32, u64> = HashMap::new();
    let mut in_vocab: u64 = 0;
    for token in tokens {
        if let Some(id) = store.vocab().id(token) {
            *counts.entry(id).or_insert(0) += 1;
            in_vocab += 1;
        }
    }
    if in_vocab == 0 {
        return Err(EnsembleError::NoInVocabTokens(period_name.to_string()));
    }
    let mut ids: Vec<u32> = counts.keys().copied().collect();
    ids.sort_unstable();
    let densities: Vec<(u64, DensityMatrix)> = ids
        .iter()
        .map(|&id| Ok((counts[&id], store.density_by_id(id)?)))
        .collect::<Result<_, ModelError>>()?;
    let weighted: Vec<(f64, &DensityMatrix)> =
        densities.iter().map(|(c, d)| (*c as f64, d)).collect();
    let rho = mixture_average(&weighted)?;
    Ok(EnsembleState {
        period_name: period_name.to_string(),
        rho,
        token_count: tokens.len() as u64,
        vocab_coverage: in_vocab as f64 / tokens.len() as f64,
    })
}

/// Model source for the entropy pipeline: one shared model, or one model
/// trained per period with identical config and seed.
pub enum SeriesMode<'a> {
    GlobalModel(&'a EmbeddingStore),
    PerPeriodModel(&'a TrainConfig),
}

/// Runs the period-partitioned entropy pipeline over a manifest, one row per
/// period in manifest order.
pub fn period_entropy_series(
    manifest: &PeriodManifest,
    mode: SeriesMode<'_>,
    tokenize_mode: TokenizeMode,
    log_base: LogBase,
) -> Result<EntropySeries, EnsembleError> {
    let periods = partition_by_period(manifest, tokenize_mode)?;
    let rows = match mode {
        SeriesMode::GlobalModel(store) => run_periods(&periods, log_base, |name, tokens| {
            ensemble_state(store, name, tokens)
        })?,
        SeriesMode::PerPeriodModel(config) => run_periods(&periods, log_base, |name, tokens| {
            let (store, _) = train(tokens, config)?;
            ensemble_state(&store, name, tokens)
        })?,
    };
    Ok(EntropySeries { rows })
}

fn run_periods<F>(
    periods: &[(String, Vec<String>)],
    log_base: LogBase,
    build: F,
) -> Result<Vec<EntropyRow>, EnsembleError>
where
    F: Fn(&str, &[String]) -> Result<EnsembleState, EnsembleError> + Sync,
{
    let to_row = |(name, tokens): &(String, Vec<String>)| -> Result<EntropyRow, EnsembleError> {
        let state = build(name, tokens)?;
        Ok(EntropyRow {
            period: state.period_name,
            entropy: von_neumann_entropy(&state.rho, log_base),
            tokens: state.token_count,
            coverage: state.vocab_coverage,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        periods.par_iter().map(to_row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        periods.iter().map(to_row).collect()
    }
}
