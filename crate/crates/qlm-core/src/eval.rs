//! Word-similarity benchmark evaluation (Pearson/Spearman against human
//! judgments) and nearest-neighbor queries.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::embed::{EmbeddingStore, ModelError};
use crate::linalg::{self, DensityMatrix, LinalgError};
use crate::par::Parallelism;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("no parsable word-pair lines found")]
    NoParsableLines,
    #[error("only {0} covered pairs; need at least 2 for a correlation")]
    TooFewCovered(usize),
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance in one input; correlation undefined")]
    ZeroVariance,
    #[error("unknown similarity kind {0:?} (expected hs or uhlmann)")]
    UnknownSimKind(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Similarity used when scoring word pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimKind {
    /// Trace inner product Tr(ρσ) — the training similarity.
    #[default]
    Hs,
    /// Full Uhlmann fidelity (Tr √(√ρ σ √ρ))².
    Uhlmann,
}

impl SimKind {
    pub fn similarity(self, a: &DensityMatrix, b: &DensityMatrix) -> Result<f64, LinalgError> {
        match self {
            SimKind::Hs => linalg::hs_similarity(a, b),
            SimKind::Uhlmann => linalg::uhlmann_fidelity(a, b),
        }
    }
}

impl fmt::Display for SimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimKind::Hs => write!(f, "hs"),
            SimKind::Uhlmann => write!(f, "uhlmann"),
        }
    }
}

impl FromStr for SimKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "hs" => Ok(SimKind::Hs),
            "uhlmann" => Ok(SimKind::Uhlmann),
            other => Err(EvalError::UnknownSimKind(other.to_string())),
        }
    }
}

/// Human-scored word pairs.
#[derive(Debug, Clone)]
pub struct SimilarityDataset {
    pub pairs: Vec<(String, String, f64)>,
}

/// Evaluation summary for one dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub pearson: f64,
    pub spearman: f64,
    pub pairs_total: usize,
    pub pairs_covered: usize,
    pub sim_kind: SimKind,
}

/// Parses `word1 <sep> word2 <sep> score` lines, auto-detecting the separator
/// among tab, comma, and whitespace per line. `#` comments are skipped, as is
/// a first line whose third field is non-numeric (a header). Malformed lines
/// are reported with their line number and skipped.
pub fn load_similarity_dataset(path: &Path) -> Result<SimilarityDataset, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_similarity_dataset(&text)
}

pub fn parse_similarity_dataset(text: &str) -> Result<SimilarityDataset, EvalError> {
    let mut pairs = Vec::new();
    let mut saw_data_line = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let first_data_line = !saw_data_line;
        saw_data_line = true;
        if fields.len() < 3 {
            log::warn!("similarity dataset line {}: expected 3 fields, skipping", i + 1);
            continue;
        }
        match fields[2].parse::<f64>() {
            Ok(score) if score.is_finite() => {
                pairs.push((fields[0].to_string(), fields[1].to_string(), score));
            }
            _ if first_data_line => {} // header row
            _ => {
                log::warn!("similarity dataset line {}: non-numeric score, skipping", i + 1);
            }
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoParsableLines);
    }
    Ok(SimilarityDataset { pairs })
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewCovered(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Looks a dataset word up in the vocabulary, trying the ASCII-lowercased
/// form as a fallback so datasets match whitespace-mode tokenization without
/// disturbing char-mode vocabularies.
fn lookup(store: &EmbeddingStore, word: &str) -> Option<u32> {
    store
        .vocab()
        .id(word)
        .or_else(|| store.vocab().id(&word.to_ascii_lowercase()))
}

/// Scores every pair with both words in vocabulary and correlates model
/// scores with the human judgments. OOV pairs count toward `pairs_total`
/// only.
pub fn evaluate(
    store: &EmbeddingStore,
    dataset: &SimilarityDataset,
    sim_kind: SimKind,
) -> Result<EvalReport, EvalError> {
    evaluate_with(store, dataset, sim_kind, Parallelism::Auto)
}

pub fn evaluate_with(
    store: &EmbeddingStore,
    dataset: &SimilarityDataset,
    sim_kind: SimKind,
    par: Parallelism,
) -> Result<EvalReport, EvalError> {
    let covered: Vec<(u32, u32, f64)> = dataset
        .pairs
        .iter()
        .filter_map(|(w1, w2, human)| {
            let a = lookup(store, w1)?;
            let b = lookup(store, w2)?;
            Some((a, b, *human))
        })
        .collect();
    if covered.len() < 2 {
        return Err(EvalError::TooFewCovered(covered.len()));
    }

    let mut ids: Vec<u32> = covered.iter().flat_map(|&(a, b, _)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let densities: std::collections::HashMap<u32, DensityMatrix> = ids
        .into_iter()
        .map(|id| Ok((id, store.density_by_id(id)?)))
        .collect::<Result<_, ModelError>>()?;

    let score_pair = |&(a, b, _): &(u32, u32, f64)| -> Result<f64, EvalError> {
        Ok(sim_kind.similarity(&densities[&a], &densities[&b])?)
    };
    let model_scores: Vec<f64> = run_scores(&covered, par, score_pair)?;
    let human_scores: Vec<f64> = covered.iter().map(|&(_, _, h)| h).collect();

    Ok(EvalReport {
        pearson: pearson(&model_scores, &human_scores)?,
        spearman: spearman(&model_scores, &human_scores)?,
        pairs_total: dataset.pairs.len(),
        pairs_covered: covered.len(),
        sim_kind,
    })
}

fn run_scores<F>(
    covered: &[(u32, u32, f64)],
    par: Parallelism,
    score: F,
) -> Result<Vec<f64>, EvalError>
where
    F: Fn(&(u32, u32, f64)) -> Result<f64, EvalError> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return covered.par_iter().map(score).collect();
    }
    let _ = par;
    covered.iter().map(score).collect()
}

/// Top-k most similar vocabulary words, excluding the query; ties break by
/// vocabulary id ascending.
pub fn nearest_neighbors(
    store: &EmbeddingStore,
    word: &str,
    k: usize,
    sim_kind: SimKind,
) -> Result<Vec<(String, f64)>, EvalError> {
    nearest_neighbors_with(store, word, k, sim_kind, Parallelism::Auto)
}

pub fn nearest_neighbors_with(
    store: &EmbeddingStore,
    word: &str,
    k: usize,
    sim_kind: SimKind,
    par: Parallelism,
) -> Result<Vec<(String, f64)>, EvalError> {
    assert!(k >= 1, "k must be at least 1");
    let query_id = store
        .vocab()
        .id(word)
        .ok_or_else(|| ModelError::OutOfVocabulary(word.to_string()))?;
    let query = store.density_by_id(query_id)?;
    let others: Vec<u32> = (0..store.vocab().len() as u32).filter(|&id| id != query_id).collect();

    let score_one = |&id: &u32| -> Result<(u32, f64), EvalError> {
        let rho = store.density_by_id(id)?;
        Ok((id, sim_kind.similarity(&query, &rho)?))
    };
    let mut scored: Vec<(u32, f64)> = {
        #[cfg(feature = "parallel")]
        {
            if par.is_parallel() {
                use rayon::prelude::*;
                others.par_iter().map(score_one).collect::<Result<_, _>>()?
            } else {
                others.iter().map(score_one).collect::<Result<_, _>>()?
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = par;
            others.iter().map(score_one).collect::<Result<_, _>>()?
        }
    };
    scored.sort_by(|(ia, sa), (ib, sb)| sb.partial_cmp(sa).unwrap().then(ia.cmp(ib)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(id, s)| (store.vocab().word(id).to_string(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, TokenizeMode};
    use crate::embed::{build_vocab, init_embeddings};

    fn demo_store(words: &str) -> EmbeddingStore {
        let vocab = build_vocab(tokenize(words, TokenizeMode::Whitespace), 1).unwrap();
        init_embeddings(vocab, 4, 13)
    }

    #[test]
    fn parses_tab_comma_and_whitespace_lines() {
        let ds = parse_similarity_dataset("tiger\tcat\t7.35\nfox,dog,6.1\nbird fish 2.0\n").unwrap();
        assert_eq!(ds.pairs.len(), 3);
        assert_eq!(ds.pairs[0], ("tiger".to_string(), "cat".to_string(), 7.35));
    }

    #[test]
    fn skips_header_and_comments() {
        let ds = parse_similarity_dataset(
            "# word similarity\nWord 1,Word 2,Human (mean)\ntiger,cat,7.35\nfox,dog,6.1\n",
        )
        .unwrap();
        assert_eq!(ds.pairs.len(), 2);
    }

    #[test]
    fn malformed_lines_are_skipped_not_fatal() {
        let ds = parse_similarity_dataset("tiger\tcat\t7.35\nbroken line\nfox\tdog\tNaN\n").unwrap();
        assert_eq!(ds.pairs.len(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_similarity_dataset("# nothing here\n"),
            Err(EvalError::NoParsableLines)
        ));
    }

    #[test]
    fn pearson_known_values() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
    }

    #[test]
    fn pearson_rejects_zero_variance() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(EvalError::ZeroVariance)
        ));
    }

    #[test]
    fn correlation_matches_textbook_reimplementation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.gen_range(-1.0..1.0)).collect();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson(&xs, &ys).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn spearman_uses_ranks_with_ties() {
        // Monotone but nonlinear: rank correlation is exactly 1.
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 10.0, 100.0, 1000.0];
        assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() <= 1e-12);
        let with_ties = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(with_ties, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_perfect_anticorrelation() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [6.0, 4.0, 2.0];
        assert_eq!(spearman(&xs, &ys).unwrap(), -1.0);
    }

    #[test]
    fn correlations_invariant_under_affine_transforms() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let xs: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| 3.5 * x + 11.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - pearson(&scaled, &ys).unwrap()).abs() <= 1e-12);
        assert!((spearman(&xs, &ys).unwrap() - spearman(&scaled, &ys).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn evaluate_self_similarities_is_perfect() {
        let store = demo_store("apple banana cherry date elder fig");
        let mut lines = Vec::new();
        let words = store.vocab().words().to_vec();
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                let a = store.get_density(&words[i]).unwrap();
                let b = store.get_density(&words[j]).unwrap();
                let s = linalg::hs_similarity(&a, &b).unwrap();
                lines.push((words[i].clone(), words[j].clone(), s));
            }
        }
        let dataset = SimilarityDataset { pairs: lines };
        let report = evaluate(&store, &dataset, SimKind::Hs).unwrap();
        assert!((report.pearson - 1.0).abs() <= 1e-12);
        assert_eq!(report.pairs_covered, report.pairs_total);
    }

    #[test]
    fn evaluate_counts_oov_in_total_only() {
        let store = demo_store("apple banana cherry");
        let dataset = SimilarityDataset {
            pairs: vec![
                ("apple".into(), "banana".into(), 5.0),
                ("apple".into(), "cherry".into(), 3.0),
                ("APPLE".into(), "Banana".into(), 4.0),
                ("apple".into(), "zebra".into(), 1.0),
            ],
        };
        let report = evaluate(&store, &dataset, SimKind::Hs).unwrap();
        assert_eq!(report.pairs_total, 4);
        assert_eq!(report.pairs_covered, 3);
    }

    #[test]
    fn evaluate_needs_two_covered_pairs() {
        let store = demo_store("apple banana");
        let dataset = SimilarityDataset {
            pairs: vec![("zebra".into(), "yak".into(), 1.0), ("apple".into(), "banana".into(), 2.0)],
        };
        assert!(matches!(
            evaluate(&store, &dataset, SimKind::Hs),
            Err(EvalError::TooFewCovered(1))
        ));
    }

    #[test]
    fn evaluate_matches_sequential_in_parallel_mode() {
        let store = demo_store("a b c d e f g h i j");
        let words = store.vocab().words().to_vec();
        let mut pairs = Vec::new();
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                pairs.push((words[i].clone(), words[j].clone(), (i + j) as f64));
            }
        }
        let dataset = SimilarityDataset { pairs };
        let seq = evaluate_with(&store, &dataset, SimKind::Uhlmann, Parallelism::Sequential).unwrap();
        let auto = evaluate_with(&store, &dataset, SimKind::Uhlmann, Parallelism::Auto).unwrap();
        assert_eq!(seq.pearson, auto.pearson);
        assert_eq!(seq.spearman, auto.spearman);
    }

    #[test]
    fn nearest_neighbors_two_word_vocab() {
        let store = demo_store("left right");
        let nn = nearest_neighbors(&store, "left", 1, SimKind::Hs).unwrap();
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].0, "right");
    }

    #[test]
    fn nearest_neighbors_excludes_query_and_matches_full_sort() {
        let store = demo_store("a b c d e f g h");
        let nn = nearest_neighbors(&store, "c", 7, SimKind::Hs).unwrap();
        assert_eq!(nn.len(), 7);
        assert!(nn.iter().all(|(w, _)| w != "c"));

        // Exhaustive oracle: score every other word and sort.
        let query = store.get_density("c").unwrap();
        let mut oracle: Vec<(u32, f64)> = (0..8u32)
            .filter(|&id| store.vocab().word(id) != "c")
            .map(|id| {
                let rho = store.density_by_id(id).unwrap();
                (id, linalg::hs_similarity(&query, &rho).unwrap())
            })
            .collect();
        oracle.sort_by(|(ia, sa), (ib, sb)| sb.partial_cmp(sa).unwrap().then(ia.cmp(ib)));
        for (got, (id, s)) in nn.iter().zip(oracle) {
            assert_eq!(got.0, store.vocab().word(id));
            assert_eq!(got.1, s);
        }
    }

    #[test]
    fn nearest_neighbors_oov_query_errors() {
        let store = demo_store("a b");
        assert!(matches!(
            nearest_neighbors(&store, "zzz", 1, SimKind::Hs),
            Err(EvalError::Model(ModelError::OutOfVocabulary(_)))
        ));
    }
}
