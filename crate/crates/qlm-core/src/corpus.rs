//! Corpus ingestion: tokenization, period manifests, and context-window
//! generation with word2vec-style frequency subsampling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embed::Vocabulary;

/// Punctuation skipped by char-mode tokenization, beyond ASCII punctuation.
pub const SKIPPED_PUNCTUATION: &str = "，。、；：！？…—·〈〉《》「」『』（）【】“”‘’";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("manifest line {line}: expected `period<TAB>path`")]
    ManifestSyntax { line: usize },
    #[error("manifest has no periods")]
    EmptyManifest,
    #[error("manifest references missing file {0}")]
    MissingFile(PathBuf),
    #[error("period {0:?} contains no tokens")]
    EmptyPeriod(String),
}

/// Tokenization strategy.
///
/// `Whitespace` splits on Unicode whitespace and lowercases ASCII letters.
/// `Char` emits one token per Unicode scalar and skips whitespace and
/// punctuation — the fallback for scripts without useful word segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizeMode {
    #[default]
    Whitespace,
    Char,
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::Whitespace => text
            .split_whitespace()
            .map(|t| t.to_ascii_lowercase())
            .collect(),
        TokenizeMode::Char => text
            .chars()
            .filter(|c| {
                !c.is_whitespace() && !c.is_ascii_punctuation() && !SKIPPED_PUNCTUATION.contains(*c)
            })
            .map(String::from)
            .collect(),
    }
}

/// Reads and tokenizes a file.
pub fn tokenize_file(path: &Path, mode: TokenizeMode) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(tokenize(&text, mode))
}

/// Ordered mapping period name → corpus files, loaded from a TSV manifest:
/// one `period<TAB>path` per line, `#` comments skipped, repeated period
/// names appending files to the earlier entry.
#[derive(Debug, Clone)]
pub struct PeriodManifest {
    periods: Vec<(String, Vec<PathBuf>)>,
}

impl PeriodManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let mut periods: Vec<(String, Vec<PathBuf>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, file) = line
                .split_once('\t')
                .ok_or(CorpusError::ManifestSyntax { line: i + 1 })?;
            let name = name.trim();
            let file = file.trim();
            if name.is_empty() || file.is_empty() {
                return Err(CorpusError::ManifestSyntax { line: i + 1 });
            }
            let mut file_path = PathBuf::from(file);
            if file_path.is_relative() {
                file_path = base.join(file_path);
            }
            if !file_path.is_file() {
                return Err(CorpusError::MissingFile(file_path));
            }
            match periods.iter_mut().find(|(n, _)| n == name) {
                Some((_, files)) => files.push(file_path),
                None => periods.push((name.to_string(), vec![file_path])),
            }
        }
        if periods.is_empty() {
            return Err(CorpusError::EmptyManifest);
        }
        Ok(Self { periods })
    }

    /// Builds a manifest directly; paths are checked at read time instead.
    pub fn from_entries(periods: Vec<(String, Vec<PathBuf>)>) -> Self {
        Self { periods }
    }

    pub fn periods(&self) -> &[(String, Vec<PathBuf>)] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }
}

/// Tokenizes every period in manifest order, concatenating a period's files
/// in their listed order. Errors on unreadable files and empty periods.
pub fn partition_by_period(
    manifest: &PeriodManifest,
    mode: TokenizeMode,
) -> Result<Vec<(String, Vec<String>)>, CorpusError> {
    let mut out = Vec::with_capacity(manifest.len());
    for (name, files) in manifest.periods() {
        let mut tokens = Vec::new();
        for file in files {
            tokens.extend(tokenize_file(file, mode)?);
        }
        if tokens.is_empty() {
            return Err(CorpusError::EmptyPeriod(name.clone()));
        }
        out.push((name.clone(), tokens));
    }
    Ok(out)
}

/// A CBOW training example: a center word id and its in-vocab context ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextPair {
    pub center: u32,
    pub context: Vec<u32>,
}

/// Generates context pairs over the in-vocab token sequence.
///
/// Out-of-vocabulary tokens are removed up front (they neither count as
/// positions nor as gaps). With `subsample_t > 0`, each surviving occurrence
/// of word w is dropped with probability max(0, 1 − √(t/f)) where f is w's
/// relative frequency in the vocabulary; `subsample_t = 0` disables
/// subsampling. Deterministic for a given seed.
pub fn windows(
    tokens: &[String],
    vocab: &Vocabulary,
    window: usize,
    subsample_t: f64,
    seed: u64,
) -> Vec<ContextPair> {
    assert!(window >= 1, "window must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = vocab.total_count() as f64;
    let mut ids: Vec<u32> = Vec::with_capacity(tokens.len());
    for token in tokens {
        let Some(id) = vocab.id(token) else { continue };
        if subsample_t > 0.0 {
            let freq = vocab.count(id) as f64 / total;
            if freq > subsample_t {
                let keep = (subsample_t / freq).sqrt();
                if rng.gen::<f64>() >= keep {
                    continue;
                }
            }
        }
        ids.push(id);
    }
    let mut pairs = Vec::with_capacity(ids.len());
    for (pos, &center) in ids.iter().enumerate() {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(ids.len());
        let mut context = Vec::with_capacity(hi - lo - 1);
        context.extend_from_slice(&ids[lo..pos]);
        context.extend_from_slice(&ids[pos + 1..hi]);
        if !context.is_empty() {
            pairs.push(ContextPair { center, context });
        }
    }
    pairs
}
