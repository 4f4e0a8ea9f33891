//! Vocabulary management, per-word Cholesky factors, and bit-exact model
//! persistence.
//!
//! Model file layout (little-endian, no padding):
//!
//! ```text
//! magic   4 bytes  "QLM1"
//! version u32      1
//! V       u32      vocabulary size
//! d       u32      state dimension (0 for vocab-only files)
//! flags   u8       bit 0 = complex (must be 0), bit 1 = vocab-only
//! vocab   V × (u32 byte length, UTF-8 bytes, u64 count)
//! payload V × d(d+1)/2 float64, row-major lower triangle
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, packed_len, CholeskyFactor, DensityMatrix, LinalgError};

const MAGIC: [u8; 4] = *b"QLM1";
const FORMAT_VERSION: u32 = 1;

/// Flag bit: complex-valued payload (reserved, always 0 in v1).
pub const FLAG_COMPLEX: u8 = 0b01;
/// Flag bit: vocabulary-only file with zero-dim payload.
pub const FLAG_VOCAB_ONLY: u8 = 0b10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("word not in vocabulary: {0:?}")]
    OutOfVocabulary(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("bad magic bytes (not a QLM1 model file)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("vocabulary record {0} is not valid UTF-8")]
    InvalidUtf8(usize),
    #[error("complex-valued models are not supported")]
    ComplexUnsupported,
    #[error("model is vocabulary-only and stores no factors")]
    VocabOnly,
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn stream_err(e: io::Error) -> ModelError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        ModelError::Truncated
    } else {
        ModelError::Stream(e)
    }
}

/// Ordered vocabulary: dense ids 0..V−1 assigned in first-occurrence order,
/// with exact token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    total_count: u64,
}

impl Vocabulary {
    fn from_parts(words: Vec<String>, counts: Vec<u64>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let total_count = counts.iter().sum();
        Self { words, counts, index, total_count }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Total count over all retained words.
    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Counts the token stream and keeps words with frequency ≥ `min_count`,
/// ordered by first occurrence.
pub fn build_vocab<I>(tokens: I, min_count: u64) -> Result<Vocabulary, ModelError>
where
    I: IntoIterator<Item = String>,
{
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for token in tokens {
        match counts.get_mut(&token) {
            Some(c) => *c += 1,
            None => {
                counts.insert(token.clone(), 1);
                order.push(token);
            }
        }
    }
    let mut words = Vec::new();
    let mut kept_counts = Vec::new();
    for word in order {
        let c = counts[&word];
        if c >= min_count {
            words.push(word);
            kept_counts.push(c);
        }
    }
    if words.is_empty() {
        return Err(ModelError::EmptyVocabulary);
    }
    Ok(Vocabulary::from_parts(words, kept_counts))
}

/// Vocabulary plus one Cholesky factor per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    vocab: Vocabulary,
    dim: usize,
    factors: Vec<CholeskyFactor>,
    flags: u8,
}

impl EmbeddingStore {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flags(&self) -> u8 {
        self.flags
    }

    pub fn is_vocab_only(&self) -> bool {
        self.flags & FLAG_VOCAB_ONLY != 0
    }

    pub fn factor(&self, id: u32) -> &CholeskyFactor {
        &self.factors[id as usize]
    }

    pub fn factor_mut(&mut self, id: u32) -> &mut CholeskyFactor {
        &mut self.factors[id as usize]
    }

    pub fn factors(&self) -> &[CholeskyFactor] {
        &self.factors
    }

    #[cfg(feature = "parallel")]
    pub(crate) fn replace_factors(&mut self, factors: Vec<CholeskyFactor>) {
        assert_eq!(factors.len(), self.factors.len());
        self.factors = factors;
    }

    /// Density matrix of a word id.
    pub fn density_by_id(&self, id: u32) -> Result<DensityMatrix, ModelError> {
        if self.is_vocab_only() {
            return Err(ModelError::VocabOnly);
        }
        Ok(linalg::cholesky_to_density(&self.factors[id as usize])?)
    }

    /// Density matrix of a word, or a catchable error when out of vocabulary.
    pub fn get_density(&self, word: &str) -> Result<DensityMatrix, ModelError> {
        let id = self
            .vocab
            .id(word)
            .ok_or_else(|| ModelError::OutOfVocabulary(word.to_string()))?;
        self.density_by_id(id)
    }
}

/// Builds a store initialized near the maximally mixed state: an untrained
/// word is maximally ambiguous. Deterministic for a given seed.
///
/// Diagonal entries are 1/√dim plus uniform noise in [−0.1/dim, 0.1/dim]
/// clamped at 0; off-diagonals are uniform in the same range.
pub fn init_embeddings(vocab: Vocabulary, dim: usize, seed: u64) -> EmbeddingStore {
    let amplitude = 0.1 / dim as f64;
    init_embeddings_with_amplitude(vocab, dim, seed, amplitude)
}

/// As [`init_embeddings`] with an explicit noise amplitude; amplitude 0 gives
/// exactly I/dim for every word.
pub fn init_embeddings_with_amplitude(
    vocab: Vocabulary,
    dim: usize,
    seed: u64,
    amplitude: f64,
) -> EmbeddingStore {
    assert!(dim >= 2, "dimension must be at least 2");
    assert!(amplitude >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = 1.0 / (dim as f64).sqrt();
    let len = packed_len(dim);
    let mut factors = Vec::with_capacity(vocab.len());
    for _ in 0..vocab.len() {
        let mut lower = vec![0.0; len];
        for i in 0..dim {
            for j in 0..=i {
                let noise = if amplitude > 0.0 {
                    rng.gen_range(-amplitude..amplitude)
                } else {
                    0.0
                };
                let idx = linalg::packed_index(i, j);
                lower[idx] = if i == j { (base + noise).max(0.0) } else { noise };
            }
        }
        factors.push(CholeskyFactor::new(dim, lower).expect("diagonal clamped nonnegative"));
    }
    EmbeddingStore { vocab, dim, factors, flags: 0 }
}

/// Wraps a bare vocabulary as a zero-dim, vocab-only store.
pub fn vocab_only_store(vocab: Vocabulary) -> EmbeddingStore {
    EmbeddingStore { vocab, dim: 0, factors: Vec::new(), flags: FLAG_VOCAB_ONLY }
}

pub fn save_model(store: &EmbeddingStore, path: &Path) -> Result<(), ModelError> {
    let file = File::create(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    write_model(store, &mut w)?;
    w.flush().map_err(ModelError::Stream)
}

pub fn load_model(path: &Path) -> Result<EmbeddingStore, ModelError> {
    let file = File::open(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_model(&mut BufReader::new(file))
}

/// Serializes a store; rejects empty vocabularies.
pub fn write_model<W: Write>(store: &EmbeddingStore, w: &mut W) -> Result<(), ModelError> {
    if store.vocab.is_empty() {
        return Err(ModelError::EmptyVocabulary);
    }
    w.write_all(&MAGIC).map_err(ModelError::Stream)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(ModelError::Stream)?;
    w.write_u32::<LittleEndian>(store.vocab.len() as u32).map_err(ModelError::Stream)?;
    w.write_u32::<LittleEndian>(store.dim as u32).map_err(ModelError::Stream)?;
    w.write_u8(store.flags).map_err(ModelError::Stream)?;
    for (i, word) in store.vocab.words().iter().enumerate() {
        let bytes = word.as_bytes();
        w.write_u32::<LittleEndian>(bytes.len() as u32).map_err(ModelError::Stream)?;
        w.write_all(bytes).map_err(ModelError::Stream)?;
        w.write_u64::<LittleEndian>(store.vocab.count(i as u32)).map_err(ModelError::Stream)?;
    }
    for factor in &store.factors {
        for &x in factor.lower() {
            w.write_f64::<LittleEndian>(x).map_err(ModelError::Stream)?;
        }
    }
    Ok(())
}

/// Deserializes a store, distinguishing bad magic, version mismatch,
/// truncation, and invalid UTF-8.
pub fn read_model<R: Read>(r: &mut R) -> Result<EmbeddingStore, ModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(stream_err)?;
    if magic != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>().map_err(stream_err)?;
    if version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let v = r.read_u32::<LittleEndian>().map_err(stream_err)? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(stream_err)? as usize;
    let flags = r.read_u8().map_err(stream_err)?;
    if flags & FLAG_COMPLEX != 0 {
        return Err(ModelError::ComplexUnsupported);
    }
    if v == 0 {
        return Err(ModelError::EmptyVocabulary);
    }
    let mut words = Vec::with_capacity(v);
    let mut counts = Vec::with_capacity(v);
    for record in 0..v {
        let len = r.read_u32::<LittleEndian>().map_err(stream_err)? as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes).map_err(stream_err)?;
        let word = String::from_utf8(bytes).map_err(|_| ModelError::InvalidUtf8(record))?;
        let count = r.read_u64::<LittleEndian>().map_err(stream_err)?;
        words.push(word);
        counts.push(count);
    }
    let vocab = Vocabulary::from_parts(words, counts);
    let vocab_only = flags & FLAG_VOCAB_ONLY != 0;
    let mut factors = Vec::new();
    if !vocab_only {
        let len = packed_len(dim);
        for _ in 0..v {
            let mut lower = Vec::with_capacity(len);
            for _ in 0..len {
                lower.push(r.read_f64::<LittleEndian>().map_err(stream_err)?);
            }
            factors.push(CholeskyFactor::new(dim, lower)?);
        }
    }
    Ok(EmbeddingStore { vocab, dim, factors, flags })
}
