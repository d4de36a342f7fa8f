//! Text normalization, tokenization, and embedding vectors behind a
//! provider port.
//!
//! Cleaning keeps ASCII letters only: punctuation, digits, and any
//! non-ASCII character become spaces, the result is lowercased, whitespace
//! collapses to single spaces, and stopwords are dropped. The bundled
//! stopword list lives in [`DEFAULT_STOPWORDS`] and can be replaced by a
//! file with one word per line.
//!
//! The only embedding provider shipped is [`HashedProjectionProvider`], a
//! deterministic stand-in for remote embedding services: every token seeds
//! a ChaCha stream from a stable hash, per-token vectors are summed and the
//! result unit-normalized. Remote providers plug in through
//! [`EmbeddingProvider`].

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::util::fnv1a64;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding input is empty after cleaning")]
    EmptyInput,
    #[error("embedding provider {provider}: {reason}")]
    Provider { provider: String, reason: String },
    #[error("provider {provider} returned a bad vector: {reason}")]
    BadVector { provider: String, reason: String },
}

/// Bundled English stopword list. Includes the canonical short function
/// words ("and", "to", "in") plus the usual determiners, pronouns, and
/// auxiliaries; domain terms are deliberately absent.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "an", "and", "any", "are", "as", "at", "be",
    "been", "being", "before", "below", "between", "both", "but", "by", "can", "did", "do", "does",
    "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "he", "her",
    "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "more", "most", "no", "nor",
    "not", "of", "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "same",
    "she", "so", "some", "such", "than", "that", "the", "their", "them", "then", "these", "they",
    "this", "those", "through", "to", "under", "up", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "you", "your",
];

/// A stopword set; entries are stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords(DEFAULT_STOPWORDS.iter().map(|w| w.to_string()).collect())
    }
}

impl Stopwords {
    pub fn empty() -> Self {
        Stopwords(BTreeSet::new())
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Stopwords(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    /// Loads one word per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
        let mut words = BTreeSet::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| PreprocessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let w = line.trim();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            words.insert(w.to_lowercase());
        }
        Ok(Stopwords(words))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalized text tied to its source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedText {
    pub source_doc: String,
    pub text: String,
}

/// Normalizes one chunk of raw text: ASCII letters survive lowercased,
/// everything else separates tokens, stopwords are removed, and surviving
/// tokens are joined by single spaces. Idempotent.
pub fn clean_text(raw: &str, stopwords: &Stopwords) -> String {
    let mut lowered = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_ascii_alphabetic() {
            lowered.push(c.to_ascii_lowercase());
        } else {
            lowered.push(' ');
        }
    }
    lowered
        .split_ascii_whitespace()
        .filter(|t| !stopwords.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits cleaned text on single spaces. Joining the tokens with spaces
/// reproduces the input exactly.
pub fn tokenize(cleaned: &str) -> Vec<String> {
    if cleaned.is_empty() {
        return Vec::new();
    }
    cleaned.split(' ').map(|t| t.to_string()).collect()
}

/// Which document fields feed cleaning and extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    TitleOnly,
    AbstractOnly,
    #[default]
    TitleAndAbstract,
}

/// Raw text of a document under the configured field choice. Title and
/// abstract are joined with ". " so the sentence splitter separates them.
pub fn raw_text(doc: &Document, fields: FieldChoice) -> String {
    match fields {
        FieldChoice::TitleOnly => doc.title.clone(),
        FieldChoice::AbstractOnly => doc.abstract_text.clone(),
        FieldChoice::TitleAndAbstract => {
            if doc.title.is_empty() {
                doc.abstract_text.clone()
            } else if doc.abstract_text.is_empty() {
                doc.title.clone()
            } else {
                format!("{}. {}", doc.title, doc.abstract_text)
            }
        }
    }
}

/// Spell correction port. The paper mentions typo correction without
/// specifying it, so the default pass changes nothing.
pub trait SpellCorrector {
    fn correct(&self, raw: &str) -> String;
}

/// The no-op correction pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopSpellCorrector;

impl SpellCorrector for NoopSpellCorrector {
    fn correct(&self, raw: &str) -> String {
        raw.to_string()
    }
}

/// A unit-norm embedding of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero vectors give 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }
}

/// Embedding provider port. Deterministic providers must return identical
/// vectors for identical input.
pub trait EmbeddingProvider {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Raw (not necessarily normalized) vector for the cleaned text.
    fn embed_raw(&self, cleaned: &str) -> Result<Vec<f64>, PreprocessError>;
}

/// Embeds cleaned text through the provider and unit-normalizes the result.
pub fn embed(
    cleaned: &CleanedText,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector, PreprocessError> {
    if cleaned.text.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let mut values = provider.embed_raw(&cleaned.text)?;
    if values.len() != provider.dim() {
        return Err(PreprocessError::BadVector {
            provider: provider.name().to_string(),
            reason: format!("dim {} != declared {}", values.len(), provider.dim()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::BadVector {
            provider: provider.name().to_string(),
            reason: "non-finite component".to_string(),
        });
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(PreprocessError::BadVector {
            provider: provider.name().to_string(),
            reason: "zero vector cannot be normalized".to_string(),
        });
    }
    for v in &mut values {
        *v /= norm;
    }
    let dim = values.len();
    Ok(EmbeddingVector { values, dim })
}

/// Deterministic offline embedding provider: each token's stable hash seeds
/// a ChaCha stream that yields a fixed random projection, token vectors are
/// summed, and [`embed`] normalizes the sum. Identical text always maps to
/// the identical vector, across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashedProjectionProvider {
    dim: usize,
}

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

impl Default for HashedProjectionProvider {
    fn default() -> Self {
        HashedProjectionProvider { dim: DEFAULT_EMBEDDING_DIM }
    }
}

impl HashedProjectionProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedProjectionProvider { dim }
    }
}

impl EmbeddingProvider for HashedProjectionProvider {
    fn name(&self) -> &str {
        "hashed-projection"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, cleaned: &str) -> Result<Vec<f64>, PreprocessError> {
        let mut sum = vec![0.0f64; self.dim];
        for token in cleaned.split(' ').filter(|t| !t.is_empty()) {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()));
            for s in sum.iter_mut() {
                *s += rng.gen_range(-1.0f64..1.0);
            }
        }
        Ok(sum)
    }
}

/// Writes the cleaned-corpus cache: one JSON record per document.
pub fn save_cleaned(
    cleaned: &[CleanedText],
    path: impl AsRef<Path>,
) -> Result<(), PreprocessError> {
    let path = path.as_ref();
    let mut file = File::create(path)
        .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
    for record in cleaned {
        let line = serde_json::to_string(record).expect("cleaned text serializes");
        writeln!(file, "{line}")
            .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}

/// Reads a cleaned-corpus cache written by [`save_cleaned`].
pub fn load_cleaned(path: impl AsRef<Path>) -> Result<Vec<CleanedText>, PreprocessError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line
            .map_err(|source| PreprocessError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CleanedText = serde_json::from_str(&line).map_err(|e| PreprocessError::Io {
            path: format!("{}:{}", path.display(), idx + 1),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cleaned(text: &str) -> CleanedText {
        CleanedText { source_doc: "d1".to_string(), text: text.to_string() }
    }

    #[test]
    fn clean_strips_punctuation_digits_and_stopwords() {
        let got = clean_text("Stroke, Affects!! 15 Patients.", &Stopwords::default());
        assert_eq!(got, "stroke affects patients");
    }

    #[test]
    fn clean_of_empty_is_empty() {
        assert_eq!(clean_text("", &Stopwords::default()), "");
    }

    #[test]
    fn clean_removes_pure_stopword_text() {
        assert_eq!(clean_text("and to in", &Stopwords::default()), "");
    }

    #[test]
    fn clean_strips_non_ascii_letters() {
        assert_eq!(clean_text("naïve café stroke", &Stopwords::empty()), "na ve caf stroke");
    }

    #[test]
    fn tokenize_splits_on_spaces() {
        assert_eq!(tokenize("stroke affects patients"), vec!["stroke", "affects", "patients"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn raw_text_joins_title_and_abstract_with_sentence_break() {
        let doc = Document {
            id: "d".to_string(),
            title: "Title here".to_string(),
            abstract_text: "Body here".to_string(),
            keywords: Default::default(),
            year: 2020,
            source: "local".to_string(),
        };
        assert_eq!(raw_text(&doc, FieldChoice::TitleAndAbstract), "Title here. Body here");
        assert_eq!(raw_text(&doc, FieldChoice::TitleOnly), "Title here");
        assert_eq!(raw_text(&doc, FieldChoice::AbstractOnly), "Body here");
    }

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let provider = HashedProjectionProvider::default();
        let a = embed(&cleaned("stroke"), &provider).unwrap();
        let b = embed(&cleaned("stroke"), &provider).unwrap();
        let c = embed(&cleaned("diabetes"), &provider).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((c.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dim, DEFAULT_EMBEDDING_DIM);
    }

    #[test]
    fn embedding_rejects_empty_input() {
        let provider = HashedProjectionProvider::default();
        assert!(matches!(embed(&cleaned(""), &provider), Err(PreprocessError::EmptyInput)));
    }

    #[test]
    fn embedding_respects_configured_dim() {
        let provider = HashedProjectionProvider::new(16);
        let v = embed(&cleaned("stroke treatment"), &provider).unwrap();
        assert_eq!(v.values.len(), 16);
    }

    #[test]
    fn provider_failure_is_surfaced() {
        struct Broken;
        impl EmbeddingProvider for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn dim(&self) -> usize {
                4
            }
            fn embed_raw(&self, _: &str) -> Result<Vec<f64>, PreprocessError> {
                Err(PreprocessError::Provider {
                    provider: "broken".to_string(),
                    reason: "boom".to_string(),
                })
            }
        }
        assert!(matches!(
            embed(&cleaned("stroke"), &Broken),
            Err(PreprocessError::Provider { .. })
        ));
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let provider = HashedProjectionProvider::default();
        let a = embed(&cleaned("ischemic stroke"), &provider).unwrap();
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cleaned_cache_round_trips() {
        let records = vec![cleaned("stroke affects patients"), cleaned("")];
        let f = tempfile::NamedTempFile::new().unwrap();
        save_cleaned(&records, f.path()).unwrap();
        assert_eq!(load_cleaned(f.path()).unwrap(), records);
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(raw in ".{0,120}") {
            let stop = Stopwords::default();
            let once = clean_text(&raw, &stop);
            let twice = clean_text(&once, &stop);
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn clean_alphabet_is_lowercase_and_space(raw in ".{0,120}") {
            let out = clean_text(&raw, &Stopwords::default());
            prop_assert!(out.chars().all(|c| c == ' ' || c.is_ascii_lowercase()));
            prop_assert!(!out.contains("  "));
            prop_assert!(!out.starts_with(' ') && !out.ends_with(' '));
        }

        #[test]
        fn tokenize_round_trips(raw in "[a-zA-Z ,.!0-9]{0,80}") {
            let text = clean_text(&raw, &Stopwords::empty());
            let tokens = tokenize(&text);
            prop_assert_eq!(tokens.join(" "), text);
        }
    }
}
