//! Corpus ingestion: loading abstract records, keyword filtering, manifest
//! bookkeeping, and the remote-literature port.
//!
//! The on-disk format is JSONL: one record per line with fields `id`,
//! `title`, `abstract`, `keywords`, `year`, `source`. `keywords` and
//! `source` may be omitted (empty set / "local"). Manual review removals
//! are modeled as an exclusion-list file of ids, one per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("duplicate document id {0:?}")]
    DuplicateIdUnlocated(String),
    #[error("invalid document {id:?}: {reason}")]
    InvalidDocument { id: String, reason: String },
    #[error("keyword filter needs at least one term")]
    EmptyTermSet,
    #[error("date range starts {0} after end {1}")]
    UnorderedDateRange(i32, i32),
    #[error("remote literature client: {0}")]
    Remote(String),
}

/// One ingested abstract record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub keywords: BTreeSet<String>,
    pub year: i32,
    #[serde(default = "default_source")]
    pub source: String,
}

fn default_source() -> String {
    "local".to_string()
}

impl Document {
    /// Checks the record-level invariants; returns the violation if any.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".to_string());
        }
        if self.title.is_empty() && self.abstract_text.is_empty() {
            return Err("both title and abstract are empty".to_string());
        }
        if !(1900..=2100).contains(&self.year) {
            return Err(format!("year {} outside [1900, 2100]", self.year));
        }
        Ok(())
    }
}

/// An ordered document collection with a keyword-tag manifest.
///
/// The manifest is always the recomputation from the documents: one count
/// per keyword tag, each document contributing to every tag it carries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    manifest: BTreeMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, recomputing the manifest and rejecting duplicate ids.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for doc in &documents {
            doc.validate()
                .map_err(|reason| CorpusError::InvalidDocument { id: doc.id.clone(), reason })?;
            if !seen.insert(doc.id.clone()) {
                return Err(CorpusError::DuplicateIdUnlocated(doc.id.clone()));
            }
        }
        let manifest = recompute_manifest(&documents);
        Ok(Corpus { documents, manifest })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn manifest(&self) -> &BTreeMap<String, usize> {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }
}

fn recompute_manifest(documents: &[Document]) -> BTreeMap<String, usize> {
    let mut manifest = BTreeMap::new();
    for doc in documents {
        for tag in &doc.keywords {
            *manifest.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    manifest
}

/// Parses a single JSONL corpus record, enforcing document invariants.
pub fn parse_record(line: &str) -> Result<Document, String> {
    let doc: Document = serde_json::from_str(line).map_err(|e| e.to_string())?;
    doc.validate()?;
    Ok(doc)
}

/// Loads a JSONL corpus file. Blank lines are skipped; any malformed or
/// invariant-violating record aborts the load with its line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let reader = BufReader::new(file);

    let mut documents = Vec::new();
    let mut line_of_id: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line =
            line.map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(&line)
            .map_err(|reason| CorpusError::MalformedRecord { line: line_no, reason })?;
        if line_of_id.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId { line: line_no, id: doc.id });
        }
        line_of_id.insert(doc.id.clone(), line_no);
        documents.push(doc);
    }
    Corpus::from_documents(documents)
}

/// Writes a corpus back to JSONL, the inverse of [`load_corpus`].
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for doc in corpus.documents() {
        let line = serde_json::to_string(doc).expect("document serialization cannot fail");
        out.push(line);
    }
    let mut payload = out.join("\n");
    if !payload.is_empty() {
        payload.push('\n');
    }
    let mut file = File::create(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    file.write_all(payload.as_bytes())
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Loads an exclusion list: one document id per line, `#` comments allowed.
pub fn load_exclusions(path: impl AsRef<Path>) -> Result<BTreeSet<String>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    let mut ids = BTreeSet::new();
    for line in BufReader::new(file).lines() {
        let line =
            line.map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        ids.insert(trimmed.to_string());
    }
    Ok(ids)
}

/// Drops the listed ids (the manual-review removal step), recomputing the manifest.
pub fn exclude_ids(corpus: &Corpus, ids: &BTreeSet<String>) -> Corpus {
    let kept: Vec<Document> =
        corpus.documents().iter().filter(|d| !ids.contains(&d.id)).cloned().collect();
    Corpus::from_documents(kept).expect("filtering preserves validity and uniqueness")
}

fn lowercase_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn contains_token_run(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

fn matches_any_term(doc: &Document, term_tokens: &[Vec<String>]) -> bool {
    let title = lowercase_tokens(&doc.title);
    let abstract_ = lowercase_tokens(&doc.abstract_text);
    term_tokens.iter().any(|term| {
        contains_token_run(&title, term)
            || contains_token_run(&abstract_, term)
            || doc.keywords.iter().any(|tag| contains_token_run(&lowercase_tokens(tag), term))
    })
}

/// Retains documents whose title, abstract, or keyword tags contain any of
/// the terms as a case-insensitive whole-token run. Multi-word terms must
/// appear as consecutive tokens.
pub fn filter_by_keywords(
    corpus: &Corpus,
    terms: &BTreeSet<String>,
) -> Result<Corpus, CorpusError> {
    if terms.is_empty() {
        return Err(CorpusError::EmptyTermSet);
    }
    let term_tokens: Vec<Vec<String>> = terms.iter().map(|t| lowercase_tokens(t)).collect();
    let kept: Vec<Document> =
        corpus.documents().iter().filter(|d| matches_any_term(d, &term_tokens)).cloned().collect();
    Corpus::from_documents(kept)
}

/// Keyword-tag counts plus the total document count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub per_keyword: BTreeMap<String, usize>,
    pub total: usize,
}

/// Summarizes a corpus: the manifest plus the total document count. When the
/// tags partition the corpus the total equals the sum of per-tag counts.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    CorpusStats { per_keyword: corpus.manifest().clone(), total: corpus.len() }
}

/// Port for remote literature databases. Implementations map their native
/// records into [`Document`]s; the toolkit never talks to a network service
/// directly and offline runs never construct a client at all.
pub trait LiteratureClient {
    fn search(&self, query: &str, date_range: (i32, i32)) -> Result<Vec<Document>, CorpusError>;
}

/// Fetches documents through the client after validating the date range and
/// every returned record.
pub fn fetch_remote(
    query: &str,
    date_range: (i32, i32),
    client: &dyn LiteratureClient,
) -> Result<Vec<Document>, CorpusError> {
    if date_range.0 > date_range.1 {
        return Err(CorpusError::UnorderedDateRange(date_range.0, date_range.1));
    }
    let docs = client.search(query, date_range)?;
    for doc in &docs {
        doc.validate()
            .map_err(|reason| CorpusError::InvalidDocument { id: doc.id.clone(), reason })?;
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, abstract_: &str, tags: &[&str]) -> Document {
        Document {
            id: id.to_string(),
            title: title.to_string(),
            abstract_text: abstract_.to_string(),
            keywords: tags.iter().map(|s| s.to_string()).collect(),
            year: 2022,
            source: "local".to_string(),
        }
    }

    fn terms(ts: &[&str]) -> BTreeSet<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn loads_three_record_fixture() {
        let f = write_lines(&[
            r#"{"id":"d1","title":"Stroke risk","abstract":"A study.","keywords":["stroke"],"year":2021,"source":"pubmed"}"#,
            r#"{"id":"d2","title":"Brain imaging","abstract":"Another.","keywords":["brain"],"year":2022,"source":"pubmed"}"#,
            r#"{"id":"d3","title":"Rehab outcomes","abstract":"Third.","keywords":["stroke rehabilitation"],"year":2023,"source":"pubmed"}"#,
        ]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.manifest()["stroke"], 1);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_lines(&[]);
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 0);
        assert!(corpus.manifest().is_empty());
    }

    #[test]
    fn duplicate_id_names_line_two() {
        let f = write_lines(&[
            r#"{"id":"d1","title":"One","abstract":"x","year":2020}"#,
            r#"{"id":"d1","title":"Two","abstract":"y","year":2021}"#,
        ]);
        match load_corpus(f.path()) {
            Err(CorpusError::DuplicateId { line, id }) => {
                assert_eq!(line, 2);
                assert_eq!(id, "d1");
            }
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_record_names_line() {
        let f = write_lines(&[
            r#"{"id":"d1","title":"One","abstract":"x","year":2020}"#,
            r#"{"id":"d2","title":"Bad year","abstract":"y","year":1500}"#,
        ]);
        match load_corpus(f.path()) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-record error, got {other:?}"),
        }
    }

    #[test]
    fn filter_keeps_stroke_document_only() {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "Ischemic stroke outcomes", "", &[]),
            doc("d2", "Diabetes management", "insulin", &[]),
        ])
        .unwrap();
        let filtered = filter_by_keywords(&corpus, &terms(&["stroke"])).unwrap();
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered.documents()[0].id, "d1");
    }

    #[test]
    fn filter_is_whole_token() {
        let corpus = Corpus::from_documents(vec![doc("d1", "Strokes and more", "", &[])]).unwrap();
        // "stroke" must not match the token "strokes".
        let filtered = filter_by_keywords(&corpus, &terms(&["stroke"])).unwrap();
        assert_eq!(filtered.len(), 0);
    }

    #[test]
    fn filter_matching_nothing_gives_empty() {
        let corpus = Corpus::from_documents(vec![doc("d1", "Stroke", "", &[])]).unwrap();
        let filtered = filter_by_keywords(&corpus, &terms(&["volcano"])).unwrap();
        assert!(filtered.is_empty());
    }

    #[test]
    fn filter_with_all_tags_is_identity() {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "A", "x", &["stroke"]),
            doc("d2", "B", "y", &["brain"]),
        ])
        .unwrap();
        let filtered = filter_by_keywords(&corpus, &terms(&["stroke", "brain"])).unwrap();
        assert_eq!(&filtered, &corpus);
    }

    #[test]
    fn filter_is_idempotent() {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "stroke study", "", &[]),
            doc("d2", "unrelated", "", &[]),
        ])
        .unwrap();
        let t = terms(&["stroke"]);
        let once = filter_by_keywords(&corpus, &t).unwrap();
        let twice = filter_by_keywords(&once, &t).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn empty_terms_rejected() {
        let corpus = Corpus::default();
        assert!(matches!(
            filter_by_keywords(&corpus, &BTreeSet::new()),
            Err(CorpusError::EmptyTermSet)
        ));
    }

    #[test]
    fn stats_of_empty_corpus() {
        let stats = corpus_stats(&Corpus::default());
        assert!(stats.per_keyword.is_empty());
        assert_eq!(stats.total, 0);
    }

    #[test]
    fn stats_count_documents_not_tags() {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "A", "x", &["a"]),
            doc("d2", "B", "y", &["a"]),
            doc("d3", "C", "z", &["a"]),
            doc("d4", "D", "w", &["b"]),
            doc("d5", "E", "v", &["b"]),
        ])
        .unwrap();
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.per_keyword["a"], 3);
        assert_eq!(stats.per_keyword["b"], 2);
        assert_eq!(stats.total, 5);
    }

    #[test]
    fn exclusions_drop_listed_ids() {
        let corpus =
            Corpus::from_documents(vec![doc("d1", "A", "x", &["a"]), doc("d2", "B", "y", &["b"])])
                .unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# manually reviewed").unwrap();
        writeln!(f, "d2").unwrap();
        let ids = load_exclusions(f.path()).unwrap();
        let pruned = exclude_ids(&corpus, &ids);
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.documents()[0].id, "d1");
        assert!(!pruned.manifest().contains_key("b"));
    }

    #[test]
    fn save_then_load_round_trips() {
        let corpus = Corpus::from_documents(vec![
            doc("d1", "A title", "Some abstract", &["stroke", "brain"]),
            doc("d2", "Another", "", &[]),
        ])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, f.path()).unwrap();
        let reloaded = load_corpus(f.path()).unwrap();
        assert_eq!(reloaded, corpus);
    }

    struct StaticClient(Vec<Document>);
    impl LiteratureClient for StaticClient {
        fn search(&self, _q: &str, _r: (i32, i32)) -> Result<Vec<Document>, CorpusError> {
            Ok(self.0.clone())
        }
    }

    struct FailingClient;
    impl LiteratureClient for FailingClient {
        fn search(&self, _q: &str, _r: (i32, i32)) -> Result<Vec<Document>, CorpusError> {
            Err(CorpusError::Remote("401 unauthorized".to_string()))
        }
    }

    /// Replays documents from a JSONL fixture, standing in for a live service.
    struct RecordedClient(std::path::PathBuf);
    impl LiteratureClient for RecordedClient {
        fn search(&self, _q: &str, range: (i32, i32)) -> Result<Vec<Document>, CorpusError> {
            let corpus = load_corpus(&self.0)?;
            Ok(corpus
                .documents()
                .iter()
                .filter(|d| d.year >= range.0 && d.year <= range.1)
                .cloned()
                .collect())
        }
    }

    #[test]
    fn fetch_remote_passes_documents_through() {
        let client = StaticClient(vec![doc("r1", "A", "x", &[]), doc("r2", "B", "y", &[])]);
        let docs = fetch_remote("stroke", (2020, 2024), &client).unwrap();
        assert_eq!(docs.len(), 2);
    }

    #[test]
    fn fetch_remote_surfaces_auth_failure() {
        let err = fetch_remote("stroke", (2020, 2024), &FailingClient).unwrap_err();
        assert!(matches!(err, CorpusError::Remote(msg) if msg.contains("401")));
    }

    #[test]
    fn fetch_remote_rejects_unordered_range() {
        let client = StaticClient(vec![]);
        assert!(matches!(
            fetch_remote("stroke", (2024, 2020), &client),
            Err(CorpusError::UnorderedDateRange(2024, 2020))
        ));
    }

    #[test]
    fn recorded_fixture_count() {
        let f = write_lines(&[
            r#"{"id":"p1","title":"Stroke one","abstract":"x","year":2021}"#,
            r#"{"id":"p2","title":"Stroke two","abstract":"y","year":2023}"#,
            r#"{"id":"p3","title":"Too old","abstract":"z","year":2010}"#,
        ]);
        let client = RecordedClient(f.path().to_path_buf());
        let docs = fetch_remote("stroke", (2020, 2024), &client).unwrap();
        assert_eq!(docs.len(), 2);
    }
}
