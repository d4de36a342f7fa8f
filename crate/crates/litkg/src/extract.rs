//! Typed entity and relation extraction over preprocessed documents.
//!
//! Node and edge vocabularies are closed: 13 entity types and 24 relation
//! types, enforced at the type level. Extractors are ports; the bundled
//! [`DeterministicExtractor`] combines a gazetteer (longest match,
//! case-insensitive) with lexical patterns of the form
//! `<X> <verb-phrase> <Y>` and is a pure function of document text,
//! gazetteer, and pattern set. Remote LLM extractors speak a strict
//! JSONL protocol: [`build_llm_prompt`] embeds the taxonomies and schema,
//! [`parse_llm_response`] accepts only that schema. The response schema is
//! an artifact convention of this toolkit, not something the source
//! material prescribes.
//!
//! Sentence boundaries are periods followed by whitespace, applied to raw
//! text before cleaning; mention spans index into the cleaned document
//! text.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::preprocess::{clean_text, raw_text, FieldChoice, Stopwords};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer line {line}: {reason}")]
    GazetteerParse { line: usize, reason: String },
    #[error("pattern line {line}: {reason}")]
    PatternParse { line: usize, reason: String },
    #[error("unparseable extractor response at {fragment:?}: {reason}")]
    ResponseParse { fragment: String, reason: String },
    #[error("remote extractor: {0}")]
    Remote(String),
}

/// The 13 entity categories. The set is closed: no other node type can be
/// represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Diseases,
    Symptoms,
    RiskFactors,
    Treatments,
    Medications,
    Procedures,
    Genes,
    Proteins,
    Biomarkers,
    Hospitals,
    Researchers,
    Organizations,
    Publications,
}

impl NodeType {
    pub const ALL: [NodeType; 13] = [
        NodeType::Diseases,
        NodeType::Symptoms,
        NodeType::RiskFactors,
        NodeType::Treatments,
        NodeType::Medications,
        NodeType::Procedures,
        NodeType::Genes,
        NodeType::Proteins,
        NodeType::Biomarkers,
        NodeType::Hospitals,
        NodeType::Researchers,
        NodeType::Organizations,
        NodeType::Publications,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Diseases => "Diseases",
            NodeType::Symptoms => "Symptoms",
            NodeType::RiskFactors => "RiskFactors",
            NodeType::Treatments => "Treatments",
            NodeType::Medications => "Medications",
            NodeType::Procedures => "Procedures",
            NodeType::Genes => "Genes",
            NodeType::Proteins => "Proteins",
            NodeType::Biomarkers => "Biomarkers",
            NodeType::Hospitals => "Hospitals",
            NodeType::Researchers => "Researchers",
            NodeType::Organizations => "Organizations",
            NodeType::Publications => "Publications",
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        NodeType::ALL.iter().copied().find(|t| t.name() == s)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 24 relation categories, closed like [`NodeType`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    Causes,
    Treats,
    AssociatedWith,
    SymptomOf,
    ExpressedIn,
    EncodedBy,
    BiomarkerFor,
    OccursIn,
    DiagnosedWith,
    DevelopsFrom,
    HasRiskFactor,
    Prevents,
    MonitoredBy,
    PublishedBy,
    ConductedAt,
    FundedBy,
    CollaboratedWith,
    RegulatedBy,
    InteractsWith,
    ObservedIn,
    StudiedIn,
    ImplementedIn,
    ResearchedBy,
    AnalyzedIn,
}

impl EdgeType {
    pub const ALL: [EdgeType; 24] = [
        EdgeType::Causes,
        EdgeType::Treats,
        EdgeType::AssociatedWith,
        EdgeType::SymptomOf,
        EdgeType::ExpressedIn,
        EdgeType::EncodedBy,
        EdgeType::BiomarkerFor,
        EdgeType::OccursIn,
        EdgeType::DiagnosedWith,
        EdgeType::DevelopsFrom,
        EdgeType::HasRiskFactor,
        EdgeType::Prevents,
        EdgeType::MonitoredBy,
        EdgeType::PublishedBy,
        EdgeType::ConductedAt,
        EdgeType::FundedBy,
        EdgeType::CollaboratedWith,
        EdgeType::RegulatedBy,
        EdgeType::InteractsWith,
        EdgeType::ObservedIn,
        EdgeType::StudiedIn,
        EdgeType::ImplementedIn,
        EdgeType::ResearchedBy,
        EdgeType::AnalyzedIn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Causes => "Causes",
            EdgeType::Treats => "Treats",
            EdgeType::AssociatedWith => "AssociatedWith",
            EdgeType::SymptomOf => "SymptomOf",
            EdgeType::ExpressedIn => "ExpressedIn",
            EdgeType::EncodedBy => "EncodedBy",
            EdgeType::BiomarkerFor => "BiomarkerFor",
            EdgeType::OccursIn => "OccursIn",
            EdgeType::DiagnosedWith => "DiagnosedWith",
            EdgeType::DevelopsFrom => "DevelopsFrom",
            EdgeType::HasRiskFactor => "HasRiskFactor",
            EdgeType::Prevents => "Prevents",
            EdgeType::MonitoredBy => "MonitoredBy",
            EdgeType::PublishedBy => "PublishedBy",
            EdgeType::ConductedAt => "ConductedAt",
            EdgeType::FundedBy => "FundedBy",
            EdgeType::CollaboratedWith => "CollaboratedWith",
            EdgeType::RegulatedBy => "RegulatedBy",
            EdgeType::InteractsWith => "InteractsWith",
            EdgeType::ObservedIn => "ObservedIn",
            EdgeType::StudiedIn => "StudiedIn",
            EdgeType::ImplementedIn => "ImplementedIn",
            EdgeType::ResearchedBy => "ResearchedBy",
            EdgeType::AnalyzedIn => "AnalyzedIn",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeType> {
        EdgeType::ALL.iter().copied().find(|t| t.name() == s)
    }

    /// Position within [`EdgeType::ALL`], the canonical axis order for
    /// weight matrices and tensors.
    pub fn ordinal(self) -> usize {
        EdgeType::ALL.iter().position(|t| *t == self).expect("member of ALL")
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a mention or triple was observed: document plus raw-sentence index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub sentence: usize,
}

/// A typed entity span in a document's cleaned text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl Mention {
    /// Canonical entity key: the lowercased surface form. Cleaned text is
    /// already lowercase, so this is the surface itself.
    pub fn canonical_key(&self) -> String {
        self.surface.to_lowercase()
    }
}

/// A typed head-edge-tail candidate with confidence, optional attribute
/// values, and its evidence locator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub head: Mention,
    pub edge: EdgeType,
    pub tail: Mention,
    pub confidence: f64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub evidence: Evidence,
}

/// Mentions found in one document plus the count of rejected items
/// (unknown types, unlocatable surfaces).
#[derive(Debug, Clone, Default)]
pub struct EntityOutput {
    pub mentions: Vec<Mention>,
    pub rejected: usize,
}

/// Candidate triples found in one document plus the rejected-item count.
#[derive(Debug, Clone, Default)]
pub struct RelationOutput {
    pub triples: Vec<CandidateTriple>,
    pub rejected: usize,
}

/// Extractor port: implementations spot typed mentions and typed candidate
/// triples for one document at a time.
pub trait Extractor {
    fn entities(&self, doc: &Document) -> Result<EntityOutput, ExtractError>;
    fn relations(
        &self,
        doc: &Document,
        mentions: &[Mention],
    ) -> Result<RelationOutput, ExtractError>;
}

/// Runs the extractor and enforces the output ordering (span start) and
/// span validity.
pub fn extract_entities(
    doc: &Document,
    extractor: &dyn Extractor,
) -> Result<EntityOutput, ExtractError> {
    let mut out = extractor.entities(doc)?;
    out.mentions.sort_by_key(|m| (m.start, m.end));
    Ok(out)
}

/// Runs relation extraction over previously extracted mentions.
pub fn extract_relations(
    doc: &Document,
    mentions: &[Mention],
    extractor: &dyn Extractor,
) -> Result<RelationOutput, ExtractError> {
    let mut out = extractor.relations(doc, mentions)?;
    out.triples
        .sort_by_key(|t| (t.evidence.sentence, t.head.start, t.tail.start, t.edge.ordinal()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Document layout: sentence splitting + cleaning with stable offsets.

/// One raw sentence after cleaning: its index in the raw sentence sequence
/// and its character range within the cleaned document text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Cleaned document text with sentence offsets. Sentences that clean to
/// nothing keep their raw index but occupy no text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentLayout {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl DocumentLayout {
    /// Raw-sentence index containing the given character offset.
    pub fn sentence_of(&self, offset: usize) -> Option<usize> {
        self.sentences.iter().find(|s| offset >= s.start && offset < s.end).map(|s| s.index)
    }
}

/// Splits raw text into sentences: a period followed by whitespace ends a
/// sentence. The final fragment is a sentence regardless of trailing
/// punctuation.
pub fn split_sentences(raw: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '.' && chars.peek().map(|n| n.is_whitespace()).unwrap_or(false) {
            sentences.push(current.clone());
            current.clear();
            while chars.peek().map(|n| n.is_whitespace()).unwrap_or(false) {
                chars.next();
            }
            continue;
        }
        current.push(c);
    }
    if !current.trim().is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Computes the cleaned text and sentence offsets for a document under the
/// given field choice and stopwords. Pure and deterministic; extraction and
/// cooccurrence counting share it.
pub fn document_layout(
    doc: &Document,
    fields: FieldChoice,
    stopwords: &Stopwords,
) -> DocumentLayout {
    let raw = raw_text(doc, fields);
    let mut text = String::new();
    let mut sentences = Vec::new();
    for (index, raw_sentence) in split_sentences(&raw).into_iter().enumerate() {
        let cleaned = clean_text(&raw_sentence, stopwords);
        if cleaned.is_empty() {
            continue;
        }
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.len();
        text.push_str(&cleaned);
        sentences.push(SentenceSpan { index, start, end: text.len() });
    }
    DocumentLayout { doc_id: doc.id.clone(), text, sentences }
}

// ---------------------------------------------------------------------------
// Gazetteer and pattern files.

/// Parses a gazetteer TSV: `term<TAB>NodeType` per line, `#` comments and
/// blank lines allowed. Terms are kept raw here; the extractor normalizes
/// them against its stopword list.
pub fn parse_gazetteer(text: &str) -> Result<Vec<(String, NodeType)>, ExtractError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        let term = parts.next().unwrap_or("").trim();
        let type_name =
            parts.next().map(str::trim).ok_or_else(|| ExtractError::GazetteerParse {
                line: line_no,
                reason: "expected two tab-separated fields".to_string(),
            })?;
        if parts.next().is_some() {
            return Err(ExtractError::GazetteerParse {
                line: line_no,
                reason: "more than two fields".to_string(),
            });
        }
        if term.is_empty() {
            return Err(ExtractError::GazetteerParse {
                line: line_no,
                reason: "empty term".to_string(),
            });
        }
        let node_type = NodeType::parse(type_name).ok_or_else(|| ExtractError::GazetteerParse {
            line: line_no,
            reason: format!("unknown node type {type_name:?}"),
        })?;
        entries.push((term.to_string(), node_type));
    }
    Ok(entries)
}

/// Loads a gazetteer TSV from disk.
pub fn load_gazetteer(path: impl AsRef<Path>) -> Result<Vec<(String, NodeType)>, ExtractError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| ExtractError::Io { path: path.display().to_string(), source })?;
    parse_gazetteer(&text)
}

/// Parses a pattern TSV: `verb-phrase<TAB>EdgeType` per line.
pub fn parse_patterns(text: &str) -> Result<Vec<(String, EdgeType)>, ExtractError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        let phrase = parts.next().unwrap_or("").trim();
        let type_name = parts.next().map(str::trim).ok_or_else(|| ExtractError::PatternParse {
            line: line_no,
            reason: "expected two tab-separated fields".to_string(),
        })?;
        if parts.next().is_some() {
            return Err(ExtractError::PatternParse {
                line: line_no,
                reason: "more than two fields".to_string(),
            });
        }
        if phrase.is_empty() {
            return Err(ExtractError::PatternParse {
                line: line_no,
                reason: "empty phrase".to_string(),
            });
        }
        let edge = EdgeType::parse(type_name).ok_or_else(|| ExtractError::PatternParse {
            line: line_no,
            reason: format!("unknown edge type {type_name:?}"),
        })?;
        entries.push((phrase.to_string(), edge));
    }
    Ok(entries)
}

/// Loads a pattern TSV from disk.
pub fn load_patterns(path: impl AsRef<Path>) -> Result<Vec<(String, EdgeType)>, ExtractError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| ExtractError::Io { path: path.display().to_string(), source })?;
    parse_patterns(&text)
}

// ---------------------------------------------------------------------------
// Deterministic extractor.

/// Gazetteer + pattern extractor: a pure function of (document text,
/// gazetteer, pattern set, stopwords, field choice).
///
/// Entities: longest-match, case-insensitive dictionary lookup over cleaned
/// tokens, non-overlapping, left to right. Relations: within one sentence,
/// an ordered mention pair whose between-text equals a pattern phrase
/// (compared in cleaned form) yields a candidate triple with confidence 1.0.
#[derive(Debug, Clone)]
pub struct DeterministicExtractor {
    terms: BTreeMap<String, NodeType>,
    max_term_tokens: usize,
    patterns: BTreeMap<String, EdgeType>,
    stopwords: Stopwords,
    fields: FieldChoice,
}

impl DeterministicExtractor {
    pub fn new(
        gazetteer: Vec<(String, NodeType)>,
        patterns: Vec<(String, EdgeType)>,
        stopwords: Stopwords,
        fields: FieldChoice,
    ) -> Result<Self, ExtractError> {
        let mut terms = BTreeMap::new();
        let mut max_term_tokens = 0;
        for (idx, (raw_term, node_type)) in gazetteer.into_iter().enumerate() {
            let term = clean_text(&raw_term, &stopwords);
            if term.is_empty() {
                return Err(ExtractError::GazetteerParse {
                    line: idx + 1,
                    reason: format!("term {raw_term:?} is empty after cleaning"),
                });
            }
            if let Some(existing) = terms.get(&term) {
                if *existing != node_type {
                    return Err(ExtractError::GazetteerParse {
                        line: idx + 1,
                        reason: format!("term {term:?} maps to both {existing} and {node_type}"),
                    });
                }
                continue;
            }
            max_term_tokens = max_term_tokens.max(term.split(' ').count());
            terms.insert(term, node_type);
        }
        let mut cleaned_patterns = BTreeMap::new();
        for (idx, (raw_phrase, edge)) in patterns.into_iter().enumerate() {
            let phrase = clean_text(&raw_phrase, &stopwords);
            if phrase.is_empty() {
                return Err(ExtractError::PatternParse {
                    line: idx + 1,
                    reason: format!("phrase {raw_phrase:?} is empty after cleaning"),
                });
            }
            if let Some(existing) = cleaned_patterns.get(&phrase) {
                if *existing != edge {
                    return Err(ExtractError::PatternParse {
                        line: idx + 1,
                        reason: format!("phrase {phrase:?} maps to both {existing} and {edge}"),
                    });
                }
                continue;
            }
            cleaned_patterns.insert(phrase, edge);
        }
        Ok(DeterministicExtractor {
            terms,
            max_term_tokens,
            patterns: cleaned_patterns,
            stopwords,
            fields,
        })
    }

    pub fn layout(&self, doc: &Document) -> DocumentLayout {
        document_layout(doc, self.fields, &self.stopwords)
    }

    fn match_sentence(
        &self,
        layout: &DocumentLayout,
        sentence: &SentenceSpan,
        doc_id: &str,
    ) -> Vec<Mention> {
        let text = &layout.text[sentence.start..sentence.end];
        // Token start offsets within the sentence.
        let mut tokens: Vec<(usize, &str)> = Vec::new();
        let mut pos = 0;
        for tok in text.split(' ') {
            tokens.push((pos, tok));
            pos += tok.len() + 1;
        }
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = false;
            let upper = self.max_term_tokens.min(tokens.len() - i);
            for len in (1..=upper).rev() {
                let (first_off, _) = tokens[i];
                let (last_off, last_tok) = tokens[i + len - 1];
                let candidate = &text[first_off..last_off + last_tok.len()];
                if let Some(node_type) = self.terms.get(candidate) {
                    let start = sentence.start + first_off;
                    let end = sentence.start + last_off + last_tok.len();
                    mentions.push(Mention {
                        surface: candidate.to_string(),
                        node_type: *node_type,
                        doc_id: doc_id.to_string(),
                        start,
                        end,
                    });
                    i += len;
                    matched = true;
                    break;
                }
            }
            if !matched {
                i += 1;
            }
        }
        mentions
    }
}

impl Extractor for DeterministicExtractor {
    fn entities(&self, doc: &Document) -> Result<EntityOutput, ExtractError> {
        let layout = self.layout(doc);
        let mut mentions = Vec::new();
        for sentence in &layout.sentences {
            mentions.extend(self.match_sentence(&layout, sentence, &doc.id));
        }
        Ok(EntityOutput { mentions, rejected: 0 })
    }

    fn relations(
        &self,
        doc: &Document,
        mentions: &[Mention],
    ) -> Result<RelationOutput, ExtractError> {
        let layout = self.layout(doc);
        let mut triples = Vec::new();
        for sentence in &layout.sentences {
            let in_sentence: Vec<&Mention> = mentions
                .iter()
                .filter(|m| m.start >= sentence.start && m.end <= sentence.end)
                .collect();
            for (i, head) in in_sentence.iter().enumerate() {
                for tail in in_sentence.iter().skip(i + 1) {
                    if head.end >= tail.start {
                        continue;
                    }
                    let between = layout.text[head.end..tail.start].trim();
                    if between.is_empty() {
                        continue;
                    }
                    if let Some(edge) = self.patterns.get(between) {
                        triples.push(CandidateTriple {
                            head: (*head).clone(),
                            edge: *edge,
                            tail: (*tail).clone(),
                            confidence: 1.0,
                            attributes: BTreeMap::new(),
                            evidence: Evidence { doc_id: doc.id.clone(), sentence: sentence.index },
                        });
                    }
                }
            }
        }
        Ok(RelationOutput { triples, rejected: 0 })
    }
}

// ---------------------------------------------------------------------------
// LLM prompt protocol.

/// Builds the extraction prompt for one document. The closed taxonomies are
/// embedded verbatim and the required response schema is spelled out.
pub fn build_llm_prompt(doc: &Document) -> String {
    let node_types: Vec<&str> = NodeType::ALL.iter().map(|t| t.name()).collect();
    let edge_types: Vec<&str> = EdgeType::ALL.iter().map(|t| t.name()).collect();
    format!(
        "Extract typed entities and relations from the document below.\n\
         Allowed entity types (use exactly these names): {}.\n\
         Allowed relation types (use exactly these names): {}.\n\
         Respond with one JSON object per line and nothing else.\n\
         Mention lines: {{\"kind\":\"mention\",\"surface\":\"<text>\",\"type\":\"<entity type>\"}}\n\
         Triple lines: {{\"kind\":\"triple\",\"head\":\"<surface>\",\"edge\":\"<relation type>\",\
         \"tail\":\"<surface>\",\"confidence\":<0..1>,\"attributes\":{{}}}}\n\
         Document id: {}\nTitle: {}\nAbstract: {}\n",
        node_types.join(", "),
        edge_types.join(", "),
        doc.id,
        doc.title,
        doc.abstract_text,
    )
}

/// A mention record parsed from a structured extractor response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMention {
    pub surface: String,
    pub node_type: NodeType,
}

/// A triple record parsed from a structured extractor response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTriple {
    pub head: String,
    pub edge: EdgeType,
    pub tail: String,
    pub confidence: f64,
    pub attributes: BTreeMap<String, String>,
}

/// Validated content of one structured response, with the count of records
/// rejected for out-of-taxonomy types or out-of-range confidences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResponse {
    pub mentions: Vec<ResponseMention>,
    pub triples: Vec<ResponseTriple>,
    pub rejected: usize,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawRecord {
    Mention {
        surface: String,
        #[serde(rename = "type")]
        type_name: String,
    },
    Triple {
        head: String,
        edge: String,
        tail: String,
        #[serde(default)]
        confidence: Option<f64>,
        #[serde(default)]
        attributes: BTreeMap<String, String>,
    },
}

/// Parses a structured extractor response: one JSON record per line.
///
/// A line that is not valid schema JSON fails the whole response (nothing
/// is partially accepted). Well-formed records carrying types outside the
/// closed taxonomies, an empty surface, or a confidence outside [0,1] are
/// dropped and tallied in `rejected`.
pub fn parse_llm_response(text: &str) -> Result<ParsedResponse, ExtractError> {
    let mut out = ParsedResponse::default();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(trimmed).map_err(|e| ExtractError::ResponseParse {
                fragment: truncate_fragment(trimmed),
                reason: e.to_string(),
            })?;
        match record {
            RawRecord::Mention { surface, type_name } => match NodeType::parse(&type_name) {
                Some(node_type) if !surface.trim().is_empty() => {
                    out.mentions
                        .push(ResponseMention { surface: surface.trim().to_string(), node_type });
                }
                _ => out.rejected += 1,
            },
            RawRecord::Triple { head, edge, tail, confidence, attributes } => {
                let confidence = confidence.unwrap_or(1.0);
                match EdgeType::parse(&edge) {
                    Some(edge_type)
                        if (0.0..=1.0).contains(&confidence)
                            && !head.trim().is_empty()
                            && !tail.trim().is_empty() =>
                    {
                        out.triples.push(ResponseTriple {
                            head: head.trim().to_string(),
                            edge: edge_type,
                            tail: tail.trim().to_string(),
                            confidence,
                            attributes,
                        });
                    }
                    _ => out.rejected += 1,
                }
            }
        }
    }
    Ok(out)
}

fn truncate_fragment(line: &str) -> String {
    const LIMIT: usize = 80;
    if line.len() <= LIMIT {
        line.to_string()
    } else {
        let mut cut = LIMIT;
        while !line.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}…", &line[..cut])
    }
}

/// Port to a remote LLM completion endpoint.
pub trait LlmClient {
    fn complete(&self, prompt: &str) -> Result<String, ExtractError>;
}

/// Extractor backed by an [`LlmClient`]. Responses must follow the strict
/// JSONL schema of [`build_llm_prompt`]; surfaces are located in the cleaned
/// document text, and records that cannot be located or typed are tallied
/// as rejected.
pub struct RemoteExtractor<C: LlmClient> {
    pub client: C,
    pub stopwords: Stopwords,
    pub fields: FieldChoice,
}

impl<C: LlmClient> RemoteExtractor<C> {
    fn parsed(&self, doc: &Document) -> Result<(DocumentLayout, ParsedResponse), ExtractError> {
        let prompt = build_llm_prompt(doc);
        let response = self.client.complete(&prompt)?;
        let parsed = parse_llm_response(&response)?;
        let layout = document_layout(doc, self.fields, &self.stopwords);
        Ok((layout, parsed))
    }
}

impl<C: LlmClient> Extractor for RemoteExtractor<C> {
    fn entities(&self, doc: &Document) -> Result<EntityOutput, ExtractError> {
        let (layout, parsed) = self.parsed(doc)?;
        let mut rejected = parsed.rejected;
        let mut mentions = Vec::new();
        for m in parsed.mentions {
            let cleaned_surface = clean_text(&m.surface, &self.stopwords);
            let found = if cleaned_surface.is_empty() {
                None
            } else {
                find_token_run(&layout.text, &cleaned_surface)
            };
            match found {
                Some(start) => mentions.push(Mention {
                    surface: cleaned_surface.clone(),
                    node_type: m.node_type,
                    doc_id: doc.id.clone(),
                    start,
                    end: start + cleaned_surface.len(),
                }),
                None => rejected += 1,
            }
        }
        Ok(EntityOutput { mentions, rejected })
    }

    fn relations(
        &self,
        doc: &Document,
        mentions: &[Mention],
    ) -> Result<RelationOutput, ExtractError> {
        let (layout, parsed) = self.parsed(doc)?;
        let mut rejected = parsed.rejected;
        let mut triples = Vec::new();
        for t in parsed.triples {
            let head_key = clean_text(&t.head, &self.stopwords);
            let tail_key = clean_text(&t.tail, &self.stopwords);
            let head = mentions.iter().find(|m| m.surface == head_key);
            let tail = mentions.iter().find(|m| m.surface == tail_key);
            match (head, tail) {
                (Some(head), Some(tail)) if head != tail => {
                    let sentence = layout.sentence_of(head.start).unwrap_or(0);
                    triples.push(CandidateTriple {
                        head: head.clone(),
                        edge: t.edge,
                        tail: tail.clone(),
                        confidence: t.confidence,
                        attributes: t.attributes,
                        evidence: Evidence { doc_id: doc.id.clone(), sentence },
                    });
                }
                _ => rejected += 1,
            }
        }
        Ok(RelationOutput { triples, rejected })
    }
}

/// Finds `needle` in `haystack` aligned to token boundaries (both are
/// cleaned text). Returns the byte offset of the first aligned occurrence.
fn find_token_run(haystack: &str, needle: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let left_ok = start == 0 || haystack.as_bytes()[start - 1] == b' ';
        let right_ok = end == haystack.len() || haystack.as_bytes()[end] == b' ';
        if left_ok && right_ok {
            return Some(start);
        }
        from = start + 1;
    }
    None
}
