//! End-to-end orchestration: one declarative JSON config drives corpus
//! ingestion, cleaning, extraction, co-occurrence statistics, topic and
//! relation models, tensor factorization, graph assembly, evaluation, and
//! link prediction, writing every artifact into a run directory.
//!
//! Reruns with an identical config and seed produce byte-identical
//! artifacts: nothing here writes timestamps, machine names, or any other
//! run-local state. Each stage can also run in isolation against a run
//! directory produced by earlier stages; deterministic upstream state that
//! has no on-disk loader is recomputed in memory from the durable
//! artifacts, which yields the same bytes.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    corpus_stats, exclude_ids, filter_by_keywords, load_corpus, load_exclusions, save_corpus,
    Corpus,
};
use crate::eval::{
    consistency_check, fraction4, load_prompts, prompt_validation, RecordedJudge,
    DEFAULT_CONSISTENCY_SAMPLE,
};
use crate::extract::{
    document_layout, extract_entities, extract_relations, load_gazetteer, load_patterns,
    CandidateTriple, DeterministicExtractor, DocumentLayout, Extractor, LlmClient, Mention,
    RemoteExtractor,
};
use crate::graph::{
    export_graph, import_graph, save_graph, GraphFormat, KnowledgeGraph, DEFAULT_TAU,
};
use crate::linkpred::{
    evaluate, load_dataset, metrics, random_ranking_baseline_mrr, render_metrics_table, train,
    ModelConfig, RankMode,
};
use crate::preprocess::{
    embed, load_cleaned, save_cleaned, tokenize, CleanedText, EmbeddingVector, FieldChoice,
    HashedProjectionProvider, Stopwords, DEFAULT_EMBEDDING_DIM,
};
use crate::relmodel::{
    em_fit, featurize, relation_posterior, EmConfig, FeatureContext, FeatureVector,
    TrainingCandidate, Weights,
};
use crate::stats::{
    count_cooccurrences, estimate_joint, log_normalize, save_matrix_tsv, CooccurrenceCounts,
    LogProbabilityMatrix, Window, DEFAULT_ALPHA, DEFAULT_EPSILON,
};
use crate::tensor::{
    build_tensor, cp_als, relation_score, save_factors, save_tensor, CPFactors, CpConfig,
    DataTensor,
};
use crate::topics::{fit_lda, save_model_tsv, LdaConfig, LdaModel, TokenizedDoc};
use crate::util::{fnv1a64, sci12};

/// Errors from config handling and pipeline execution.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// The config is unusable as written; nothing was run.
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A stage aborted; artifacts written so far are retained.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync + 'static>,
    },
    /// A stage was invoked before the stage that produces its input.
    #[error("stage {stage} needs {path}; run the stage that produces it first")]
    MissingArtifact { stage: &'static str, path: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn stage_fail<E: std::error::Error + Send + Sync + 'static>(
    stage: &'static str,
) -> impl FnOnce(E) -> PipelineError {
    move |source| PipelineError::Stage { stage, source: Box::new(source) }
}

fn stage_msg(stage: &'static str, msg: String) -> PipelineError {
    PipelineError::Stage { stage, source: Box::new(std::io::Error::other(msg)) }
}

/// Which extraction engine the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    /// Gazetteer and pattern matching; fully offline.
    #[default]
    Deterministic,
    /// A completion endpoint behind the [`LlmClient`] port.
    Remote,
}

/// The declarative run config. Relative paths in a config file are
/// resolved against the config file's directory by [`load_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus JSONL path (required).
    pub corpus: String,
    pub stopwords: Option<String>,
    /// Optional file of document ids to drop, one per line.
    pub exclusions: Option<String>,
    /// Optional keyword filter; empty means keep every document.
    pub keywords: Vec<String>,
    pub extractor: ExtractorKind,
    /// Gazetteer TSV (term, node type); required by the deterministic
    /// extractor.
    pub gazetteer: Option<String>,
    /// Pattern TSV (phrase, edge type); required by the deterministic
    /// extractor.
    pub patterns: Option<String>,
    /// Remote completion endpoint; forbidden when `offline` is set.
    pub endpoint: Option<String>,
    pub fields: FieldChoice,
    pub window: Window,
    /// Smoothing weight for the joint entity-pair estimate.
    pub alpha: f64,
    /// Floor added before the elementwise log transform.
    pub epsilon: f64,
    pub embedding_dim: usize,
    pub lda: LdaConfig,
    pub em: EmConfig,
    pub cp: CpConfig,
    pub cp_rank: usize,
    /// Weight of the relation-model posterior in edge confidence.
    pub w_model: f64,
    /// Weight of the tensor reconstruction score in edge confidence.
    pub w_tensor: f64,
    /// Minimum composed confidence for an edge to enter the graph.
    pub tau: f64,
    /// Validation prompts TSV; enables the eval stage together with
    /// `judge_verdicts`.
    pub prompts: Option<String>,
    /// Recorded judge verdicts TSV; enables the eval stage together with
    /// `prompts`.
    pub judge_verdicts: Option<String>,
    pub consistency_sample: usize,
    /// Directory holding train.tsv / valid.tsv / test.tsv; enables the
    /// link-prediction stage.
    pub linkpred_dir: Option<String>,
    pub model: ModelConfig,
    /// Run seed: drives evaluation sampling; model seeds live in their
    /// own configs.
    pub seed: u64,
    /// Forbids every remote dependency; the whole pipeline then runs
    /// without network access.
    pub offline: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: String::new(),
            stopwords: None,
            exclusions: None,
            keywords: Vec::new(),
            extractor: ExtractorKind::Deterministic,
            gazetteer: None,
            patterns: None,
            endpoint: None,
            fields: FieldChoice::default(),
            window: Window::default(),
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            lda: LdaConfig::default(),
            em: EmConfig::default(),
            cp: CpConfig::default(),
            cp_rank: 4,
            w_model: 0.7,
            w_tensor: 0.3,
            tau: DEFAULT_TAU,
            prompts: None,
            judge_verdicts: None,
            consistency_sample: DEFAULT_CONSISTENCY_SAMPLE,
            linkpred_dir: None,
            model: ModelConfig::default(),
            seed: 0,
            offline: false,
        }
    }
}

impl PipelineConfig {
    /// Checks every invariant a run depends on. The offline guard runs
    /// first so a forbidden remote setup is reported before anything else.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.offline && (self.extractor == ExtractorKind::Remote || self.endpoint.is_some()) {
            return Err(PipelineError::Config(
                "offline mode forbids remote endpoints: set extractor = \"deterministic\" and \
                 remove the endpoint"
                    .to_string(),
            ));
        }
        if self.corpus.is_empty() {
            return Err(PipelineError::Config("corpus path is required".to_string()));
        }
        if self.w_model < 0.0 || self.w_tensor < 0.0 {
            return Err(PipelineError::Config(format!(
                "score weights must be nonnegative, got w_model = {}, w_tensor = {}",
                self.w_model, self.w_tensor
            )));
        }
        if (self.w_model + self.w_tensor - 1.0).abs() > 1e-9 {
            return Err(PipelineError::Config(format!(
                "score weights must sum to 1, got w_model + w_tensor = {}",
                self.w_model + self.w_tensor
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(PipelineError::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.cp_rank == 0 {
            return Err(PipelineError::Config("cp_rank must be at least 1".to_string()));
        }
        if self.embedding_dim == 0 {
            return Err(PipelineError::Config("embedding_dim must be at least 1".to_string()));
        }
        if self.extractor == ExtractorKind::Deterministic
            && (self.gazetteer.is_none() || self.patterns.is_none())
        {
            return Err(PipelineError::Config(
                "the deterministic extractor needs both gazetteer and patterns paths".to_string(),
            ));
        }
        if self.prompts.is_some() != self.judge_verdicts.is_some() {
            return Err(PipelineError::Config(
                "prompts and judge_verdicts enable the eval stage together: set both or neither"
                    .to_string(),
            ));
        }
        self.lda.validate().map_err(|e| PipelineError::Config(format!("lda: {e}")))?;
        self.model.validate().map_err(|e| PipelineError::Config(format!("model: {e}")))?;
        for (what, path) in self.referenced_paths() {
            if !Path::new(&path).exists() {
                return Err(PipelineError::Config(format!("{what} path does not exist: {path}")));
            }
        }
        Ok(())
    }

    /// Every filesystem input the config references, with its field name.
    fn referenced_paths(&self) -> Vec<(&'static str, String)> {
        let mut paths = vec![("corpus", self.corpus.clone())];
        let optional = [
            ("stopwords", &self.stopwords),
            ("exclusions", &self.exclusions),
            ("gazetteer", &self.gazetteer),
            ("patterns", &self.patterns),
            ("prompts", &self.prompts),
            ("judge_verdicts", &self.judge_verdicts),
            ("linkpred_dir", &self.linkpred_dir),
        ];
        for (what, value) in optional {
            if let Some(p) = value {
                paths.push((what, p.clone()));
            }
        }
        paths
    }

    /// Resolves every relative path in the config against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |value: &mut String| {
            if !value.is_empty() && Path::new(value.as_str()).is_relative() {
                *value = base.join(value.as_str()).display().to_string();
            }
        };
        resolve(&mut self.corpus);
        for field in [
            &mut self.stopwords,
            &mut self.exclusions,
            &mut self.gazetteer,
            &mut self.patterns,
            &mut self.prompts,
            &mut self.judge_verdicts,
            &mut self.linkpred_dir,
        ]
        .into_iter()
        .flatten()
        {
            resolve(field);
        }
    }

    /// Stable 16-hex-digit digest of the resolved config, recorded in the
    /// manifest and echoed by every report.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }

    /// The config as one JSON line, for report echoes.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parses a config from JSON text. Unknown fields are rejected so typos
/// fail loudly instead of silently using defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig, PipelineError> {
    serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
}

/// Loads a config file and resolves its relative paths against the file's
/// own directory, so a config can travel with its fixtures.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = parse_config(&text)?;
    if let Some(dir) = path.parent() {
        config.resolve_paths(dir);
    }
    Ok(config)
}

/// One stage's outcome inside the run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// `completed` or `skipped`.
    pub status: String,
    /// Short human-readable summary (counts, rates) or the skip reason.
    pub detail: String,
    /// Files this stage wrote, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl StageRecord {
    fn completed(stage: &str, detail: String, artifacts: &[&str]) -> StageRecord {
        StageRecord {
            stage: stage.to_string(),
            status: "completed".to_string(),
            detail,
            artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
        }
    }

    fn skipped(stage: &str, reason: &str) -> StageRecord {
        StageRecord {
            stage: stage.to_string(),
            status: "skipped".to_string(),
            detail: reason.to_string(),
            artifacts: Vec::new(),
        }
    }
}

/// The run's durable record: seed, config digest, tool versions, the full
/// resolved config, and one record per stage. Contains no timestamps so
/// identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

/// In-memory state threaded through the stages of one run. Subcommand
/// entry points rebuild the parts they need from the run directory.
struct PipelineState {
    stopwords: Stopwords,
    corpus: Option<Corpus>,
    layouts: Vec<DocumentLayout>,
    cleaned: Vec<CleanedText>,
    mentions: Vec<Mention>,
    candidates: Vec<CandidateTriple>,
    counts: Option<CooccurrenceCounts>,
    log_matrix: Option<LogProbabilityMatrix>,
    lda: Option<LdaModel>,
    features: Vec<FeatureVector>,
    weights: Option<Weights>,
    tensor: Option<DataTensor>,
    factors: Option<CPFactors>,
    graph: Option<KnowledgeGraph>,
}

impl PipelineState {
    fn new() -> PipelineState {
        PipelineState {
            stopwords: Stopwords::empty(),
            corpus: None,
            layouts: Vec::new(),
            cleaned: Vec::new(),
            mentions: Vec::new(),
            candidates: Vec::new(),
            counts: None,
            log_matrix: None,
            lda: None,
            features: Vec::new(),
            weights: None,
            tensor: None,
            factors: None,
            graph: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact helpers.

const CORPUS_FILE: &str = "corpus.jsonl";
const CORPUS_STATS_FILE: &str = "corpus_stats.json";
const CLEANED_FILE: &str = "cleaned.jsonl";
const MENTIONS_FILE: &str = "mentions.jsonl";
const CANDIDATES_FILE: &str = "candidates.jsonl";
const JOINT_FILE: &str = "joint.tsv";
const LOG_JOINT_FILE: &str = "log_joint.tsv";
const LDA_DIR: &str = "lda";
const WEIGHTS_FILE: &str = "em_weights.tsv";
const EM_TRACE_FILE: &str = "em_trace.tsv";
const TENSOR_DIR: &str = "tensor";
const GRAPH_STATS_FILE: &str = "graph_stats.json";
const EVAL_REPORT_FILE: &str = "eval_report.txt";
const LINKPRED_REPORT_FILE: &str = "linkpred_report.tsv";
const MANIFEST_FILE: &str = "run_manifest.json";

fn graph_file(format: GraphFormat) -> &'static str {
    match format {
        GraphFormat::Graphml => "graph.graphml",
        GraphFormat::Jsonl => "graph.jsonl",
        GraphFormat::Tsv => "graph.tsv",
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_text(path, &text)
}

fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifact serializes"));
        out.push('\n');
    }
    write_text(path, &out)
}

fn load_jsonl<T: serde::de::DeserializeOwned>(
    stage: &'static str,
    path: &Path,
) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .map_err(|e| stage_msg(stage, format!("{} line {}: {e}", path.display(), idx + 1)))?;
        items.push(item);
    }
    Ok(items)
}

fn require_artifact(stage: &'static str, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingArtifact { stage, path: path.display().to_string() })
    }
}

fn load_stopwords(config: &PipelineConfig) -> Result<Stopwords, PipelineError> {
    match &config.stopwords {
        Some(path) => {
            Stopwords::from_file(path).map_err(|e| PipelineError::Config(format!("stopwords: {e}")))
        }
        None => Ok(Stopwords::empty()),
    }
}

// ---------------------------------------------------------------------------
// Stages.

fn stage_ingest(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "ingest";
    let mut corpus = load_corpus(&config.corpus).map_err(stage_fail(STAGE))?;
    if let Some(path) = &config.exclusions {
        let ids = load_exclusions(path).map_err(stage_fail(STAGE))?;
        corpus = exclude_ids(&corpus, &ids);
    }
    if !config.keywords.is_empty() {
        let terms: BTreeSet<String> = config.keywords.iter().cloned().collect();
        corpus = filter_by_keywords(&corpus, &terms).map_err(stage_fail(STAGE))?;
    }
    save_corpus(&corpus, out.join(CORPUS_FILE)).map_err(stage_fail(STAGE))?;
    write_json(&out.join(CORPUS_STATS_FILE), &corpus_stats(&corpus))?;
    let detail = format!("{} documents", corpus.len());
    state.corpus = Some(corpus);
    Ok(StageRecord::completed(STAGE, detail, &[CORPUS_FILE, CORPUS_STATS_FILE]))
}

fn stage_preprocess(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "preprocess";
    let corpus = state.corpus.as_ref().expect("ingest ran");
    state.layouts = corpus
        .documents()
        .iter()
        .map(|d| document_layout(d, config.fields, &state.stopwords))
        .collect();
    state.cleaned = state
        .layouts
        .iter()
        .map(|l| CleanedText { source_doc: l.doc_id.clone(), text: l.text.clone() })
        .collect();
    save_cleaned(&state.cleaned, out.join(CLEANED_FILE)).map_err(stage_fail(STAGE))?;
    let tokens: usize = state.cleaned.iter().map(|c| tokenize(&c.text).len()).sum();
    Ok(StageRecord::completed(
        STAGE,
        format!("{} documents, {} tokens", state.cleaned.len(), tokens),
        &[CLEANED_FILE],
    ))
}

/// Adapter so a borrowed client can feed the remote extractor.
struct ClientRef<'a>(&'a dyn LlmClient);

impl LlmClient for ClientRef<'_> {
    fn complete(&self, prompt: &str) -> Result<String, crate::extract::ExtractError> {
        self.0.complete(prompt)
    }
}

fn run_extractor(
    extractor: &dyn Extractor,
    corpus: &Corpus,
) -> Result<(Vec<Mention>, Vec<CandidateTriple>, usize), crate::extract::ExtractError> {
    let mut mentions = Vec::new();
    let mut candidates = Vec::new();
    let mut rejected = 0;
    for doc in corpus.documents() {
        let entities = extract_entities(doc, extractor)?;
        rejected += entities.rejected;
        let relations = extract_relations(doc, &entities.mentions, extractor)?;
        rejected += relations.rejected;
        mentions.extend(entities.mentions);
        candidates.extend(relations.triples);
    }
    Ok((mentions, candidates, rejected))
}

fn stage_extract(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
    client: Option<&dyn LlmClient>,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "extract";
    let corpus = state.corpus.as_ref().expect("ingest ran");
    let (mentions, candidates, rejected) = match config.extractor {
        ExtractorKind::Deterministic => {
            let gazetteer = load_gazetteer(config.gazetteer.as_ref().expect("validated"))
                .map_err(stage_fail(STAGE))?;
            let patterns = load_patterns(config.patterns.as_ref().expect("validated"))
                .map_err(stage_fail(STAGE))?;
            let extractor = DeterministicExtractor::new(
                gazetteer,
                patterns,
                state.stopwords.clone(),
                config.fields,
            )
            .map_err(stage_fail(STAGE))?;
            run_extractor(&extractor, corpus).map_err(stage_fail(STAGE))?
        }
        ExtractorKind::Remote => match client {
            Some(client) => {
                let extractor = RemoteExtractor {
                    client: ClientRef(client),
                    stopwords: state.stopwords.clone(),
                    fields: config.fields,
                };
                run_extractor(&extractor, corpus).map_err(stage_fail(STAGE))?
            }
            None => {
                return Err(stage_msg(
                    STAGE,
                    "a remote extractor is configured but no completion client is wired in; \
                     use the deterministic extractor or embed the library with a client"
                        .to_string(),
                ))
            }
        },
    };
    save_jsonl(&out.join(MENTIONS_FILE), &mentions)?;
    save_jsonl(&out.join(CANDIDATES_FILE), &candidates)?;
    let detail = format!(
        "{} mentions, {} candidate triples, {} rejected",
        mentions.len(),
        candidates.len(),
        rejected
    );
    state.mentions = mentions;
    state.candidates = candidates;
    Ok(StageRecord::completed(STAGE, detail, &[MENTIONS_FILE, CANDIDATES_FILE]))
}

fn compute_stats(
    config: &PipelineConfig,
    state: &mut PipelineState,
) -> Result<(), crate::stats::StatsError> {
    let counts = count_cooccurrences(&state.layouts, &state.mentions, config.window);
    let joint = estimate_joint(&counts, config.alpha)?;
    let log_matrix = log_normalize(&joint, config.epsilon)?;
    state.counts = Some(counts);
    state.log_matrix = Some(log_matrix);
    Ok(())
}

fn stage_stats(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "stats";
    let counts = count_cooccurrences(&state.layouts, &state.mentions, config.window);
    let joint = estimate_joint(&counts, config.alpha).map_err(stage_fail(STAGE))?;
    save_matrix_tsv(out.join(JOINT_FILE), &joint.entities, &joint.p).map_err(stage_fail(STAGE))?;
    let log_matrix = log_normalize(&joint, config.epsilon).map_err(stage_fail(STAGE))?;
    save_matrix_tsv(out.join(LOG_JOINT_FILE), &log_matrix.entities, &log_matrix.values)
        .map_err(stage_fail(STAGE))?;
    let detail =
        format!("{} entities over {} windows", counts.entities.len(), counts.total_windows);
    state.counts = Some(counts);
    state.log_matrix = Some(log_matrix);
    Ok(StageRecord::completed(STAGE, detail, &[JOINT_FILE, LOG_JOINT_FILE]))
}

fn tokenized_docs(state: &PipelineState) -> Vec<TokenizedDoc> {
    state
        .cleaned
        .iter()
        .map(|c| TokenizedDoc { id: c.source_doc.clone(), tokens: tokenize(&c.text) })
        .filter(|d| !d.tokens.is_empty())
        .collect()
}

fn stage_topics(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "topics";
    let docs = tokenized_docs(state);
    let model = fit_lda(&docs, &config.lda).map_err(stage_fail(STAGE))?;
    let dir = out.join(LDA_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    save_model_tsv(&model, &dir).map_err(stage_fail(STAGE))?;
    let detail = format!(
        "{} topics over {} documents, vocabulary {}",
        model.num_topics(),
        model.doc_ids.len(),
        model.vocab.len()
    );
    state.lda = Some(model);
    Ok(StageRecord::completed(STAGE, detail, &["lda/beta.tsv", "lda/theta.tsv"]))
}

/// Computes the feature vector of every candidate, in candidate order.
/// Deterministic, so the relation-model and graph stages share it whether
/// they run in one process or from reloaded artifacts.
fn ensure_features(config: &PipelineConfig, state: &mut PipelineState) {
    if state.features.len() == state.candidates.len() && !state.candidates.is_empty() {
        return;
    }
    let provider = HashedProjectionProvider::new(config.embedding_dim);
    let doc_tokens: BTreeMap<&str, Vec<String>> =
        state.cleaned.iter().map(|c| (c.source_doc.as_str(), tokenize(&c.text))).collect();
    let empty: Vec<String> = Vec::new();
    let mut pair_counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for c in &state.candidates {
        *pair_counts.entry((c.head.canonical_key(), c.tail.canonical_key())).or_insert(0) += 1;
    }
    let mut embeddings: BTreeMap<String, Option<EmbeddingVector>> = BTreeMap::new();
    let mut embedding_of = |surface: &str, doc: &str| -> Option<EmbeddingVector> {
        embeddings
            .entry(surface.to_string())
            .or_insert_with(|| {
                let cleaned =
                    CleanedText { source_doc: doc.to_string(), text: surface.to_string() };
                embed(&cleaned, &provider).ok()
            })
            .clone()
    };
    let mut features = Vec::with_capacity(state.candidates.len());
    for c in &state.candidates {
        let head_embedding = embedding_of(&c.head.surface, &c.head.doc_id);
        let tail_embedding = embedding_of(&c.tail.surface, &c.tail.doc_id);
        let head_context = doc_tokens.get(c.head.doc_id.as_str()).unwrap_or(&empty);
        let tail_context = doc_tokens.get(c.tail.doc_id.as_str()).unwrap_or(&empty);
        let ctx = FeatureContext {
            counts: state.counts.as_ref(),
            log_matrix: state.log_matrix.as_ref(),
            topic_model: state.lda.as_ref(),
            head_context,
            tail_context,
            head_embedding: head_embedding.as_ref(),
            tail_embedding: tail_embedding.as_ref(),
            pattern_hits: pair_counts[&(c.head.canonical_key(), c.tail.canonical_key())],
        };
        features.push(featurize(&c.head, &c.tail, &ctx));
    }
    state.features = features;
}

fn stage_relmodel(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "relmodel";
    ensure_features(config, state);
    let training: Vec<TrainingCandidate> = state
        .candidates
        .iter()
        .zip(&state.features)
        .map(|(c, f)| TrainingCandidate {
            features: f.clone(),
            observed: c.edge,
            confidence: c.confidence,
        })
        .collect();
    let fit = em_fit(&training, Weights::zeros(), &config.em).map_err(stage_fail(STAGE))?;
    fit.weights.save(out.join(WEIGHTS_FILE)).map_err(stage_fail(STAGE))?;
    let mut trace = String::from("iteration\tq\n");
    for step in &fit.history {
        trace.push_str(&format!("{}\t{}\n", step.iteration, sci12(step.q_value)));
    }
    write_text(&out.join(EM_TRACE_FILE), &trace)?;
    let first = fit.history.first().map(|s| s.q_value).unwrap_or(f64::NAN);
    let last = fit.history.last().map(|s| s.q_value).unwrap_or(f64::NAN);
    let detail = format!(
        "{} candidates, Q {} -> {} over {} accepted iterations",
        training.len(),
        sci12(first),
        sci12(last),
        fit.history.len().saturating_sub(1)
    );
    state.weights = Some(fit.weights);
    Ok(StageRecord::completed(STAGE, detail, &[WEIGHTS_FILE, EM_TRACE_FILE]))
}

fn compute_tensor_factors(
    config: &PipelineConfig,
    state: &mut PipelineState,
) -> Result<Vec<f64>, crate::tensor::TensorError> {
    let tensor = build_tensor(&state.candidates);
    let fit = cp_als(&tensor, config.cp_rank, &config.cp)?;
    let errors = fit.relative_errors.clone();
    state.tensor = Some(tensor);
    state.factors = Some(fit.factors);
    Ok(errors)
}

fn stage_tensor(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "tensor";
    let dir = out.join(TENSOR_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let tensor = build_tensor(&state.candidates);
    save_tensor(&tensor, &dir).map_err(stage_fail(STAGE))?;
    let fit = cp_als(&tensor, config.cp_rank, &config.cp).map_err(stage_fail(STAGE))?;
    save_factors(&fit.factors, &dir).map_err(stage_fail(STAGE))?;
    let mut trace = String::from("iteration\trelative_error\n");
    for (i, err) in fit.relative_errors.iter().enumerate() {
        trace.push_str(&format!("{}\t{}\n", i + 1, sci12(*err)));
    }
    write_text(&dir.join("fit_trace.tsv"), &trace)?;
    let detail = format!(
        "dims {}x{}x{}, rank {}, final relative error {}",
        tensor.dims.0,
        tensor.dims.1,
        tensor.dims.2,
        config.cp_rank,
        fit.relative_errors.last().map(|e| sci12(*e)).unwrap_or_else(|| "n/a".to_string())
    );
    state.tensor = Some(tensor);
    state.factors = Some(fit.factors);
    Ok(StageRecord::completed(
        STAGE,
        detail,
        &[
            "tensor/tensor.tsv",
            "tensor/entities.tsv",
            "tensor/actions.tsv",
            "tensor/attributes.tsv",
            "tensor/factor_entities.tsv",
            "tensor/factor_actions.tsv",
            "tensor/factor_attributes.tsv",
            "tensor/fit_trace.tsv",
        ],
    ))
}

/// Composed edge confidence for one candidate: the posterior mass of the
/// most probable relation, blended with the calibrated tensor
/// reconstruction averaged over the candidate's attribute slots.
fn composed_confidence(
    config: &PipelineConfig,
    candidate: &CandidateTriple,
    features: &FeatureVector,
    weights: &Weights,
    tensor: &DataTensor,
    factors: &CPFactors,
    calibration: &[(usize, usize, usize)],
) -> Result<f64, crate::tensor::TensorError> {
    let posterior = relation_posterior(weights, features);
    let model_score = posterior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = tensor.entity_index[&candidate.head.canonical_key()];
    let j = candidate.edge.ordinal();
    let slots: Vec<usize> = if candidate.attributes.is_empty() {
        vec![tensor.attribute_index[&format!("tail:{}", candidate.tail.canonical_key())]]
    } else {
        candidate
            .attributes
            .iter()
            .map(|(k, v)| tensor.attribute_index[&format!("{k}={v}")])
            .collect()
    };
    let mut tensor_score = 0.0;
    for &k in &slots {
        tensor_score += relation_score(factors, i, j, k, calibration)?;
    }
    tensor_score /= slots.len() as f64;
    Ok(config.w_model * model_score + config.w_tensor * tensor_score)
}

fn stage_graph(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "graph";
    ensure_features(config, state);
    let weights = state.weights.as_ref().expect("relmodel ran");
    let tensor = state.tensor.as_ref().expect("tensor ran");
    let factors = state.factors.as_ref().expect("tensor ran");
    let calibration: Vec<(usize, usize, usize)> = tensor.entries.keys().copied().collect();
    let mut graph = KnowledgeGraph::new();
    let mut below = 0usize;
    for (candidate, features) in state.candidates.iter().zip(&state.features) {
        let confidence = composed_confidence(
            config,
            candidate,
            features,
            weights,
            tensor,
            factors,
            &calibration,
        )
        .map_err(stage_fail(STAGE))?;
        if confidence < config.tau {
            below += 1;
            continue;
        }
        graph
            .upsert_node(
                &candidate.head.surface,
                candidate.head.node_type,
                &candidate.evidence.doc_id,
            )
            .map_err(stage_fail(STAGE))?;
        graph
            .upsert_node(
                &candidate.tail.surface,
                candidate.tail.node_type,
                &candidate.evidence.doc_id,
            )
            .map_err(stage_fail(STAGE))?;
        let scored = CandidateTriple { confidence, ..candidate.clone() };
        graph.add_edge(&scored, config.tau).map_err(stage_fail(STAGE))?;
    }
    for format in [GraphFormat::Graphml, GraphFormat::Jsonl, GraphFormat::Tsv] {
        save_graph(&graph, out.join(graph_file(format)), format).map_err(stage_fail(STAGE))?;
    }
    let stats = graph.stats();
    write_json(&out.join(GRAPH_STATS_FILE), &stats)?;
    let detail = format!(
        "{} nodes, {} edges; {} candidates below tau = {}",
        stats.node_count, stats.edge_count, below, config.tau
    );
    state.graph = Some(graph);
    Ok(StageRecord::completed(
        STAGE,
        detail,
        &["graph.graphml", "graph.jsonl", "graph.tsv", GRAPH_STATS_FILE],
    ))
}

fn rate_text(rate: Option<f64>) -> String {
    match rate {
        Some(r) => fraction4(r),
        None => "undefined".to_string(),
    }
}

fn stage_eval(
    config: &PipelineConfig,
    out: &Path,
    state: &mut PipelineState,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "eval";
    let (prompts_path, verdicts_path) = match (&config.prompts, &config.judge_verdicts) {
        (Some(p), Some(v)) => (p, v),
        _ => return Ok(StageRecord::skipped(STAGE, "no prompts configured")),
    };
    let graph = state.graph.as_ref().expect("graph ran");
    let prompts = load_prompts(prompts_path).map_err(stage_fail(STAGE))?;
    let judge = RecordedJudge::load(verdicts_path).map_err(stage_fail(STAGE))?;
    let validation = prompt_validation(graph, &prompts, &judge).map_err(stage_fail(STAGE))?;
    let consistency = consistency_check(graph, config.consistency_sample, &judge, config.seed)
        .map_err(stage_fail(STAGE))?;

    let mut report = String::new();
    report.push_str("# knowledge-graph evaluation report\n");
    report.push_str(&format!("# config-hash: {}\n", config.digest()));
    report.push_str(&format!("# seed: {}\n", config.seed));
    report.push_str(&format!("# config: {}\n", config.echo()));
    report.push('\n');
    report.push_str("[prompt validation]\n");
    report.push_str(&format!("prompts\t{}\n", prompts.len()));
    report.push_str(&format!("answered\t{}\n", validation.answered));
    report.push_str(&format!("correct\t{}\n", validation.correct));
    report.push_str(&format!("failures\t{}\n", validation.failures));
    report.push_str(&format!("rate\t{}\n", rate_text(validation.rate)));
    report.push('\n');
    report.push_str("[prompt verdicts]\n");
    for verdict in &validation.verdicts {
        report.push_str(&format!(
            "{}\t{}\t{}\n",
            verdict.item,
            verdict.verdict.name(),
            verdict.rationale
        ));
    }
    report.push('\n');
    report.push_str("[consistency review]\n");
    report.push_str(&format!("sampled\t{}\n", consistency.sampled.len()));
    report.push_str(&format!("judged\t{}\n", consistency.judged));
    report.push_str(&format!("consistent\t{}\n", consistency.consistent));
    report.push_str(&format!("failures\t{}\n", consistency.failures));
    report.push_str(&format!("rate\t{}\n", rate_text(consistency.rate)));
    report.push('\n');
    report.push_str("[sampled edges]\n");
    for item in &consistency.sampled {
        report.push_str(item);
        report.push('\n');
    }
    report.push('\n');
    report.push_str("[flagged edges]\n");
    for item in &consistency.flagged {
        report.push_str(item);
        report.push('\n');
    }
    write_text(&out.join(EVAL_REPORT_FILE), &report)?;
    let detail = format!(
        "validation rate {}, consistency rate {}",
        rate_text(validation.rate),
        rate_text(consistency.rate)
    );
    Ok(StageRecord::completed(STAGE, detail, &[EVAL_REPORT_FILE]))
}

fn stage_linkpred(config: &PipelineConfig, out: &Path) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "linkpred";
    let dir = match &config.linkpred_dir {
        Some(d) => PathBuf::from(d),
        None => return Ok(StageRecord::skipped(STAGE, "no link-prediction splits configured")),
    };
    for split in ["train.tsv", "valid.tsv", "test.tsv"] {
        require_artifact(STAGE, &dir.join(split))?;
    }
    let data = load_dataset(dir.join("train.tsv"), dir.join("valid.tsv"), dir.join("test.tsv"))
        .map_err(stage_fail(STAGE))?;
    let outcome = train(&data, &config.model).map_err(stage_fail(STAGE))?;
    let raw = evaluate(&outcome.model, &data, RankMode::Raw).map_err(stage_fail(STAGE))?;
    let filtered =
        evaluate(&outcome.model, &data, RankMode::Filtered).map_err(stage_fail(STAGE))?;
    let raw_metrics = metrics(&raw.ranks).map_err(stage_fail(STAGE))?;
    let filtered_metrics = metrics(&filtered.ranks).map_err(stage_fail(STAGE))?;
    let baseline_raw =
        random_ranking_baseline_mrr(&data, RankMode::Raw).map_err(stage_fail(STAGE))?;
    let baseline_filtered =
        random_ranking_baseline_mrr(&data, RankMode::Filtered).map_err(stage_fail(STAGE))?;
    let kind = config.model.kind.name();
    let table = render_metrics_table(&[
        (format!("{kind} raw"), raw_metrics),
        (format!("{kind} filtered"), filtered_metrics.clone()),
    ]);
    let mut report = String::new();
    report.push_str("# link-prediction report\n");
    report.push_str(&format!("# config-hash: {}\n", config.digest()));
    report.push_str(&format!("# seed: {}\n", config.seed));
    report.push_str(&format!("# config: {}\n", config.echo()));
    report.push_str(&format!(
        "# random-baseline-mrr\traw {:.3}\tfiltered {:.3}\n",
        baseline_raw, baseline_filtered
    ));
    report.push_str(&table);
    write_text(&out.join(LINKPRED_REPORT_FILE), &report)?;
    let detail = format!(
        "{} queries, filtered MRR {:.3} (chance {:.3})",
        filtered_metrics.queries, filtered_metrics.mrr, baseline_filtered
    );
    Ok(StageRecord::completed(STAGE, detail, &[LINKPRED_REPORT_FILE]))
}

// ---------------------------------------------------------------------------
// Whole-pipeline entry points.

/// Runs every stage into `out_dir` with no remote client wired in; a
/// config that demands one fails at the extract stage.
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<RunManifest, PipelineError> {
    run_pipeline_with(config, out_dir, None)
}

/// Runs every stage into `out_dir`. `client` supplies the completion
/// endpoint when the config selects the remote extractor. On a stage
/// failure every artifact already written stays on disk for inspection.
pub fn run_pipeline_with(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
    client: Option<&dyn LlmClient>,
) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut state = PipelineState::new();
    state.stopwords = load_stopwords(config)?;
    let mut stages = Vec::new();
    stages.push(stage_ingest(config, out, &mut state)?);
    stages.push(stage_preprocess(config, out, &mut state)?);
    stages.push(stage_extract(config, out, &mut state, client)?);
    stages.push(stage_stats(config, out, &mut state)?);
    stages.push(stage_topics(config, out, &mut state)?);
    stages.push(stage_relmodel(config, out, &mut state)?);
    stages.push(stage_tensor(config, out, &mut state)?);
    stages.push(stage_graph(config, out, &mut state)?);
    stages.push(stage_eval(config, out, &mut state)?);
    stages.push(stage_linkpred(config, out)?);
    let manifest = RunManifest {
        versions: BTreeMap::from([(
            env!("CARGO_PKG_NAME").to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]),
        seed: config.seed,
        config_hash: config.digest(),
        config: config.clone(),
        stages,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Single-stage entry points (subcommand backends). Each validates the
// config, reloads what it needs from the run directory, recomputes
// deterministic in-memory state, and runs exactly its stage.

fn reload_corpus(
    stage: &'static str,
    out: &Path,
    state: &mut PipelineState,
) -> Result<(), PipelineError> {
    let path = out.join(CORPUS_FILE);
    require_artifact(stage, &path)?;
    state.corpus = Some(load_corpus(&path).map_err(stage_fail(stage))?);
    Ok(())
}

fn reload_cleaned(
    stage: &'static str,
    out: &Path,
    state: &mut PipelineState,
) -> Result<(), PipelineError> {
    let path = out.join(CLEANED_FILE);
    require_artifact(stage, &path)?;
    state.cleaned = load_cleaned(&path).map_err(stage_fail(stage))?;
    Ok(())
}

fn recompute_layouts(config: &PipelineConfig, state: &mut PipelineState) {
    let corpus = state.corpus.as_ref().expect("corpus loaded");
    state.layouts = corpus
        .documents()
        .iter()
        .map(|d| document_layout(d, config.fields, &state.stopwords))
        .collect();
}

fn reload_extraction(
    stage: &'static str,
    out: &Path,
    state: &mut PipelineState,
) -> Result<(), PipelineError> {
    let mentions_path = out.join(MENTIONS_FILE);
    let candidates_path = out.join(CANDIDATES_FILE);
    require_artifact(stage, &mentions_path)?;
    require_artifact(stage, &candidates_path)?;
    state.mentions = load_jsonl(stage, &mentions_path)?;
    state.candidates = load_jsonl(stage, &candidates_path)?;
    Ok(())
}

/// Ingests the corpus and writes the cleaned-text cache (the `ingest`
/// subcommand).
pub fn run_ingest(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<StageRecord>, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut state = PipelineState::new();
    state.stopwords = load_stopwords(config)?;
    Ok(vec![stage_ingest(config, out, &mut state)?, stage_preprocess(config, out, &mut state)?])
}

/// Extracts mentions and candidate triples from an ingested run directory
/// and writes the co-occurrence statistics (the `extract` subcommand).
pub fn run_extract(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
    client: Option<&dyn LlmClient>,
) -> Result<Vec<StageRecord>, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    let mut state = PipelineState::new();
    state.stopwords = load_stopwords(config)?;
    reload_corpus("extract", out, &mut state)?;
    recompute_layouts(config, &mut state);
    Ok(vec![stage_extract(config, out, &mut state, client)?, stage_stats(config, out, &mut state)?])
}

/// Fits the topic model on the cleaned-text cache (the `fit-lda`
/// subcommand).
pub fn run_fit_lda(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    let mut state = PipelineState::new();
    reload_cleaned("topics", out, &mut state)?;
    stage_topics(config, out, &mut state)
}

/// Fits the relation model on extracted candidates (the `fit-em`
/// subcommand). Statistics and the topic model are recomputed in memory
/// from the durable artifacts; both are deterministic.
pub fn run_fit_em(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    let mut state = PipelineState::new();
    state.stopwords = load_stopwords(config)?;
    reload_corpus("relmodel", out, &mut state)?;
    reload_cleaned("relmodel", out, &mut state)?;
    reload_extraction("relmodel", out, &mut state)?;
    recompute_layouts(config, &mut state);
    compute_stats(config, &mut state).map_err(stage_fail("relmodel"))?;
    let docs = tokenized_docs(&state);
    state.lda = Some(fit_lda(&docs, &config.lda).map_err(stage_fail("relmodel"))?);
    stage_relmodel(config, out, &mut state)
}

/// Builds and factorizes the data tensor from extracted candidates (the
/// `fit-cp` subcommand).
pub fn run_fit_cp(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    config.validate()?;
    let out = out_dir.as_ref();
    let mut state = PipelineState::new();
    reload_extraction("tensor", out, &mut state)?;
    stage_tensor(config, out, &mut state)
}

/// Scores candidates and assembles the graph (the `build-graph`
/// subcommand). Fitted relation weights are read from the run directory;
/// features and the tensor factors are recomputed deterministically.
pub fn run_build_graph(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "graph";
    config.validate()?;
    let out = out_dir.as_ref();
    let mut state = PipelineState::new();
    state.stopwords = load_stopwords(config)?;
    reload_corpus(STAGE, out, &mut state)?;
    reload_cleaned(STAGE, out, &mut state)?;
    reload_extraction(STAGE, out, &mut state)?;
    let weights_path = out.join(WEIGHTS_FILE);
    require_artifact(STAGE, &weights_path)?;
    state.weights = Some(Weights::load(&weights_path).map_err(stage_fail(STAGE))?);
    recompute_layouts(config, &mut state);
    compute_stats(config, &mut state).map_err(stage_fail(STAGE))?;
    let docs = tokenized_docs(&state);
    state.lda = Some(fit_lda(&docs, &config.lda).map_err(stage_fail(STAGE))?);
    compute_tensor_factors(config, &mut state).map_err(stage_fail(STAGE))?;
    stage_graph(config, out, &mut state)
}

/// Evaluates the built graph with the recorded judge (the `eval`
/// subcommand).
pub fn run_eval(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    const STAGE: &str = "eval";
    config.validate()?;
    if config.prompts.is_none() {
        return Err(PipelineError::Config(
            "the eval stage needs prompts and judge_verdicts in the config".to_string(),
        ));
    }
    let out = out_dir.as_ref();
    let graph_path = out.join(graph_file(GraphFormat::Jsonl));
    require_artifact(STAGE, &graph_path)?;
    let mut state = PipelineState::new();
    state.graph = Some(import_graph(&graph_path, GraphFormat::Jsonl).map_err(stage_fail(STAGE))?);
    stage_eval(config, out, &mut state)
}

/// Trains and reports the link-prediction benchmark (the `linkpred`
/// subcommand).
pub fn run_linkpred(
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<StageRecord, PipelineError> {
    config.validate()?;
    if config.linkpred_dir.is_none() {
        return Err(PipelineError::Config(
            "the linkpred stage needs linkpred_dir in the config".to_string(),
        ));
    }
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(io_err(out))?;
    stage_linkpred(config, out)
}

/// Re-exports the built graph in the requested format (the `export`
/// subcommand). With a destination the bytes are written there and the
/// path is echoed; without one the serialized graph itself is returned.
pub fn run_export(
    out_dir: impl AsRef<Path>,
    format: GraphFormat,
    dest: Option<&Path>,
) -> Result<String, PipelineError> {
    const STAGE: &str = "export";
    let out = out_dir.as_ref();
    let graph_path = out.join(graph_file(GraphFormat::Jsonl));
    require_artifact(STAGE, &graph_path)?;
    let graph = import_graph(&graph_path, GraphFormat::Jsonl).map_err(stage_fail(STAGE))?;
    let rendered = export_graph(&graph, format);
    match dest {
        Some(path) => {
            write_text(path, &rendered)?;
            Ok(path.display().to_string())
        }
        None => Ok(rendered),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{EdgeType, NodeType};
    use tempfile::TempDir;

    /// Writes a three-document fixture with gazetteer, patterns, and
    /// stopwords into `dir`; returns a ready config.
    fn tiny_fixture(dir: &Path) -> PipelineConfig {
        let corpus = concat!(
            "{\"id\":\"d1\",\"title\":\"Aspirin therapy\",\"abstract\":\"Aspirin treats stroke. Aspirin treats migraine.\",\"keywords\":[\"therapy\"],\"year\":2021}\n",
            "{\"id\":\"d2\",\"title\":\"Stroke risks\",\"abstract\":\"Hypertension causes stroke. Smoking causes stroke.\",\"keywords\":[\"risk\"],\"year\":2020}\n",
            "{\"id\":\"d3\",\"title\":\"Combined report\",\"abstract\":\"Aspirin treats stroke. Hypertension causes stroke.\",\"keywords\":[\"therapy\",\"risk\"],\"year\":2022}\n",
        );
        fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
        let gazetteer = "aspirin\tMedications\nstroke\tDiseases\nmigraine\tDiseases\nhypertension\tRiskFactors\nsmoking\tRiskFactors\n";
        fs::write(dir.join("gazetteer.tsv"), gazetteer).unwrap();
        let patterns = "treats\tTreats\ncauses\tCauses\n";
        fs::write(dir.join("patterns.tsv"), patterns).unwrap();
        fs::write(dir.join("stopwords.txt"), "the\na\nan\nof\n").unwrap();
        PipelineConfig {
            corpus: dir.join("corpus.jsonl").display().to_string(),
            stopwords: Some(dir.join("stopwords.txt").display().to_string()),
            gazetteer: Some(dir.join("gazetteer.tsv").display().to_string()),
            patterns: Some(dir.join("patterns.tsv").display().to_string()),
            lda: LdaConfig { num_topics: 2, iterations: 50, ..LdaConfig::default() },
            em: EmConfig { max_iters: 5, inner_steps: 10, ..EmConfig::default() },
            cp: CpConfig { max_iters: 50, ..CpConfig::default() },
            cp_rank: 2,
            tau: 0.2,
            offline: true,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_json() {
        let config = PipelineConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        let back = parse_config(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let err = parse_config("{\"corpus\":\"c.jsonl\",\"taus\":0.5}").unwrap_err();
        assert!(matches!(err, PipelineError::Config(_)));
        assert!(err.to_string().contains("taus"), "{err}");
    }

    #[test]
    fn offline_forbids_the_remote_extractor_before_anything_runs() {
        let config = PipelineConfig {
            corpus: "missing-on-purpose.jsonl".to_string(),
            extractor: ExtractorKind::Remote,
            offline: true,
            ..PipelineConfig::default()
        };
        let err = config.validate().unwrap_err();
        // The offline guard must fire before the path-existence check.
        assert!(err.to_string().contains("offline"), "{err}");
    }

    #[test]
    fn offline_forbids_a_configured_endpoint() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        config.endpoint = Some("https://invalid.example/v1".to_string());
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("offline"), "{err}");
    }

    #[test]
    fn score_weights_must_be_a_convex_combination() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        config.w_model = 0.8;
        config.w_tensor = 0.3;
        assert!(config.validate().unwrap_err().to_string().contains("sum to 1"));
        config.w_model = -0.2;
        config.w_tensor = 1.2;
        assert!(config.validate().unwrap_err().to_string().contains("nonnegative"));
    }

    #[test]
    fn missing_referenced_paths_are_named() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        config.patterns = Some(dir.path().join("absent.tsv").display().to_string());
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("patterns"), "{err}");
        assert!(err.to_string().contains("absent.tsv"), "{err}");
    }

    #[test]
    fn relative_config_paths_resolve_against_the_config_directory() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        config.corpus = "corpus.jsonl".to_string();
        config.stopwords = Some("stopwords.txt".to_string());
        let config_path = dir.path().join("config.json");
        fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
        let loaded = load_config(&config_path).unwrap();
        assert_eq!(loaded.corpus, dir.path().join("corpus.jsonl").display().to_string());
        loaded.validate().unwrap();
    }

    #[test]
    fn pipeline_produces_every_artifact_and_a_manifest() {
        let dir = TempDir::new().unwrap();
        let config = tiny_fixture(dir.path());
        let out = dir.path().join("run");
        let manifest = run_pipeline(&config, &out).unwrap();
        for name in [
            CORPUS_FILE,
            CORPUS_STATS_FILE,
            CLEANED_FILE,
            MENTIONS_FILE,
            CANDIDATES_FILE,
            JOINT_FILE,
            LOG_JOINT_FILE,
            "lda/beta.tsv",
            "lda/theta.tsv",
            WEIGHTS_FILE,
            EM_TRACE_FILE,
            "tensor/tensor.tsv",
            "tensor/factor_entities.tsv",
            "graph.graphml",
            "graph.jsonl",
            "graph.tsv",
            GRAPH_STATS_FILE,
            MANIFEST_FILE,
        ] {
            assert!(out.join(name).exists(), "{name} missing");
        }
        assert_eq!(manifest.seed, config.seed);
        assert_eq!(manifest.config_hash, config.digest());
        let statuses: Vec<(&str, &str)> =
            manifest.stages.iter().map(|s| (s.stage.as_str(), s.status.as_str())).collect();
        assert_eq!(
            statuses,
            vec![
                ("ingest", "completed"),
                ("preprocess", "completed"),
                ("extract", "completed"),
                ("stats", "completed"),
                ("topics", "completed"),
                ("relmodel", "completed"),
                ("tensor", "completed"),
                ("graph", "completed"),
                ("eval", "skipped"),
                ("linkpred", "skipped"),
            ]
        );
        // The graph keeps only taxonomy-typed content.
        let graph = import_graph(out.join("graph.jsonl"), GraphFormat::Jsonl).unwrap();
        assert!(!graph.nodes().is_empty());
        assert!(!graph.edges().is_empty());
        for node in graph.nodes() {
            assert!(NodeType::ALL.contains(&node.node_type));
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = TempDir::new().unwrap();
        let config = tiny_fixture(dir.path());
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        run_pipeline(&config, &out_a).unwrap();
        run_pipeline(&config, &out_b).unwrap();
        for name in
            ["graph.graphml", "graph.jsonl", "graph.tsv", WEIGHTS_FILE, JOINT_FILE, MANIFEST_FILE]
        {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn staged_subcommands_reproduce_the_single_run() {
        let dir = TempDir::new().unwrap();
        let config = tiny_fixture(dir.path());
        let whole = dir.path().join("whole");
        run_pipeline(&config, &whole).unwrap();
        let staged = dir.path().join("staged");
        run_ingest(&config, &staged).unwrap();
        run_extract(&config, &staged, None).unwrap();
        run_fit_lda(&config, &staged).unwrap();
        run_fit_em(&config, &staged).unwrap();
        run_fit_cp(&config, &staged).unwrap();
        run_build_graph(&config, &staged).unwrap();
        for name in ["graph.graphml", "graph.jsonl", "graph.tsv", WEIGHTS_FILE, GRAPH_STATS_FILE] {
            let a = fs::read(whole.join(name)).unwrap();
            let b = fs::read(staged.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between whole-run and staged outputs");
        }
    }

    #[test]
    fn remote_extractor_without_a_client_fails_in_the_extract_stage() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        config.extractor = ExtractorKind::Remote;
        config.offline = false;
        let err = run_pipeline(&config, dir.path().join("run")).unwrap_err();
        match &err {
            PipelineError::Stage { stage, .. } => assert_eq!(*stage, "extract"),
            other => panic!("expected a stage failure, got {other}"),
        }
        // Partial artifacts from the stages before the failure survive.
        assert!(dir.path().join("run").join(CORPUS_FILE).exists());
        assert!(dir.path().join("run").join(CLEANED_FILE).exists());
    }

    #[test]
    fn missing_prerequisites_name_the_artifact() {
        let dir = TempDir::new().unwrap();
        let config = tiny_fixture(dir.path());
        let out = dir.path().join("fresh");
        fs::create_dir_all(&out).unwrap();
        let err = run_fit_cp(&config, &out).unwrap_err();
        match &err {
            PipelineError::MissingArtifact { stage, path } => {
                assert_eq!(*stage, "tensor");
                assert!(path.ends_with(MENTIONS_FILE), "{path}");
            }
            other => panic!("expected a missing artifact, got {other}"),
        }
    }

    #[test]
    fn export_round_trips_the_built_graph() {
        let dir = TempDir::new().unwrap();
        let config = tiny_fixture(dir.path());
        let out = dir.path().join("run");
        run_pipeline(&config, &out).unwrap();
        let dest = dir.path().join("export.graphml");
        run_export(&out, GraphFormat::Graphml, Some(&dest)).unwrap();
        let exported = fs::read(&dest).unwrap();
        let original = fs::read(out.join("graph.graphml")).unwrap();
        assert_eq!(exported, original);
        let inline = run_export(&out, GraphFormat::Tsv, None).unwrap();
        assert_eq!(inline.as_bytes(), fs::read(out.join("graph.tsv")).unwrap());
    }

    #[test]
    fn eval_stage_runs_against_recorded_verdicts() {
        let dir = TempDir::new().unwrap();
        let mut config = tiny_fixture(dir.path());
        let out = dir.path().join("run");
        run_pipeline(&config, &out).unwrap();
        // Pull real edge keys out of the built graph for the judge file.
        let graph = import_graph(out.join("graph.jsonl"), GraphFormat::Jsonl).unwrap();
        assert!(!graph.edges().is_empty());
        let prompts = "Does aspirin treat stroke?\tMedications:aspirin\tDiseases:stroke\n";
        fs::write(dir.path().join("prompts.tsv"), prompts).unwrap();
        let mut verdicts = String::from("p0\tcorrect\trecorded\n");
        for idx in 0..graph.edges().len() {
            let edge = &graph.edges()[idx];
            let head = graph.node_by_id(&edge.head).unwrap();
            let tail = graph.node_by_id(&edge.tail).unwrap();
            verdicts.push_str(&format!(
                "{}:{} -{}-> {}:{}\tconsistent\trecorded\n",
                head.node_type.name(),
                head.canonical_name,
                edge.edge_type.name(),
                tail.node_type.name(),
                tail.canonical_name,
            ));
        }
        fs::write(dir.path().join("verdicts.tsv"), verdicts).unwrap();
        config.prompts = Some(dir.path().join("prompts.tsv").display().to_string());
        config.judge_verdicts = Some(dir.path().join("verdicts.tsv").display().to_string());
        let record = run_eval(&config, &out).unwrap();
        assert_eq!(record.status, "completed");
        let report = fs::read_to_string(out.join(EVAL_REPORT_FILE)).unwrap();
        assert!(report.contains("[prompt validation]"), "{report}");
        assert!(report.contains("rate\t1.0000"), "{report}");
        assert!(report.contains(&config.digest()), "report lacks the config hash");
    }

    #[test]
    fn composed_confidence_blends_both_scores() {
        // One candidate, weights zero: posterior uniform (1/24), tensor
        // score calibrated to 0.5 on a constant set, so the composition is
        // w_model/24 + w_tensor/2 exactly.
        let mention = |surface: &str, node_type| Mention {
            surface: surface.to_string(),
            node_type,
            doc_id: "d1".to_string(),
            start: 0,
            end: surface.len(),
        };
        let candidate = CandidateTriple {
            head: mention("aspirin", NodeType::Medications),
            edge: EdgeType::Treats,
            tail: mention("stroke", NodeType::Diseases),
            confidence: 1.0,
            attributes: BTreeMap::new(),
            evidence: crate::extract::Evidence { doc_id: "d1".to_string(), sentence: 0 },
        };
        let tensor = build_tensor(std::slice::from_ref(&candidate));
        let fit = cp_als(&tensor, 1, &CpConfig::default()).unwrap();
        let calibration: Vec<(usize, usize, usize)> = tensor.entries.keys().copied().collect();
        let features = FeatureVector::new(vec![0.0; 6]).unwrap();
        let config = PipelineConfig::default();
        let confidence = composed_confidence(
            &config,
            &candidate,
            &features,
            &Weights::zeros(),
            &tensor,
            &fit.factors,
            &calibration,
        )
        .unwrap();
        let expected = 0.7 / 24.0 + 0.3 * 0.5;
        assert!((confidence - expected).abs() < 1e-12, "{confidence} vs {expected}");
    }
}
