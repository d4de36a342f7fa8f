//! Toolkit for constructing typed knowledge graphs from literature corpora.
//!
//! The pipeline ingests abstract records, cleans and tokenizes text, spots
//! typed entity mentions and candidate relations with pluggable extractors,
//! scores candidates with cooccurrence statistics, a log-linear relation
//! model fitted by EM, LDA topic features, and a CP tensor factorization,
//! then materializes a deduplicated property graph with provenance.
//! Evaluation covers confusion-matrix metrics, Cohen's kappa, judge-based
//! validation protocols, and an embedding link-prediction benchmark
//! (TransE, DistMult, ComplEx, RotatE).
//!
//! Everything is deterministic under a fixed seed and runs fully offline;
//! remote LLM extractors, embedding providers, and judges are ports with
//! deterministic substitutes used by the bundled fixtures.

pub mod corpus;
pub mod eval;
pub mod extract;
pub mod graph;
pub mod linkpred;
pub mod pipeline;
pub mod preprocess;
pub mod relmodel;
pub mod stats;
pub mod tensor;
pub mod topics;

pub(crate) mod util;
