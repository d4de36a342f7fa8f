//! Latent Dirichlet Allocation over the cleaned, tokenized corpus.
//!
//! Inference is collapsed Gibbs sampling: a single chain, seeded, with the
//! word-topic and document-topic distributions read off the final count
//! state through the usual smoothed estimators. Fitting is single-threaded
//! so a fixed seed gives bit-identical models; queries on a fitted model
//! are read-only. The `topic_overlap` statistic folds token contexts into
//! topic space and compares them by cosine similarity — it is this
//! toolkit's instantiation of a topic feature for relation scoring.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sci12;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("document {id:?} has no tokens")]
    EmptyDocument { id: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange { what: &'static str, index: usize, size: usize },
}

/// Hyperparameters for LDA fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { num_topics: 10, alpha: 0.1, eta: 0.01, iterations: 500, seed: 0 }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), TopicsError> {
        if self.num_topics == 0 {
            return Err(TopicsError::BadConfig("num_topics must be positive".to_string()));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(TopicsError::BadConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(TopicsError::BadConfig(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(TopicsError::BadConfig("iterations must be positive".to_string()));
        }
        Ok(())
    }
}

/// One tokenized document: id plus cleaned tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

/// A fitted topic model: `beta` is K rows of word probabilities over
/// `vocab`, `theta` is one topic distribution per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub beta: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
}

impl LdaModel {
    pub fn num_topics(&self) -> usize {
        self.beta.len()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.vocab.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// Checks the simplex invariants on every beta and theta row.
    pub fn validate(&self) -> Result<(), TopicsError> {
        for (k, row) in self.beta.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                return Err(TopicsError::BadConfig(format!("beta row {k} sums to {s}")));
            }
        }
        for (d, row) in self.theta.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                return Err(TopicsError::BadConfig(format!("theta row {d} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Smoothed word probability from counts: `(count + eta) / (total + V*eta)`.
pub fn word_prob_from_counts(count_wz: u64, topic_total: u64, vocab_size: usize, eta: f64) -> f64 {
    (count_wz as f64 + eta) / (topic_total as f64 + vocab_size as f64 * eta)
}

/// Smoothed topic probability from counts: `(count + alpha) / (total + K*alpha)`.
pub fn topic_prob_from_counts(count_dz: u64, doc_total: u64, num_topics: usize, alpha: f64) -> f64 {
    (count_dz as f64 + alpha) / (doc_total as f64 + num_topics as f64 * alpha)
}

/// Fits LDA by collapsed Gibbs sampling. Deterministic for a fixed seed.
pub fn fit_lda(docs: &[TokenizedDoc], config: &LdaConfig) -> Result<LdaModel, TopicsError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(TopicsError::EmptyCorpus);
    }
    for d in docs {
        if d.tokens.is_empty() {
            return Err(TopicsError::EmptyDocument { id: d.id.clone() });
        }
    }
    let vocab: Vec<String> = {
        let set: std::collections::BTreeSet<&str> =
            docs.iter().flat_map(|d| d.tokens.iter().map(String::as_str)).collect();
        set.into_iter().map(str::to_string).collect()
    };
    if vocab.is_empty() {
        return Err(TopicsError::EmptyVocabulary);
    }
    let word_idx: BTreeMap<&str, usize> =
        vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();

    let k = config.num_topics;
    let v = vocab.len();
    let d_count = docs.len();
    // Token streams as word indices.
    let token_ids: Vec<Vec<usize>> =
        docs.iter().map(|d| d.tokens.iter().map(|t| word_idx[t.as_str()]).collect()).collect();
    let total_tokens: usize = token_ids.iter().map(Vec::len).sum();

    let mut n_wz = vec![vec![0u32; k]; v];
    let mut n_z = vec![0u32; k];
    let mut n_dk = vec![vec![0u32; k]; d_count];
    let mut assignments: Vec<Vec<usize>> =
        token_ids.iter().map(|toks| vec![0usize; toks.len()]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (d, toks) in token_ids.iter().enumerate() {
        for (i, &w) in toks.iter().enumerate() {
            let z = rng.gen_range(0..k);
            assignments[d][i] = z;
            n_wz[w][z] += 1;
            n_z[z] += 1;
            n_dk[d][z] += 1;
        }
    }

    let eta = config.eta;
    let alpha = config.alpha;
    let v_eta = v as f64 * eta;
    let mut weights = vec![0.0f64; k];
    for _sweep in 0..config.iterations {
        for (d, toks) in token_ids.iter().enumerate() {
            for (i, &w) in toks.iter().enumerate() {
                let old = assignments[d][i];
                n_wz[w][old] -= 1;
                n_z[old] -= 1;
                n_dk[d][old] -= 1;

                let mut total = 0.0;
                for z in 0..k {
                    let pw = (n_wz[w][z] as f64 + eta) / (n_z[z] as f64 + v_eta);
                    let pd = n_dk[d][z] as f64 + alpha;
                    let wgt = pw * pd;
                    total += wgt;
                    weights[z] = total;
                }
                let u = rng.gen::<f64>() * total;
                let mut new = k - 1;
                for z in 0..k {
                    if u < weights[z] {
                        new = z;
                        break;
                    }
                }
                assignments[d][i] = new;
                n_wz[w][new] += 1;
                n_z[new] += 1;
                n_dk[d][new] += 1;
            }
        }
        debug_assert_eq!(n_z.iter().map(|&c| c as usize).sum::<usize>(), total_tokens);
    }

    let beta: Vec<Vec<f64>> = (0..k)
        .map(|z| {
            (0..v)
                .map(|w| word_prob_from_counts(n_wz[w][z] as u64, n_z[z] as u64, v, eta))
                .collect()
        })
        .collect();
    let theta: Vec<Vec<f64>> = (0..d_count)
        .map(|d| {
            let len = token_ids[d].len() as u64;
            (0..k).map(|z| topic_prob_from_counts(n_dk[d][z] as u64, len, k, alpha)).collect()
        })
        .collect();

    let model =
        LdaModel { beta, theta, vocab, doc_ids: docs.iter().map(|d| d.id.clone()).collect() };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// Probability of word `w` under topic `z`.
pub fn topic_word_prob(model: &LdaModel, w: usize, z: usize) -> Result<f64, TopicsError> {
    let beta_row = model.beta.get(z).ok_or(TopicsError::IndexOutOfRange {
        what: "topic",
        index: z,
        size: model.beta.len(),
    })?;
    beta_row.get(w).copied().ok_or(TopicsError::IndexOutOfRange {
        what: "word",
        index: w,
        size: beta_row.len(),
    })
}

/// Probability of topic `z` in document `d`.
pub fn doc_topic_prob(model: &LdaModel, z: usize, d: usize) -> Result<f64, TopicsError> {
    let theta_row = model.theta.get(d).ok_or(TopicsError::IndexOutOfRange {
        what: "document",
        index: d,
        size: model.theta.len(),
    })?;
    theta_row.get(z).copied().ok_or(TopicsError::IndexOutOfRange {
        what: "topic",
        index: z,
        size: theta_row.len(),
    })
}

/// Folds a token context into topic space: each in-vocabulary token
/// contributes its normalized topic posterior (proportional to beta), and
/// the contributions are averaged. Returns `None` when nothing survives
/// vocabulary restriction.
fn fold_in(model: &LdaModel, context: &[String]) -> Option<Vec<f64>> {
    let k = model.num_topics();
    let mut acc = vec![0.0; k];
    let mut used = 0usize;
    for token in context {
        let Some(w) = model.word_index(token) else { continue };
        let mut posterior: Vec<f64> = (0..k).map(|z| model.beta[z][w]).collect();
        let total: f64 = posterior.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for p in &mut posterior {
            *p /= total;
        }
        for (a, p) in acc.iter_mut().zip(&posterior) {
            *a += p;
        }
        used += 1;
    }
    if used == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= used as f64;
    }
    Some(acc)
}

/// Cosine similarity of the topic posteriors of two token contexts,
/// clipped to [0, 1]. A context that is empty after vocabulary restriction
/// yields 0.
pub fn topic_overlap(model: &LdaModel, ctx1: &[String], ctx2: &[String]) -> f64 {
    let (Some(a), Some(b)) = (fold_in(model, ctx1), fold_in(model, ctx2)) else {
        return 0.0;
    };
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Greedy maximum-overlap matching of recovered topic rows to reference
/// rows; returns `mapping[recovered] = reference`. Overlap is histogram
/// intersection (1 − total variation).
pub fn align_topics(recovered: &[Vec<f64>], reference: &[Vec<f64>]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, r) in recovered.iter().enumerate() {
        for (j, p) in reference.iter().enumerate() {
            let overlap: f64 = r.iter().zip(p).map(|(&a, &b)| a.min(b)).sum();
            pairs.push((overlap, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut mapping = vec![usize::MAX; recovered.len()];
    let mut taken = vec![false; reference.len()];
    for (_, i, j) in pairs {
        if mapping[i] == usize::MAX && !taken[j] {
            mapping[i] = j;
            taken[j] = true;
        }
    }
    mapping
}

/// Total variation distance between two distributions of equal length.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<f64>()
}

/// Renders beta as TSV: topics × words with the vocabulary as header.
pub fn beta_tsv(model: &LdaModel) -> String {
    let mut out = String::from("topic");
    for w in &model.vocab {
        out.push('\t');
        out.push_str(w);
    }
    out.push('\n');
    for (k, row) in model.beta.iter().enumerate() {
        out.push_str(&format!("t{k}"));
        for &v in row {
            out.push('\t');
            out.push_str(&sci12(v));
        }
        out.push('\n');
    }
    out
}

/// Renders theta as TSV: documents × topics.
pub fn theta_tsv(model: &LdaModel) -> String {
    let mut out = String::from("doc");
    for k in 0..model.num_topics() {
        out.push_str(&format!("\tt{k}"));
    }
    out.push('\n');
    for (d, row) in model.theta.iter().enumerate() {
        out.push_str(&model.doc_ids[d]);
        for &v in row {
            out.push('\t');
            out.push_str(&sci12(v));
        }
        out.push('\n');
    }
    out
}

/// Writes both model TSVs next to each other with the given stem.
pub fn save_model_tsv(model: &LdaModel, dir: impl AsRef<Path>) -> Result<(), TopicsError> {
    let dir = dir.as_ref();
    let write = |name: &str, content: String| -> Result<(), TopicsError> {
        let path = dir.join(name);
        fs::write(&path, content)
            .map_err(|source| TopicsError::Io { path: path.display().to_string(), source })
    };
    write("beta.tsv", beta_tsv(model))?;
    write("theta.tsv", theta_tsv(model))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn tdoc(id: &str, tokens: &[&str]) -> TokenizedDoc {
        TokenizedDoc { id: id.to_string(), tokens: tokens.iter().map(|s| s.to_string()).collect() }
    }

    /// 200 documents from two disjoint 10-word vocabularies; returns the
    /// corpus and the planted beta rows over the combined sorted vocab.
    pub(crate) fn planted_corpus(seed: u64) -> (Vec<TokenizedDoc>, Vec<Vec<f64>>) {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topic_a: Vec<String> = (0..10).map(|i| format!("alpha{i:02}")).collect();
        let topic_b: Vec<String> = (0..10).map(|i| format!("beta{i:02}")).collect();
        let mut docs = Vec::new();
        for d in 0..200 {
            let words = if d % 2 == 0 { &topic_a } else { &topic_b };
            let len = rng.gen_range(25..=35);
            let tokens: Vec<String> =
                (0..len).map(|_| words[rng.gen_range(0..words.len())].clone()).collect();
            docs.push(TokenizedDoc { id: format!("doc{d:03}"), tokens });
        }
        // Combined vocab sorts alpha* before beta*.
        let mut planted_a = vec![0.0; 20];
        let mut planted_b = vec![0.0; 20];
        for i in 0..10 {
            planted_a[i] = 0.1;
            planted_b[10 + i] = 0.1;
        }
        (docs, vec![planted_a, planted_b])
    }

    #[test]
    fn single_word_vocabulary_forces_beta_one() {
        let docs = vec![tdoc("d0", &["only", "only"]), tdoc("d1", &["only"])];
        let config = LdaConfig { num_topics: 3, iterations: 10, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        for row in &model.beta {
            assert_eq!(row, &vec![1.0]);
        }
        model.validate().unwrap();
    }

    #[test]
    fn empty_corpus_and_empty_document_error() {
        let config = LdaConfig::default();
        assert!(matches!(fit_lda(&[], &config), Err(TopicsError::EmptyCorpus)));
        let docs = vec![tdoc("d0", &["word"]), tdoc("d1", &[])];
        assert!(matches!(fit_lda(&docs, &config), Err(TopicsError::EmptyDocument { .. })));
    }

    #[test]
    fn bad_config_is_rejected() {
        let docs = vec![tdoc("d0", &["word"])];
        for config in [
            LdaConfig { num_topics: 0, ..Default::default() },
            LdaConfig { alpha: 0.0, ..Default::default() },
            LdaConfig { eta: -1.0, ..Default::default() },
            LdaConfig { iterations: 0, ..Default::default() },
        ] {
            assert!(matches!(fit_lda(&docs, &config), Err(TopicsError::BadConfig(_))));
        }
    }

    #[test]
    fn same_seed_gives_identical_models() {
        let (docs, _) = planted_corpus(3);
        let config = LdaConfig { num_topics: 2, iterations: 30, seed: 99, ..Default::default() };
        let m1 = fit_lda(&docs, &config).unwrap();
        let m2 = fit_lda(&docs, &config).unwrap();
        assert_eq!(m1.beta, m2.beta);
        assert_eq!(m1.theta, m2.theta);
    }

    #[test]
    fn rows_are_simplices() {
        let (docs, _) = planted_corpus(5);
        let config = LdaConfig { num_topics: 4, iterations: 20, seed: 1, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        model.validate().unwrap();
        for z in 0..4 {
            let s: f64 =
                (0..model.vocab.len()).map(|w| topic_word_prob(&model, w, z).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        for d in 0..model.theta.len() {
            let s: f64 = (0..4).map(|z| doc_topic_prob(&model, z, d).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn count_form_hand_case() {
        // counts {w1: 3, w2: 1} for one topic, eta = 1, V = 2.
        assert_eq!(word_prob_from_counts(3, 4, 2, 1.0), 4.0 / 6.0);
        assert_eq!(topic_prob_from_counts(2, 4, 2, 0.5), 2.5 / 5.0);
    }

    #[test]
    fn out_of_range_indices_error() {
        let docs = vec![tdoc("d0", &["a", "b"])];
        let config = LdaConfig { num_topics: 2, iterations: 5, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        assert!(matches!(
            topic_word_prob(&model, 0, 9),
            Err(TopicsError::IndexOutOfRange { what: "topic", .. })
        ));
        assert!(matches!(
            topic_word_prob(&model, 9, 0),
            Err(TopicsError::IndexOutOfRange { what: "word", .. })
        ));
        assert!(matches!(
            doc_topic_prob(&model, 0, 9),
            Err(TopicsError::IndexOutOfRange { what: "document", .. })
        ));
    }

    #[test]
    fn planted_topics_are_recovered_within_tv() {
        let (docs, planted) = planted_corpus(17);
        let config = LdaConfig { num_topics: 2, iterations: 150, seed: 7, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        let mapping = align_topics(&model.beta, &planted);
        for (k, row) in model.beta.iter().enumerate() {
            let tv = total_variation(row, &planted[mapping[k]]);
            assert!(tv <= 0.15, "topic {k} TV {tv}");
        }
    }

    #[test]
    fn overlap_of_identical_contexts_is_one() {
        let (docs, _) = planted_corpus(23);
        let config = LdaConfig { num_topics: 2, iterations: 60, seed: 2, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        let ctx: Vec<String> = vec!["alpha00".into(), "alpha03".into()];
        let sim = topic_overlap(&model, &ctx, &ctx);
        assert!((sim - 1.0).abs() < 1e-9, "sim = {sim}");
    }

    #[test]
    fn overlap_across_planted_topics_is_low() {
        let (docs, _) = planted_corpus(29);
        let config = LdaConfig { num_topics: 2, iterations: 150, seed: 3, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        let ctx_a: Vec<String> = (0..5).map(|i| format!("alpha{i:02}")).collect();
        let ctx_b: Vec<String> = (0..5).map(|i| format!("beta{i:02}")).collect();
        let sim = topic_overlap(&model, &ctx_a, &ctx_b);
        assert!(sim < 0.2, "sim = {sim}");
    }

    #[test]
    fn out_of_vocabulary_context_overlap_is_zero() {
        let (docs, _) = planted_corpus(31);
        let config = LdaConfig { num_topics: 2, iterations: 20, seed: 4, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        let known: Vec<String> = vec!["alpha00".into()];
        let unknown: Vec<String> = vec!["zzz".into(), "qqq".into()];
        assert_eq!(topic_overlap(&model, &known, &unknown), 0.0);
        assert_eq!(topic_overlap(&model, &unknown, &unknown), 0.0);
        assert_eq!(topic_overlap(&model, &[], &known), 0.0);
    }

    #[test]
    fn alignment_matches_permuted_rows() {
        let rows = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.2, 0.1, 0.7]];
        let permuted = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
        let mapping = align_topics(&permuted, &rows);
        assert_eq!(mapping, vec![2, 0, 1]);
    }

    #[test]
    fn model_tsvs_are_well_formed() {
        let docs = vec![tdoc("d0", &["a", "b", "a"]), tdoc("d1", &["b", "c"])];
        let config = LdaConfig { num_topics: 2, iterations: 10, ..Default::default() };
        let model = fit_lda(&docs, &config).unwrap();
        let beta = beta_tsv(&model);
        assert!(beta.starts_with("topic\ta\tb\tc\n"));
        assert_eq!(beta.lines().count(), 3);
        let theta = theta_tsv(&model);
        assert!(theta.starts_with("doc\tt0\tt1\n"));
        assert!(theta.contains("d1\t"));
        let dir = tempfile::tempdir().unwrap();
        save_model_tsv(&model, dir.path()).unwrap();
        assert!(dir.path().join("beta.tsv").exists());
        assert!(dir.path().join("theta.tsv").exists());
    }
}
