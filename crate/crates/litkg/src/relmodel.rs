//! Log-linear relation scoring over entity pairs and EM fitting under
//! noisy extractor labels.
//!
//! The conditional model is a softmax over the 24 edge types with six
//! feature templates in a fixed order: pairwise mutual information, the
//! log-normalized joint probability entry, embedding cosine, topic
//! overlap, a matched-type-pair indicator, and the lexical-pattern hit
//! count. Missing upstream artifacts contribute zero to their template.
//!
//! Fitting treats the true relation of each candidate as latent: the
//! observed label equals the truth with probability equal to the reported
//! confidence, otherwise it is uniform over the remaining 23 types. The
//! E-step mixes the model posterior with that observation likelihood; the
//! M-step maximizes the expected complete-data log-likelihood by
//! full-batch gradient ascent with backtracking, so the auxiliary
//! objective never decreases within tolerance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{EdgeType, Mention};
use crate::preprocess::EmbeddingVector;
use crate::stats::{presence_mi, CooccurrenceCounts, LogProbabilityMatrix};
use crate::topics::{topic_overlap, LdaModel};

/// Number of feature templates in [`featurize`]'s fixed order.
pub const NUM_FEATURES: usize = 6;
/// Number of edge types the model scores.
pub const NUM_RELATIONS: usize = EdgeType::ALL.len();

#[derive(Debug, Error)]
pub enum RelModelError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("feature vector has {got} values, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),
    #[error("weights line {line}: {reason}")]
    WeightsParse { line: usize, reason: String },
    #[error("no training candidates")]
    EmptyCandidates,
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("Q became non-finite at iteration {iteration}")]
    NonFiniteQ { iteration: usize },
}

/// Fixed-length feature vector, one value per template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<FeatureVector, RelModelError> {
        if values.len() != NUM_FEATURES {
            return Err(RelModelError::WrongLength { expected: NUM_FEATURES, got: values.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(RelModelError::NonFiniteFeature(i));
            }
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-(template, edge type) weights of the log-linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// `lambda[k][r]`: weight of feature `k` for the edge type with
    /// ordinal `r`.
    lambda: Vec<Vec<f64>>,
}

impl Weights {
    /// All-zero weights: the uniform model.
    pub fn zeros() -> Weights {
        Weights { lambda: vec![vec![0.0; NUM_RELATIONS]; NUM_FEATURES] }
    }

    pub fn get(&self, feature: usize, edge: EdgeType) -> f64 {
        self.lambda[feature][edge.ordinal()]
    }

    pub fn set(&mut self, feature: usize, edge: EdgeType, value: f64) {
        self.lambda[feature][edge.ordinal()] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.iter().flatten().all(|v| v.is_finite())
    }

    /// Serializes as TSV rows of `feature index, edge type, value`. Values
    /// use shortest-round-trip scientific notation, so parsing the file
    /// back reproduces the weights bit for bit and anything scored from
    /// the file matches anything scored in memory.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature\tedge\tvalue\n");
        for (k, row) in self.lambda.iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                out.push_str(&format!("{k}\t{}\t{:e}\n", EdgeType::ALL[r].name(), v));
            }
        }
        out
    }

    /// Parses the TSV form; entries absent from the file stay zero.
    pub fn from_tsv(text: &str) -> Result<Weights, RelModelError> {
        let mut w = Weights::zeros();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == "feature\tedge\tvalue" {
                continue;
            }
            let parts: Vec<&str> = trimmed.split('\t').collect();
            if parts.len() != 3 {
                return Err(RelModelError::WeightsParse {
                    line: line_no,
                    reason: "expected three tab-separated fields".to_string(),
                });
            }
            let feature: usize = parts[0].parse().map_err(|_| RelModelError::WeightsParse {
                line: line_no,
                reason: format!("bad feature index {:?}", parts[0]),
            })?;
            if feature >= NUM_FEATURES {
                return Err(RelModelError::WeightsParse {
                    line: line_no,
                    reason: format!("feature index {feature} out of range"),
                });
            }
            let edge = EdgeType::parse(parts[1]).ok_or_else(|| RelModelError::WeightsParse {
                line: line_no,
                reason: format!("unknown edge type {:?}", parts[1]),
            })?;
            let value: f64 = parts[2].parse().map_err(|_| RelModelError::WeightsParse {
                line: line_no,
                reason: format!("bad value {:?}", parts[2]),
            })?;
            if !value.is_finite() {
                return Err(RelModelError::WeightsParse {
                    line: line_no,
                    reason: format!("non-finite value {value}"),
                });
            }
            w.set(feature, edge, value);
        }
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RelModelError> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv())
            .map_err(|source| RelModelError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Weights, RelModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| RelModelError::Io { path: path.display().to_string(), source })?;
        Weights::from_tsv(&text)
    }
}

/// Upstream artifacts available when featurizing a pair. Any missing piece
/// contributes zero to its template.
#[derive(Default)]
pub struct FeatureContext<'a> {
    pub counts: Option<&'a CooccurrenceCounts>,
    pub log_matrix: Option<&'a LogProbabilityMatrix>,
    pub topic_model: Option<&'a LdaModel>,
    pub head_context: &'a [String],
    pub tail_context: &'a [String],
    pub head_embedding: Option<&'a EmbeddingVector>,
    pub tail_embedding: Option<&'a EmbeddingVector>,
    pub pattern_hits: usize,
}

/// Computes the fixed six-template feature vector for an entity pair:
/// `[presence MI, log-joint entry, embedding cosine, topic overlap,
/// same-type indicator, pattern-hit count]`.
pub fn featurize(head: &Mention, tail: &Mention, ctx: &FeatureContext<'_>) -> FeatureVector {
    let head_key = head.canonical_key();
    let tail_key = tail.canonical_key();

    let mi = ctx.counts.and_then(|c| presence_mi(c, &head_key, &tail_key)).unwrap_or(0.0);

    let log_joint = ctx
        .log_matrix
        .and_then(|m| {
            let i = m.entities.iter().position(|e| *e == head_key)?;
            let j = m.entities.iter().position(|e| *e == tail_key)?;
            Some(m.values[i][j])
        })
        .unwrap_or(0.0);

    let cosine = match (ctx.head_embedding, ctx.tail_embedding) {
        (Some(h), Some(t)) => h.cosine(t),
        _ => 0.0,
    };

    let overlap = ctx
        .topic_model
        .map(|m| topic_overlap(m, ctx.head_context, ctx.tail_context))
        .unwrap_or(0.0);

    let same_type = if head.node_type == tail.node_type { 1.0 } else { 0.0 };

    let values = vec![mi, log_joint, cosine, overlap, same_type, ctx.pattern_hits as f64];
    FeatureVector::new(values).expect("templates produce finite values")
}

/// Numerically safe softmax (max-subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Posterior over the 24 edge types (indexed by ordinal) for one feature
/// vector: `P(R | f) = softmax_R(sum_k lambda[k][R] * f_k)`.
pub fn relation_posterior(weights: &Weights, f: &FeatureVector) -> Vec<f64> {
    let mut scores = vec![0.0; NUM_RELATIONS];
    for (k, &fv) in f.values().iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        for (r, s) in scores.iter_mut().enumerate() {
            *s += weights.lambda[k][r] * fv;
        }
    }
    softmax(&scores)
}

/// The posterior as an edge-type map, for presentation.
pub fn posterior_map(posterior: &[f64]) -> std::collections::BTreeMap<EdgeType, f64> {
    EdgeType::ALL.iter().map(|e| (*e, posterior[e.ordinal()])).collect()
}

/// Most probable edge type; ties break to the lowest ordinal.
pub fn posterior_argmax(posterior: &[f64]) -> EdgeType {
    let mut best = 0;
    for (r, &p) in posterior.iter().enumerate() {
        if p > posterior[best] {
            best = r;
        }
    }
    EdgeType::ALL[best]
}

/// One training candidate: features, the extractor's label, and the
/// extractor's confidence in that label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCandidate {
    pub features: FeatureVector,
    pub observed: EdgeType,
    pub confidence: f64,
}

/// EM fitting controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub learning_rate: f64,
    pub inner_steps: usize,
    /// Optional L2 penalty weight on lambda (0 disables).
    pub l2: f64,
    /// Reserved for stochastic variants; the bundled fitter is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 100,
            tol: 1e-6,
            learning_rate: 0.1,
            inner_steps: 50,
            l2: 0.0,
            seed: 0,
        }
    }
}

/// Snapshot of EM progress after an accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    pub iteration: usize,
    pub q_value: f64,
    pub theta: Weights,
}

/// Fitted weights plus the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub weights: Weights,
    pub history: Vec<EmState>,
}

/// Likelihood of the observed label given a hypothesized true relation:
/// the label is right with probability `confidence`, otherwise uniform
/// over the other 23 types.
fn observation_likelihood(observed: EdgeType, truth: usize, confidence: f64) -> f64 {
    if observed.ordinal() == truth {
        confidence
    } else {
        (1.0 - confidence) / (NUM_RELATIONS as f64 - 1.0)
    }
}

/// E-step: per-candidate posterior over the latent true relation,
/// `gamma[c][t] ∝ P(t | f_c; weights) * P(O_c | t)`.
pub fn expected_label_posterior(
    weights: &Weights,
    candidates: &[TrainingCandidate],
) -> Vec<Vec<f64>> {
    candidates
        .iter()
        .map(|c| {
            let posterior = relation_posterior(weights, &c.features);
            let mut gamma: Vec<f64> = (0..NUM_RELATIONS)
                .map(|t| posterior[t] * observation_likelihood(c.observed, t, c.confidence))
                .collect();
            let total: f64 = gamma.iter().sum();
            if total > 0.0 {
                for g in &mut gamma {
                    *g /= total;
                }
            } else {
                // Degenerate observation model; fall back to the model posterior.
                gamma = posterior;
            }
            gamma
        })
        .collect()
}

/// Expected complete-data log-likelihood
/// `Q(weights | gamma) = sum_c sum_t gamma[c][t] * (ln P(t|f_c) + ln P(O_c|t))`,
/// with zero-weight terms skipped.
pub fn em_q_value(weights: &Weights, candidates: &[TrainingCandidate], gamma: &[Vec<f64>]) -> f64 {
    let mut q = 0.0;
    for (c, cand) in candidates.iter().enumerate() {
        let posterior = relation_posterior(weights, &cand.features);
        for t in 0..NUM_RELATIONS {
            let g = gamma[c][t];
            if g <= 0.0 {
                continue;
            }
            let obs = observation_likelihood(cand.observed, t, cand.confidence);
            q += g * (posterior[t].ln() + obs.ln());
        }
    }
    q
}

/// Gradient of the weight-dependent part of Q (plus the optional L2
/// penalty): `dQ/dlambda[k][r] = sum_c f_{c,k} * (gamma[c][r] − P(r|f_c))
/// − l2 * lambda[k][r]`.
pub fn em_q_gradient(
    weights: &Weights,
    candidates: &[TrainingCandidate],
    gamma: &[Vec<f64>],
    l2: f64,
) -> Vec<Vec<f64>> {
    let mut grad = vec![vec![0.0; NUM_RELATIONS]; NUM_FEATURES];
    for (c, cand) in candidates.iter().enumerate() {
        let posterior = relation_posterior(weights, &cand.features);
        for (k, &fv) in cand.features.values().iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            for r in 0..NUM_RELATIONS {
                grad[k][r] += fv * (gamma[c][r] - posterior[r]);
            }
        }
    }
    if l2 > 0.0 {
        for k in 0..NUM_FEATURES {
            for r in 0..NUM_RELATIONS {
                grad[k][r] -= l2 * weights.lambda[k][r];
            }
        }
    }
    grad
}

fn penalized_q(
    weights: &Weights,
    candidates: &[TrainingCandidate],
    gamma: &[Vec<f64>],
    l2: f64,
) -> f64 {
    let mut q = em_q_value(weights, candidates, gamma);
    if l2 > 0.0 {
        let norm2: f64 = weights.lambda.iter().flatten().map(|v| v * v).sum();
        q -= 0.5 * l2 * norm2;
    }
    q
}

/// Fits the relation model by EM. The auxiliary objective
/// `Q(theta^{t+1} | theta^t)` never falls below `Q(theta^t | theta^t)`
/// minus 1e-8: each inner gradient step backtracks (halving the learning
/// rate) until it does not decrease the objective.
pub fn em_fit(
    candidates: &[TrainingCandidate],
    init: Weights,
    config: &EmConfig,
) -> Result<EmFit, RelModelError> {
    if candidates.is_empty() {
        return Err(RelModelError::EmptyCandidates);
    }
    for c in candidates {
        if !(0.0..=1.0).contains(&c.confidence) {
            return Err(RelModelError::BadConfidence(c.confidence));
        }
    }

    let mut weights = init;
    let mut history = Vec::new();
    {
        let gamma0 = expected_label_posterior(&weights, candidates);
        let q0 = em_q_value(&weights, candidates, &gamma0);
        if !q0.is_finite() {
            return Err(RelModelError::NonFiniteQ { iteration: 0 });
        }
        history.push(EmState { iteration: 0, q_value: q0, theta: weights.clone() });
    }

    for iteration in 1..=config.max_iters {
        let gamma = expected_label_posterior(&weights, candidates);
        let q_before = penalized_q(&weights, candidates, &gamma, config.l2);

        // M-step: gradient ascent with backtracking on the fixed gamma.
        let mut current = weights.clone();
        let mut current_q = q_before;
        for _ in 0..config.inner_steps {
            let grad = em_q_gradient(&current, candidates, &gamma, config.l2);
            let mut lr = config.learning_rate;
            let mut accepted = false;
            for _ in 0..40 {
                let mut proposal = current.clone();
                for k in 0..NUM_FEATURES {
                    for r in 0..NUM_RELATIONS {
                        proposal.lambda[k][r] += lr * grad[k][r];
                    }
                }
                let q = penalized_q(&proposal, candidates, &gamma, config.l2);
                if q.is_finite() && q >= current_q {
                    current = proposal;
                    current_q = q;
                    accepted = true;
                    break;
                }
                lr *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        let q_after = em_q_value(&current, candidates, &gamma);
        if !q_after.is_finite() {
            return Err(RelModelError::NonFiniteQ { iteration });
        }
        weights = current;
        history.push(EmState { iteration, q_value: q_after, theta: weights.clone() });

        let improvement = penalized_q(&weights, candidates, &gamma, config.l2) - q_before;
        if improvement.abs() < config.tol {
            break;
        }
    }

    Ok(EmFit { weights, history })
}
