//! Evaluation: precision/recall/F1/accuracy from confusion counts,
//! two-rater Cohen's kappa with a weighted consolidation across rater
//! pairs, and two judge-in-the-loop protocols (prompt validation and
//! edge consistency checking) behind a mockable judge port.
//!
//! Metrics with zero denominators are flagged as undefined (`None`)
//! rather than raised as errors. Per-item judge failures are tallied and
//! excluded from rate denominators, so a transport failure never counts
//! as a wrong answer. All reported rates lie in [0, 1] and travel with
//! their numerator and denominator.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::NodeType;
use crate::graph::KnowledgeGraph;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    EmptyInput(String),
    #[error("label sequences differ in length ({a} vs {b})")]
    MismatchedLengths { a: usize, b: usize },
    #[error("judge failed on item {item:?}: {reason}")]
    JudgeFailure { item: String, reason: String },
}

/// Protocol default: number of validation prompts.
pub const DEFAULT_PROMPT_COUNT: usize = 50;
/// Protocol default: number of edges sampled for consistency checking.
pub const DEFAULT_CONSISTENCY_SAMPLE: usize = 100;

/// Formats a rate with the standard four decimal places.
pub fn fraction4(x: f64) -> String {
    format!("{x:.4}")
}

// ---------------------------------------------------------------------------
// Classification metrics.

/// Confusion counts; `tn` may be absent for precision/recall-only
/// reports, in which case accuracy is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: Option<u64>,
}

/// Metrics derived from confusion counts; `None` marks a metric whose
/// denominator was zero (or whose inputs were unavailable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Harmonic mean of precision and recall; undefined when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let denom = precision + recall;
    if denom == 0.0 {
        None
    } else {
        Some(2.0 * precision * recall / denom)
    }
}

/// Computes precision, recall, F1, and (when `tn` is present) accuracy.
/// Zero-denominator metrics come back as `None`.
pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationReport {
    let tp = c.tp as f64;
    let precision = if c.tp + c.fp > 0 { Some(tp / (c.tp + c.fp) as f64) } else { None };
    let recall = if c.tp + c.fn_ > 0 { Some(tp / (c.tp + c.fn_) as f64) } else { None };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    let accuracy = c.tn.and_then(|tn| {
        let total = c.tp + tn + c.fp + c.fn_;
        if total > 0 {
            Some((c.tp + tn) as f64 / total as f64)
        } else {
            None
        }
    });
    ClassificationReport { precision, recall, f1, accuracy }
}

// ---------------------------------------------------------------------------
// Inter-rater agreement.

/// Two equal-length label sequences over a shared category universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaInput<T> {
    labels_a: Vec<T>,
    labels_b: Vec<T>,
}

impl<T: Ord + Clone> KappaInput<T> {
    pub fn new(labels_a: Vec<T>, labels_b: Vec<T>) -> Result<KappaInput<T>, EvalError> {
        if labels_a.len() != labels_b.len() {
            return Err(EvalError::MismatchedLengths { a: labels_a.len(), b: labels_b.len() });
        }
        if labels_a.is_empty() {
            return Err(EvalError::EmptyInput("label sequences are empty".to_string()));
        }
        Ok(KappaInput { labels_a, labels_b })
    }

    pub fn len(&self) -> usize {
        self.labels_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_a.is_empty()
    }
}

/// Cohen's kappa: (p_o − p_e) / (1 − p_e), with chance agreement p_e
/// from the product of the raters' marginal frequencies. Returns `None`
/// when p_e = 1 (both raters constant and identical), where kappa is
/// undefined.
pub fn cohen_kappa<T: Ord + Clone>(input: &KappaInput<T>) -> Option<f64> {
    let n = input.labels_a.len() as f64;
    let mut agree = 0usize;
    let mut count_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut count_b: BTreeMap<&T, usize> = BTreeMap::new();
    for (a, b) in input.labels_a.iter().zip(&input.labels_b) {
        if a == b {
            agree += 1;
        }
        *count_a.entry(a).or_insert(0) += 1;
        *count_b.entry(b).or_insert(0) += 1;
    }
    let p_o = agree as f64 / n;
    let mut p_e = 0.0;
    for (category, &ca) in &count_a {
        if let Some(&cb) = count_b.get(category) {
            p_e += (ca as f64 / n) * (cb as f64 / n);
        }
    }
    if p_e >= 1.0 {
        None
    } else {
        Some((p_o - p_e) / (1.0 - p_e))
    }
}

/// Weighted mean of pairwise kappa values — the consolidation used when
/// several raters each produce a pairwise agreement score. Weights are
/// evidence counts (or any nonnegative mass). `None` when the total
/// weight is zero.
pub fn consolidated_kappa(pairs: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = pairs.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    Some(pairs.iter().map(|(k, w)| k * w).sum::<f64>() / total)
}

// ---------------------------------------------------------------------------
// Judge port.

/// Closed verdict set for judge responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Correct,
    Incorrect,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        match s {
            "consistent" => Some(Verdict::Consistent),
            "inconsistent" => Some(Verdict::Inconsistent),
            "correct" => Some(Verdict::Correct),
            "incorrect" => Some(Verdict::Incorrect),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which verdict pair a protocol expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeProtocol {
    /// Prompt validation: correct / incorrect.
    Correctness,
    /// Edge review: consistent / inconsistent.
    Consistency,
}

impl JudgeProtocol {
    pub fn positive(self) -> Verdict {
        match self {
            JudgeProtocol::Correctness => Verdict::Correct,
            JudgeProtocol::Consistency => Verdict::Consistent,
        }
    }

    pub fn negative(self) -> Verdict {
        match self {
            JudgeProtocol::Correctness => Verdict::Incorrect,
            JudgeProtocol::Consistency => Verdict::Inconsistent,
        }
    }
}

/// Maps a free-text judge response onto the protocol's verdict pair by a
/// strict first-token rule: the first whitespace-delimited token,
/// lowercased and stripped of trailing punctuation, must be "yes"/"no"
/// or the protocol's own verdict word. Anything else is rejected.
pub fn verdict_from_text(text: &str, protocol: JudgeProtocol) -> Option<Verdict> {
    let token = text.split_whitespace().next()?;
    let token: String = token.trim_end_matches(['.', ',', '!', '?', ';', ':']).to_lowercase();
    if token == "yes" || token == protocol.positive().name() {
        Some(protocol.positive())
    } else if token == "no" || token == protocol.negative().name() {
        Some(protocol.negative())
    } else {
        None
    }
}

/// A judged item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub item: String,
    pub verdict: Verdict,
    pub rationale: String,
}

/// The judge port. Implementations may call an external model; tests
/// and offline runs use the scripted implementations below.
pub trait Judge {
    fn judge(&self, item: &str, prompt: &str) -> Result<JudgeVerdict, EvalError>;
}

/// Always returns the same verdict.
pub struct ConstantJudge(pub Verdict);

impl Judge for ConstantJudge {
    fn judge(&self, item: &str, _prompt: &str) -> Result<JudgeVerdict, EvalError> {
        Ok(JudgeVerdict {
            item: item.to_string(),
            verdict: self.0,
            rationale: "scripted".to_string(),
        })
    }
}

/// Cycles through a fixed verdict sequence in call order.
pub struct CyclingJudge {
    verdicts: Vec<Verdict>,
    next: Cell<usize>,
}

impl CyclingJudge {
    pub fn new(verdicts: Vec<Verdict>) -> CyclingJudge {
        assert!(!verdicts.is_empty(), "cycling judge needs at least one verdict");
        CyclingJudge { verdicts, next: Cell::new(0) }
    }
}

impl Judge for CyclingJudge {
    fn judge(&self, item: &str, _prompt: &str) -> Result<JudgeVerdict, EvalError> {
        let i = self.next.get();
        self.next.set(i + 1);
        Ok(JudgeVerdict {
            item: item.to_string(),
            verdict: self.verdicts[i % self.verdicts.len()],
            rationale: "scripted".to_string(),
        })
    }
}

/// Replays verdicts recorded per item id; unknown items fail, which the
/// protocols tally as judge failures. The TSV format is
/// `item<TAB>verdict[<TAB>rationale]` with `#` comments.
#[derive(Debug)]
pub struct RecordedJudge {
    verdicts: BTreeMap<String, (Verdict, String)>,
}

impl RecordedJudge {
    pub fn from_tsv(text: &str) -> Result<RecordedJudge, EvalError> {
        let mut verdicts = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.splitn(3, '\t');
            let item = parts.next().unwrap_or_default();
            let verdict_text = parts.next().ok_or_else(|| EvalError::Parse {
                line: line_no,
                reason: "expected item<TAB>verdict".to_string(),
            })?;
            let verdict = Verdict::parse(verdict_text).ok_or_else(|| EvalError::Parse {
                line: line_no,
                reason: format!("unknown verdict {verdict_text:?}"),
            })?;
            let rationale = parts.next().unwrap_or("").to_string();
            verdicts.insert(item.to_string(), (verdict, rationale));
        }
        Ok(RecordedJudge { verdicts })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RecordedJudge, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
        RecordedJudge::from_tsv(&text)
    }
}

impl Judge for RecordedJudge {
    fn judge(&self, item: &str, _prompt: &str) -> Result<JudgeVerdict, EvalError> {
        match self.verdicts.get(item) {
            Some((verdict, rationale)) => Ok(JudgeVerdict {
                item: item.to_string(),
                verdict: *verdict,
                rationale: rationale.clone(),
            }),
            None => Err(EvalError::JudgeFailure {
                item: item.to_string(),
                reason: "no recorded verdict".to_string(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Prompt validation.

/// A validation prompt with its annotated entity pair. File format: one
/// prompt per line, `text<TAB>Type:name<TAB>Type:name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub text: String,
    pub head_type: NodeType,
    pub head: String,
    pub tail_type: NodeType,
    pub tail: String,
}

fn parse_entity_annotation(text: &str, line: usize) -> Result<(NodeType, String), EvalError> {
    let (type_name, name) = text.split_once(':').ok_or_else(|| EvalError::Parse {
        line,
        reason: format!("entity annotation {text:?} is not Type:name"),
    })?;
    let node_type = NodeType::parse(type_name).ok_or_else(|| EvalError::Parse {
        line,
        reason: format!("unknown node type {type_name:?}"),
    })?;
    if name.is_empty() {
        return Err(EvalError::Parse { line, reason: "empty entity name".to_string() });
    }
    Ok((node_type, name.to_string()))
}

/// Parses the prompts file.
pub fn parse_prompts(text: &str) -> Result<Vec<PromptEntry>, EvalError> {
    let mut prompts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split('\t').collect();
        if parts.len() != 3 {
            return Err(EvalError::Parse {
                line: line_no,
                reason: format!(
                    "expected prompt<TAB>Type:name<TAB>Type:name, got {} fields",
                    parts.len()
                ),
            });
        }
        if parts[0].is_empty() {
            return Err(EvalError::Parse { line: line_no, reason: "empty prompt".to_string() });
        }
        let (head_type, head) = parse_entity_annotation(parts[1], line_no)?;
        let (tail_type, tail) = parse_entity_annotation(parts[2], line_no)?;
        prompts.push(PromptEntry { text: parts[0].to_string(), head_type, head, tail_type, tail });
    }
    Ok(prompts)
}

/// Loads the prompts file from disk.
pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptEntry>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    parse_prompts(&text)
}

/// What the graph knows about the annotated entity pair, in either
/// direction, rendered for the judge.
fn graph_answer(graph: &KnowledgeGraph, entry: &PromptEntry) -> String {
    let head = graph.node_by_key(&entry.head, entry.head_type);
    let tail = graph.node_by_key(&entry.tail, entry.tail_type);
    let (head, tail) = match (head, tail) {
        (Some(h), Some(t)) => (h, t),
        _ => return "no relationship recorded".to_string(),
    };
    let mut parts = Vec::new();
    for edge in graph.edges() {
        let (from, to) = if edge.head == head.id && edge.tail == tail.id {
            (head, tail)
        } else if edge.head == tail.id && edge.tail == head.id {
            (tail, head)
        } else {
            continue;
        };
        parts.push(format!(
            "{} {} {} (confidence {})",
            from.canonical_name,
            edge.edge_type.name(),
            to.canonical_name,
            edge.confidence
        ));
    }
    if parts.is_empty() {
        "no relationship recorded".to_string()
    } else {
        parts.join("; ")
    }
}

/// Outcome of prompt validation. `rate` = correct / answered; judge
/// failures are excluded from the denominator and tallied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub correct: usize,
    pub answered: usize,
    pub failures: usize,
    pub rate: Option<f64>,
    pub verdicts: Vec<JudgeVerdict>,
}

/// Submits each prompt together with the graph's answer to the judge
/// and reports the correctness rate.
pub fn prompt_validation(
    graph: &KnowledgeGraph,
    prompts: &[PromptEntry],
    judge: &dyn Judge,
) -> Result<ValidationOutcome, EvalError> {
    if prompts.is_empty() {
        return Err(EvalError::EmptyInput("no prompts to validate".to_string()));
    }
    let mut correct = 0;
    let mut answered = 0;
    let mut failures = 0;
    let mut verdicts = Vec::new();
    for (i, entry) in prompts.iter().enumerate() {
        let item = format!("p{i}");
        let answer = graph_answer(graph, entry);
        let prompt = format!("{}\nGraph answer: {answer}", entry.text);
        match judge.judge(&item, &prompt) {
            Ok(verdict) => {
                answered += 1;
                if verdict.verdict == Verdict::Correct {
                    correct += 1;
                }
                verdicts.push(verdict);
            }
            Err(_) => failures += 1,
        }
    }
    let rate = if answered > 0 { Some(correct as f64 / answered as f64) } else { None };
    Ok(ValidationOutcome { correct, answered, failures, rate, verdicts })
}

// ---------------------------------------------------------------------------
// Consistency checking.

/// Outcome of the consistency review. `rate` = consistent / judged;
/// `flagged` lists the edges judged inconsistent; `sampled` records the
/// deterministic sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOutcome {
    pub consistent: usize,
    pub judged: usize,
    pub failures: usize,
    pub rate: Option<f64>,
    pub flagged: Vec<String>,
    pub sampled: Vec<String>,
}

fn edge_key(graph: &KnowledgeGraph, edge_idx: usize) -> String {
    let edge = &graph.edges()[edge_idx];
    let head = graph.node_by_id(&edge.head).expect("endpoints exist");
    let tail = graph.node_by_id(&edge.tail).expect("endpoints exist");
    format!(
        "{}:{} -{}-> {}:{}",
        head.node_type,
        head.canonical_name,
        edge.edge_type.name(),
        tail.node_type,
        tail.canonical_name
    )
}

fn edge_prompt(graph: &KnowledgeGraph, edge_idx: usize) -> String {
    let edge = &graph.edges()[edge_idx];
    let mut prompt = format!("Edge under review: {}\nNeighborhood:\n", edge_key(graph, edge_idx));
    let mut neighbors = 0;
    for (i, other) in graph.edges().iter().enumerate() {
        if i == edge_idx {
            continue;
        }
        if other.head == edge.head
            || other.head == edge.tail
            || other.tail == edge.head
            || other.tail == edge.tail
        {
            prompt.push_str(&format!("- {}\n", edge_key(graph, i)));
            neighbors += 1;
            if neighbors == 5 {
                break;
            }
        }
    }
    if neighbors == 0 {
        prompt.push_str("- (none)\n");
    }
    prompt
}

/// Draws a deterministic seeded sample of edges — edges touching a
/// Diseases or Treatments node first — and submits each with its
/// neighborhood to the judge.
pub fn consistency_check(
    graph: &KnowledgeGraph,
    sample_size: usize,
    judge: &dyn Judge,
    seed: u64,
) -> Result<ConsistencyOutcome, EvalError> {
    if graph.edges().is_empty() {
        return Err(EvalError::EmptyInput("graph has no edges to review".to_string()));
    }
    let is_priority = |edge_idx: usize| -> bool {
        let edge = &graph.edges()[edge_idx];
        [&edge.head, &edge.tail].iter().any(|id| {
            let node = graph.node_by_id(id).expect("endpoints exist");
            matches!(node.node_type, NodeType::Diseases | NodeType::Treatments)
        })
    };
    let mut priority: Vec<usize> = (0..graph.edges().len()).filter(|&i| is_priority(i)).collect();
    let mut rest: Vec<usize> = (0..graph.edges().len()).filter(|&i| !is_priority(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    priority.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    let take = sample_size.min(graph.edges().len());
    let sample: Vec<usize> = priority.into_iter().chain(rest).take(take).collect();

    let mut consistent = 0;
    let mut judged = 0;
    let mut failures = 0;
    let mut flagged = Vec::new();
    let mut sampled = Vec::new();
    for &edge_idx in &sample {
        let item = edge_key(graph, edge_idx);
        sampled.push(item.clone());
        let prompt = edge_prompt(graph, edge_idx);
        match judge.judge(&item, &prompt) {
            Ok(verdict) => {
                judged += 1;
                if verdict.verdict == Verdict::Consistent {
                    consistent += 1;
                } else {
                    flagged.push(item);
                }
            }
            Err(_) => failures += 1,
        }
    }
    let rate = if judged > 0 { Some(consistent as f64 / judged as f64) } else { None };
    Ok(ConsistencyOutcome { consistent, judged, failures, rate, flagged, sampled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{CandidateTriple, EdgeType, Evidence, Mention};
    use std::collections::BTreeMap as Map;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: Option<u64>) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn f1_matches_reported_operating_points() {
        let f1 = f1_score(0.8711, 0.9103).unwrap();
        assert!((f1 - 0.8902).abs() < 0.0005, "got {f1}");
        let f1 = f1_score(0.9073, 0.8881).unwrap();
        assert!((f1 - 0.8976).abs() < 0.0005, "got {f1}");
    }

    #[test]
    fn zero_counts_flag_all_metrics_undefined() {
        let report = classification_metrics(&counts(0, 0, 0, None));
        assert_eq!(report.precision, None);
        assert_eq!(report.recall, None);
        assert_eq!(report.f1, None);
        assert_eq!(report.accuracy, None);
    }

    #[test]
    fn zero_precision_and_recall_leave_f1_undefined() {
        let report = classification_metrics(&counts(0, 3, 4, None));
        assert_eq!(report.precision, Some(0.0));
        assert_eq!(report.recall, Some(0.0));
        assert_eq!(report.f1, None);
    }

    #[test]
    fn accuracy_requires_tn() {
        let with = classification_metrics(&counts(8, 2, 1, Some(9)));
        assert_eq!(with.accuracy, Some(17.0 / 20.0));
        let without = classification_metrics(&counts(8, 2, 1, None));
        assert_eq!(without.accuracy, None);
    }

    #[test]
    fn f1_is_the_harmonic_mean_and_below_the_arithmetic_mean() {
        for tp in 0u64..6 {
            for fp in 0u64..6 {
                for fn_ in 0u64..6 {
                    let report = classification_metrics(&counts(tp, fp, fn_, None));
                    if let (Some(p), Some(r), Some(f1)) =
                        (report.precision, report.recall, report.f1)
                    {
                        let brute = 2.0 * p * r / (p + r);
                        assert!((f1 - brute).abs() < 1e-12);
                        assert!(f1 <= (p + r) / 2.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_labelings_give_kappa_one() {
        let input = KappaInput::new(vec![0, 1, 0, 2, 1], vec![0, 1, 0, 2, 1]).unwrap();
        assert_eq!(cohen_kappa(&input), Some(1.0));
    }

    #[test]
    fn hand_worked_kappa_is_exactly_half() {
        let input = KappaInput::new(vec![1, 1, 0, 0], vec![1, 0, 0, 0]).unwrap();
        assert_eq!(cohen_kappa(&input), Some(0.5));
    }

    #[test]
    fn independent_random_labelings_give_near_zero_kappa() {
        use rand::Rng;
        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let mut rng_b = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let a: Vec<u8> = (0..n).map(|_| rng_a.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng_b.gen_range(0..3)).collect();
        let kappa = cohen_kappa(&KappaInput::new(a, b).unwrap()).unwrap();
        assert!(kappa.abs() < 0.05, "got {kappa}");
    }

    #[test]
    fn kappa_is_invariant_under_shared_relabeling() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<u8> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let b: Vec<u8> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let base = cohen_kappa(&KappaInput::new(a.clone(), b.clone()).unwrap()).unwrap();
        let relabel = |x: u8| [2u8, 0, 3, 1][x as usize];
        let a2: Vec<u8> = a.iter().map(|&x| relabel(x)).collect();
        let b2: Vec<u8> = b.iter().map(|&x| relabel(x)).collect();
        let permuted = cohen_kappa(&KappaInput::new(a2, b2).unwrap()).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn constant_identical_raters_are_undefined() {
        let input = KappaInput::new(vec![1, 1, 1], vec![1, 1, 1]).unwrap();
        assert_eq!(cohen_kappa(&input), None);
    }

    #[test]
    fn kappa_input_validates_shape() {
        assert!(matches!(
            KappaInput::new(vec![1], vec![1, 2]),
            Err(EvalError::MismatchedLengths { a: 1, b: 2 })
        ));
        assert!(matches!(KappaInput::<u8>::new(vec![], vec![]), Err(EvalError::EmptyInput(_))));
    }

    #[test]
    fn consolidated_kappa_is_a_weighted_mean() {
        assert_eq!(consolidated_kappa(&[(1.0, 3.0), (0.5, 1.0)]), Some(0.875));
        assert_eq!(consolidated_kappa(&[]), None);
        assert_eq!(consolidated_kappa(&[(0.9, 0.0)]), None);
    }

    #[test]
    fn free_text_verdicts_use_the_first_token_only() {
        use JudgeProtocol::*;
        assert_eq!(verdict_from_text("Yes, it holds.", Correctness), Some(Verdict::Correct));
        assert_eq!(verdict_from_text("no", Correctness), Some(Verdict::Incorrect));
        assert_eq!(verdict_from_text("Consistent — fine.", Consistency), Some(Verdict::Consistent));
        assert_eq!(verdict_from_text("INCONSISTENT.", Consistency), Some(Verdict::Inconsistent));
        assert_eq!(verdict_from_text("the answer is yes", Correctness), None);
        assert_eq!(verdict_from_text("", Correctness), None);
        assert_eq!(verdict_from_text("correct", Consistency), None);
    }

    fn mention(surface: &str, node_type: NodeType) -> Mention {
        Mention {
            surface: surface.to_string(),
            node_type,
            doc_id: "d0".to_string(),
            start: 0,
            end: surface.len(),
        }
    }

    fn add_triple(
        g: &mut KnowledgeGraph,
        head: (&str, NodeType),
        edge: EdgeType,
        tail: (&str, NodeType),
        confidence: f64,
    ) {
        let t = CandidateTriple {
            head: mention(head.0, head.1),
            edge,
            tail: mention(tail.0, tail.1),
            confidence,
            attributes: Map::new(),
            evidence: Evidence { doc_id: "d0".to_string(), sentence: 0 },
        };
        g.upsert_node(head.0, head.1, "d0").unwrap();
        g.upsert_node(tail.0, tail.1, "d0").unwrap();
        g.add_edge(&t, 0.0).unwrap();
    }

    fn fixture_graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        add_triple(
            &mut g,
            ("aspirin", NodeType::Medications),
            EdgeType::Treats,
            ("stroke", NodeType::Diseases),
            0.9,
        );
        add_triple(
            &mut g,
            ("hypertension", NodeType::RiskFactors),
            EdgeType::AssociatedWith,
            ("stroke", NodeType::Diseases),
            0.8,
        );
        add_triple(
            &mut g,
            ("nihss", NodeType::Biomarkers),
            EdgeType::MonitoredBy,
            ("mri", NodeType::Procedures),
            0.7,
        );
        g
    }

    fn prompt(text: &str, head: (&str, NodeType), tail: (&str, NodeType)) -> PromptEntry {
        PromptEntry {
            text: text.to_string(),
            head_type: head.1,
            head: head.0.to_string(),
            tail_type: tail.1,
            tail: tail.0.to_string(),
        }
    }

    #[test]
    fn prompts_parse_and_report_bad_lines() {
        let good = "Does aspirin treat stroke?\tMedications:aspirin\tDiseases:stroke\n";
        let prompts = parse_prompts(good).unwrap();
        assert_eq!(prompts.len(), 1);
        assert_eq!(prompts[0].head, "aspirin");
        assert_eq!(prompts[0].tail_type, NodeType::Diseases);

        let err = parse_prompts("only text, no annotation\n").unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 1, .. }));
        let err = parse_prompts("q?\tNotAType:x\tDiseases:stroke\n").unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 1, .. }));
    }

    #[test]
    fn always_correct_judge_gives_rate_one() {
        let g = fixture_graph();
        let prompts = vec![
            prompt("q1", ("aspirin", NodeType::Medications), ("stroke", NodeType::Diseases)),
            prompt("q2", ("hypertension", NodeType::RiskFactors), ("stroke", NodeType::Diseases)),
        ];
        let outcome = prompt_validation(&g, &prompts, &ConstantJudge(Verdict::Correct)).unwrap();
        assert_eq!(outcome.rate, Some(1.0));
        assert_eq!(outcome.answered, 2);
        assert_eq!(outcome.failures, 0);
    }

    #[test]
    fn alternating_judge_gives_half_on_even_sets() {
        let g = fixture_graph();
        let prompts: Vec<PromptEntry> = (0..4)
            .map(|i| {
                prompt(
                    &format!("q{i}"),
                    ("aspirin", NodeType::Medications),
                    ("stroke", NodeType::Diseases),
                )
            })
            .collect();
        let judge = CyclingJudge::new(vec![Verdict::Correct, Verdict::Incorrect]);
        let outcome = prompt_validation(&g, &prompts, &judge).unwrap();
        assert_eq!(outcome.rate, Some(0.5));
    }

    #[test]
    fn judge_failures_are_excluded_and_tallied() {
        let g = fixture_graph();
        // Verdicts recorded for p0, p1, p2 only; p3 fails.
        let judge =
            RecordedJudge::from_tsv("p0\tcorrect\tlooks right\np1\tincorrect\np2\tcorrect\n")
                .unwrap();
        let prompts: Vec<PromptEntry> = (0..4)
            .map(|i| {
                prompt(
                    &format!("q{i}"),
                    ("aspirin", NodeType::Medications),
                    ("stroke", NodeType::Diseases),
                )
            })
            .collect();
        let outcome = prompt_validation(&g, &prompts, &judge).unwrap();
        assert_eq!(outcome.answered, 3);
        assert_eq!(outcome.failures, 1);
        assert_eq!(outcome.correct, 2);
        assert_eq!(outcome.rate, Some(2.0 / 3.0));
    }

    #[test]
    fn recorded_fixture_over_ten_prompts_gives_golden_rate() {
        let g = fixture_graph();
        let mut tsv = String::new();
        for i in 0..7 {
            tsv.push_str(&format!("p{i}\tcorrect\n"));
        }
        tsv.push_str("p7\tincorrect\np8\tincorrect\n"); // p9 missing -> failure
        let judge = RecordedJudge::from_tsv(&tsv).unwrap();
        let prompts: Vec<PromptEntry> = (0..10)
            .map(|i| {
                prompt(
                    &format!("q{i}"),
                    ("aspirin", NodeType::Medications),
                    ("stroke", NodeType::Diseases),
                )
            })
            .collect();
        let outcome = prompt_validation(&g, &prompts, &judge).unwrap();
        assert_eq!(outcome.answered, 9);
        assert_eq!(outcome.failures, 1);
        assert_eq!(outcome.rate, Some(7.0 / 9.0));
    }

    #[test]
    fn graph_answer_reports_edges_between_the_pair() {
        let g = fixture_graph();
        let entry = prompt("q", ("aspirin", NodeType::Medications), ("stroke", NodeType::Diseases));
        let answer = graph_answer(&g, &entry);
        assert!(answer.contains("Treats"), "got {answer}");
        let entry = prompt("q", ("stroke", NodeType::Diseases), ("aspirin", NodeType::Medications));
        assert!(graph_answer(&g, &entry).contains("Treats"));
        let entry =
            prompt("q", ("warfarin", NodeType::Medications), ("stroke", NodeType::Diseases));
        assert_eq!(graph_answer(&g, &entry), "no relationship recorded");
    }

    #[test]
    fn empty_prompt_set_is_an_error() {
        let g = fixture_graph();
        assert!(matches!(
            prompt_validation(&g, &[], &ConstantJudge(Verdict::Correct)),
            Err(EvalError::EmptyInput(_))
        ));
    }

    #[test]
    fn always_consistent_judge_gives_rate_one_and_no_flags() {
        let g = fixture_graph();
        let outcome = consistency_check(&g, 100, &ConstantJudge(Verdict::Consistent), 0).unwrap();
        assert_eq!(outcome.rate, Some(1.0));
        assert!(outcome.flagged.is_empty());
        // sample_size larger than the graph clamps to all edges.
        assert_eq!(outcome.judged, 3);
    }

    #[test]
    fn consistency_sample_is_deterministic_and_prioritized() {
        let g = fixture_graph();
        let a = consistency_check(&g, 2, &ConstantJudge(Verdict::Consistent), 42).unwrap();
        let b = consistency_check(&g, 2, &ConstantJudge(Verdict::Consistent), 42).unwrap();
        assert_eq!(a.sampled, b.sampled);
        // Both disease-touching edges come before the biomarker edge.
        assert_eq!(a.sampled.len(), 2);
        for key in &a.sampled {
            assert!(key.contains("Diseases"), "non-priority edge sampled first: {key}");
        }
    }

    #[test]
    fn inconsistent_edges_are_flagged() {
        let g = fixture_graph();
        let judge = CyclingJudge::new(vec![Verdict::Consistent, Verdict::Inconsistent]);
        let outcome = consistency_check(&g, 100, &judge, 0).unwrap();
        assert_eq!(outcome.judged, 3);
        assert_eq!(outcome.flagged.len(), 1);
        assert_eq!(outcome.rate, Some(2.0 / 3.0));
    }

    #[test]
    fn empty_graph_cannot_be_reviewed() {
        let g = KnowledgeGraph::new();
        assert!(matches!(
            consistency_check(&g, 10, &ConstantJudge(Verdict::Consistent), 0),
            Err(EvalError::EmptyInput(_))
        ));
    }

    #[test]
    fn recorded_judge_rejects_malformed_lines() {
        let err = RecordedJudge::from_tsv("p0 correct\n").unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 1, .. }));
        let err = RecordedJudge::from_tsv("p0\tmaybe\n").unwrap_err();
        assert!(matches!(err, EvalError::Parse { line: 1, .. }));
    }

    #[test]
    fn rates_are_formatted_with_four_decimals() {
        assert_eq!(fraction4(0.896153), "0.8962");
        assert_eq!(fraction4(1.0), "1.0000");
    }
}
