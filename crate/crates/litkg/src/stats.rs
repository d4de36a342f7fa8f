//! Cooccurrence statistics: joint distributions over entity pairs, mutual
//! information, and the log-normalized entity probability matrix.
//!
//! Counting is presence-based per window (sentence or whole document): a
//! window containing both entities contributes one count to the unordered
//! pair, regardless of mention multiplicity. Self-pairs are excluded. The
//! entity probability matrix keeps its diagonal fixed at zero and applies
//! Laplace smoothing to off-diagonal cells only, so the grand sum is
//! exactly one. All logarithms are natural (values in nats).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{DocumentLayout, Mention};
use crate::util::sci12;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("degenerate counts: {0}")]
    DegenerateCounts(String),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Cooccurrence window granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Sentence,
    Document,
}

/// Presence counts per window: how many windows contain each entity, each
/// unordered entity pair, and how many windows exist in total.
///
/// Keys are canonical entity names; pair keys are stored with the
/// lexicographically smaller name first. Counts over disjoint document sets
/// merge additively (a commutative monoid), so parallel partial counts give
/// the same totals as one sequential pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceCounts {
    pub entities: Vec<String>,
    pub pair_counts: BTreeMap<(String, String), u64>,
    pub entity_windows: BTreeMap<String, u64>,
    pub total_windows: u64,
}

impl CooccurrenceCounts {
    /// Count for the unordered pair `{a, b}`; zero for self-pairs and
    /// unseen pairs.
    pub fn pair(&self, a: &str, b: &str) -> u64 {
        if a == b {
            return 0;
        }
        let key =
            if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.pair_counts.get(&key).copied().unwrap_or(0)
    }

    /// Windows containing the entity at least once.
    pub fn windows_with(&self, entity: &str) -> u64 {
        self.entity_windows.get(entity).copied().unwrap_or(0)
    }

    /// Additive merge of two partial counts (vocabulary union).
    pub fn merge(mut self, other: CooccurrenceCounts) -> CooccurrenceCounts {
        let mut vocab: BTreeSet<String> = self.entities.into_iter().collect();
        vocab.extend(other.entities);
        self.entities = vocab.into_iter().collect();
        for (k, v) in other.pair_counts {
            *self.pair_counts.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.entity_windows {
            *self.entity_windows.entry(k).or_insert(0) += v;
        }
        self.total_windows += other.total_windows;
        self
    }
}

/// Counts windows containing entity pairs. Mentions are grouped by the
/// document ids carried in the layouts; a mention belonging to no provided
/// layout is ignored. Sentence windows follow the layout's sentence spans;
/// the document window is the whole cleaned text.
pub fn count_cooccurrences(
    layouts: &[DocumentLayout],
    mentions: &[Mention],
    window: Window,
) -> CooccurrenceCounts {
    let mut by_doc: BTreeMap<&str, Vec<&Mention>> = BTreeMap::new();
    for m in mentions {
        by_doc.entry(m.doc_id.as_str()).or_default().push(m);
    }
    let mut counts = CooccurrenceCounts::default();
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for m in mentions {
        vocab.insert(m.canonical_key());
    }
    counts.entities = vocab.into_iter().collect();

    for layout in layouts {
        let doc_mentions = by_doc.get(layout.doc_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        // Entity sets per window.
        let window_sets: Vec<BTreeSet<String>> = match window {
            Window::Document => {
                let set: BTreeSet<String> =
                    doc_mentions.iter().map(|m| m.canonical_key()).collect();
                vec![set]
            }
            Window::Sentence => layout
                .sentences
                .iter()
                .map(|s| {
                    doc_mentions
                        .iter()
                        .filter(|m| m.start >= s.start && m.end <= s.end)
                        .map(|m| m.canonical_key())
                        .collect()
                })
                .collect(),
        };
        for set in window_sets {
            counts.total_windows += 1;
            for e in &set {
                *counts.entity_windows.entry(e.clone()).or_insert(0) += 1;
            }
            let items: Vec<&String> = set.iter().collect();
            for i in 0..items.len() {
                for j in (i + 1)..items.len() {
                    let key = (items[i].clone(), items[j].clone());
                    *counts.pair_counts.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// A joint distribution over two finite supports, with marginals available
/// as row and column sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub support_x: Vec<String>,
    pub support_y: Vec<String>,
    pub p: Vec<Vec<f64>>,
}

impl JointDistribution {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.p.len() != self.support_x.len() {
            return Err(StatsError::InvalidDistribution("row count mismatch".to_string()));
        }
        let mut total = 0.0;
        for row in &self.p {
            if row.len() != self.support_y.len() {
                return Err(StatsError::InvalidDistribution("column count mismatch".to_string()));
            }
            for &v in row {
                if v.is_nan() || v < 0.0 {
                    return Err(StatsError::InvalidDistribution(format!(
                        "negative or non-finite entry {v}"
                    )));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(StatsError::InvalidDistribution(format!("sum {total} != 1")));
        }
        Ok(())
    }

    /// Row sums: p(x_i).
    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().sum()).collect()
    }

    /// Column sums: p(y_j).
    pub fn marginal_y(&self) -> Vec<f64> {
        let cols = self.support_y.len();
        let mut out = vec![0.0; cols];
        for row in &self.p {
            for (j, &v) in row.iter().enumerate() {
                out[j] += v;
            }
        }
        out
    }
}

/// Symmetric entity-pair probability matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub entities: Vec<String>,
    pub p: Vec<Vec<f64>>,
}

impl ProbabilityMatrix {
    pub fn validate(&self) -> Result<(), StatsError> {
        let n = self.entities.len();
        if self.p.len() != n || self.p.iter().any(|r| r.len() != n) {
            return Err(StatsError::InvalidDistribution("shape mismatch".to_string()));
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = self.p[i][j];
                if v.is_nan() || v < 0.0 {
                    return Err(StatsError::InvalidDistribution(format!("bad entry {v}")));
                }
                if (v - self.p[j][i]).abs() > 1e-12 {
                    return Err(StatsError::InvalidDistribution(format!("asymmetry at ({i},{j})")));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(StatsError::InvalidDistribution(format!("sum {total} != 1")));
        }
        Ok(())
    }

    pub fn as_joint(&self) -> JointDistribution {
        JointDistribution {
            support_x: self.entities.clone(),
            support_y: self.entities.clone(),
            p: self.p.clone(),
        }
    }
}

/// Elementwise natural log of a probability matrix shifted by epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbabilityMatrix {
    pub entities: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub epsilon: f64,
}

/// Estimates the smoothed entity-pair probability matrix from presence
/// counts: off-diagonal cells get `(count + alpha)` mass, the diagonal
/// stays exactly zero, and the whole matrix is normalized by
/// `sum(counts over ordered off-diagonal cells) + alpha * (N^2 - N)`.
pub fn estimate_joint(
    counts: &CooccurrenceCounts,
    alpha: f64,
) -> Result<ProbabilityMatrix, StatsError> {
    let n = counts.entities.len();
    if n < 2 {
        return Err(StatsError::DegenerateCounts(format!("need at least two entities, have {n}")));
    }
    if alpha < 0.0 {
        return Err(StatsError::DegenerateCounts(format!("negative alpha {alpha}")));
    }
    // Each unordered pair count appears in two ordered cells.
    let count_sum: u64 = counts.pair_counts.values().map(|c| 2 * c).sum();
    let denom = count_sum as f64 + alpha * (n * n - n) as f64;
    if denom <= 0.0 {
        return Err(StatsError::DegenerateCounts("all counts zero and alpha = 0".to_string()));
    }
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = counts.pair(&counts.entities[i], &counts.entities[j]);
            p[i][j] = (c as f64 + alpha) / denom;
        }
    }
    Ok(ProbabilityMatrix { entities: counts.entities.clone(), p })
}

/// Mutual information of a joint distribution, in nats. Zero-probability
/// cells contribute zero.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for (i, row) in joint.p.iter().enumerate() {
        for (j, &pxy) in row.iter().enumerate() {
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[i] * py[j])).ln();
            }
        }
    }
    mi
}

/// Mutual information between the presence indicators of two entities over
/// the counted windows: the 2x2 joint over (a present, b present). Returns
/// `None` when no windows were counted.
pub fn presence_mi(counts: &CooccurrenceCounts, a: &str, b: &str) -> Option<f64> {
    if counts.total_windows == 0 || a == b {
        return None;
    }
    let w = counts.total_windows as f64;
    let both = counts.pair(a, b) as f64;
    let wa = counts.windows_with(a) as f64;
    let wb = counts.windows_with(b) as f64;
    let p11 = both / w;
    let p10 = (wa - both) / w;
    let p01 = (wb - both) / w;
    let p00 = (w - wa - wb + both) / w;
    let joint = JointDistribution {
        support_x: vec!["absent".to_string(), "present".to_string()],
        support_y: vec!["absent".to_string(), "present".to_string()],
        p: vec![vec![p00, p01], vec![p10, p11]],
    };
    Some(mutual_information(&joint))
}

/// Elementwise `ln(p + epsilon)`; strictly monotone in p, so the argmax of
/// the input is the argmax of the output.
pub fn log_normalize(
    matrix: &ProbabilityMatrix,
    epsilon: f64,
) -> Result<LogProbabilityMatrix, StatsError> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(StatsError::NonPositiveEpsilon(epsilon));
    }
    let values =
        matrix.p.iter().map(|row| row.iter().map(|&v| (v + epsilon).ln()).collect()).collect();
    Ok(LogProbabilityMatrix { entities: matrix.entities.clone(), values, epsilon })
}

/// Default smoothing weight for [`estimate_joint`].
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Default epsilon for [`log_normalize`].
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Renders an entity-keyed matrix as TSV: a header row of entity keys, one
/// row per entity, values in 12-significant-digit scientific notation.
pub fn matrix_tsv(entities: &[String], values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str("entity");
    for e in entities {
        out.push('\t');
        out.push_str(e);
    }
    out.push('\n');
    for (i, row) in values.iter().enumerate() {
        out.push_str(&entities[i]);
        for &v in row {
            out.push('\t');
            out.push_str(&sci12(v));
        }
        out.push('\n');
    }
    out
}

/// Writes a matrix TSV to disk.
pub fn save_matrix_tsv(
    path: impl AsRef<Path>,
    entities: &[String],
    values: &[Vec<f64>],
) -> Result<(), StatsError> {
    let path = path.as_ref();
    fs::write(path, matrix_tsv(entities, values))
        .map_err(|source| StatsError::Io { path: path.display().to_string(), source })
}
