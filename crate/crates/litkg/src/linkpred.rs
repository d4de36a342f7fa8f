//! Link prediction over triple datasets: TransE, DistMult, ComplEx, and
//! RotatE embeddings trained by SGD with uniform negative corruption,
//! and tie-aware ranking evaluation (MR, MRR, hits@K, P@K) in raw and
//! filtered settings.
//!
//! All training is single-threaded and deterministic given the seed.
//! Ranks use the mean-rank tie rule: rank = 1 + |strictly better| +
//! |ties| / 2, so a rank can be fractional. Every test triple produces
//! two queries (head prediction and tail prediction). hits@K and the
//! literal P@K = hits@K / K are reported side by side.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinkPredError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {reason}")]
    Parse { file: String, line: usize, reason: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("{what} index {index} out of range (have {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("rank list is empty")]
    EmptyRanks,
    #[error("K must be at least 1")]
    BadK,
}

// ---------------------------------------------------------------------------
// Dataset.

/// Indexed triple dataset with disjoint train/valid/test splits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleDataset {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub train: Vec<(usize, usize, usize)>,
    pub valid: Vec<(usize, usize, usize)>,
    pub test: Vec<(usize, usize, usize)>,
}

impl TripleDataset {
    /// Checks index ranges and pairwise split disjointness.
    pub fn validate(&self) -> Result<(), LinkPredError> {
        let check = |split: &[(usize, usize, usize)], name: &str| {
            for &(h, r, t) in split {
                if h >= self.entities.len() || t >= self.entities.len() {
                    return Err(LinkPredError::InvalidDataset(format!(
                        "{name} split references entity index out of range"
                    )));
                }
                if r >= self.relations.len() {
                    return Err(LinkPredError::InvalidDataset(format!(
                        "{name} split references relation index out of range"
                    )));
                }
            }
            Ok(())
        };
        check(&self.train, "train")?;
        check(&self.valid, "valid")?;
        check(&self.test, "test")?;
        let train: BTreeSet<_> = self.train.iter().collect();
        let valid: BTreeSet<_> = self.valid.iter().collect();
        let test: BTreeSet<_> = self.test.iter().collect();
        for (a, b, names) in [
            (&train, &valid, "train/valid"),
            (&train, &test, "train/test"),
            (&valid, &test, "valid/test"),
        ] {
            if a.intersection(b).next().is_some() {
                return Err(LinkPredError::InvalidDataset(format!(
                    "{names} splits share a triple"
                )));
            }
        }
        Ok(())
    }

    /// All triples across the three splits, for filtered ranking.
    pub fn all_triples(&self) -> BTreeSet<(usize, usize, usize)> {
        self.train.iter().chain(&self.valid).chain(&self.test).copied().collect()
    }
}

fn parse_split(
    text: &str,
    file: &str,
    entity_index: &mut BTreeMap<String, usize>,
    entities: &mut Vec<String>,
    relation_index: &mut BTreeMap<String, usize>,
    relations: &mut Vec<String>,
) -> Result<Vec<(usize, usize, usize)>, LinkPredError> {
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split('\t').collect();
        if parts.len() != 3 {
            return Err(LinkPredError::Parse {
                file: file.to_string(),
                line: line_no,
                reason: format!("expected head<TAB>relation<TAB>tail, got {} fields", parts.len()),
            });
        }
        if parts.iter().any(|p| p.is_empty()) {
            return Err(LinkPredError::Parse {
                file: file.to_string(),
                line: line_no,
                reason: "empty field".to_string(),
            });
        }
        let mut entity = |name: &str| -> usize {
            *entity_index.entry(name.to_string()).or_insert_with(|| {
                entities.push(name.to_string());
                entities.len() - 1
            })
        };
        let h = entity(parts[0]);
        let t = entity(parts[2]);
        let r = *relation_index.entry(parts[1].to_string()).or_insert_with(|| {
            relations.push(parts[1].to_string());
            relations.len() - 1
        });
        triples.push((h, r, t));
    }
    Ok(triples)
}

/// Parses the three split texts into one indexed dataset. Indices are
/// assigned in order of first appearance (train, then valid, then test).
pub fn parse_dataset(train: &str, valid: &str, test: &str) -> Result<TripleDataset, LinkPredError> {
    let mut entity_index = BTreeMap::new();
    let mut entities = Vec::new();
    let mut relation_index = BTreeMap::new();
    let mut relations = Vec::new();
    let train = parse_split(
        train,
        "train",
        &mut entity_index,
        &mut entities,
        &mut relation_index,
        &mut relations,
    )?;
    let valid = parse_split(
        valid,
        "valid",
        &mut entity_index,
        &mut entities,
        &mut relation_index,
        &mut relations,
    )?;
    let test = parse_split(
        test,
        "test",
        &mut entity_index,
        &mut entities,
        &mut relation_index,
        &mut relations,
    )?;
    let dataset = TripleDataset { entities, relations, train, valid, test };
    dataset.validate()?;
    Ok(dataset)
}

/// Loads the three split files (TSV of head, relation, tail keys).
pub fn load_dataset(
    train_path: impl AsRef<Path>,
    valid_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<TripleDataset, LinkPredError> {
    let read = |path: &Path| -> Result<String, LinkPredError> {
        fs::read_to_string(path)
            .map_err(|source| LinkPredError::Io { path: path.display().to_string(), source })
    };
    let train = read(train_path.as_ref())?;
    let valid = read(valid_path.as_ref())?;
    let test = read(test_path.as_ref())?;
    parse_dataset(&train, &valid, &test)
}

// ---------------------------------------------------------------------------
// Models.

/// Embedding model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    DistMult,
    #[serde(rename = "complex")]
    ComplEx,
    #[serde(rename = "rotate")]
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::TransE, ModelKind::DistMult, ModelKind::ComplEx, ModelKind::RotatE];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE => "rotate",
        }
    }

    /// Whether the embedding dimension pairs up as real/imaginary parts.
    pub fn is_complex(self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::RotatE)
    }

    /// Margin ranking loss vs logistic loss.
    fn uses_margin_loss(self) -> bool {
        matches!(self, ModelKind::TransE | ModelKind::RotatE)
    }
}

impl FromStr for ModelKind {
    type Err = LinkPredError;

    fn from_str(s: &str) -> Result<ModelKind, LinkPredError> {
        match s {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            "rotate" => Ok(ModelKind::RotatE),
            other => Err(LinkPredError::InvalidConfig(format!(
                "unknown model kind {other:?} (expected transe, distmult, complex, or rotate)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::TransE,
            dim: 32,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 500,
            negatives_per_positive: 4,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LinkPredError> {
        if self.dim == 0 {
            return Err(LinkPredError::InvalidConfig("dim must be positive".to_string()));
        }
        if self.kind.is_complex() && !self.dim.is_multiple_of(2) {
            return Err(LinkPredError::InvalidConfig(format!(
                "{} needs an even dimension (real/imaginary pairs), got {}",
                self.kind, self.dim
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(LinkPredError::InvalidConfig("learning_rate must be > 0".to_string()));
        }
        if self.epochs == 0 {
            return Err(LinkPredError::InvalidConfig("epochs must be positive".to_string()));
        }
        if self.negatives_per_positive == 0 {
            return Err(LinkPredError::InvalidConfig(
                "negatives_per_positive must be positive".to_string(),
            ));
        }
        if !self.margin.is_finite() {
            return Err(LinkPredError::InvalidConfig("margin must be finite".to_string()));
        }
        Ok(())
    }
}

/// A trained (or freshly initialized) embedding model.
///
/// Entity embeddings always have `dim` values. For the complex-valued
/// kinds the layout is split: the first dim/2 values are real parts and
/// the last dim/2 are imaginary parts. RotatE relations are stored as
/// dim/2 phase angles (unit-modulus rotations); all other relations are
/// plain `dim`-length vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub dim: usize,
    pub entities: Vec<Vec<f64>>,
    pub relations: Vec<Vec<f64>>,
}

impl Model {
    fn init(
        config: &ModelConfig,
        n_entities: usize,
        n_relations: usize,
        rng: &mut ChaCha8Rng,
    ) -> Model {
        let bound = 6.0 / (config.dim as f64).sqrt();
        let vector = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let entities = (0..n_entities).map(|_| vector(rng, config.dim)).collect();
        let relations = (0..n_relations)
            .map(|_| {
                if config.kind == ModelKind::RotatE {
                    (0..config.dim / 2).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect()
                } else {
                    vector(rng, config.dim)
                }
            })
            .collect();
        Model { kind: config.kind, dim: config.dim, entities, relations }
    }

    fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Plausibility score; higher is more plausible.
    pub fn score(&self, h: usize, r: usize, t: usize) -> Result<f64, LinkPredError> {
        for (what, index, len) in [
            ("entity", h, self.entities.len()),
            ("entity", t, self.entities.len()),
            ("relation", r, self.relations.len()),
        ] {
            if index >= len {
                return Err(LinkPredError::IndexOutOfRange { what, index, len });
            }
        }
        Ok(self.score_unchecked(h, r, t))
    }

    fn score_unchecked(&self, h: usize, r: usize, t: usize) -> f64 {
        match self.kind {
            ModelKind::TransE | ModelKind::RotatE => -self.distance(h, r, t),
            ModelKind::DistMult => {
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                // Grouped so head/tail symmetry holds bitwise.
                (0..self.dim).map(|j| er[j] * (eh[j] * et[j])).sum()
            }
            ModelKind::ComplEx => {
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                let d2 = self.dim / 2;
                (0..d2)
                    .map(|j| {
                        let (hre, him) = (eh[j], eh[d2 + j]);
                        let (rre, rim) = (er[j], er[d2 + j]);
                        let (tre, tim) = (et[j], et[d2 + j]);
                        hre * rre * tre + him * rre * tim + hre * rim * tim - him * rim * tre
                    })
                    .sum()
            }
        }
    }

    /// Translation / rotation distance for the margin-loss kinds.
    fn distance(&self, h: usize, r: usize, t: usize) -> f64 {
        let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
        match self.kind {
            ModelKind::TransE => (0..self.dim)
                .map(|j| {
                    let d = eh[j] + er[j] - et[j];
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ModelKind::RotatE => {
                let d2 = self.dim / 2;
                (0..d2)
                    .map(|j| {
                        let (c, s) = (er[j].cos(), er[j].sin());
                        let zre = eh[j] * c - eh[d2 + j] * s - et[j];
                        let zim = eh[j] * s + eh[d2 + j] * c - et[d2 + j];
                        (zre * zre + zim * zim).sqrt()
                    })
                    .sum()
            }
            _ => unreachable!("distance is defined for margin-loss kinds only"),
        }
    }

    /// Applies `param -= step * d(distance)/d(param)` for the margin
    /// kinds; `step > 0` descends the distance, `step < 0` ascends it.
    fn apply_distance_gradient(&mut self, h: usize, r: usize, t: usize, step: f64) {
        match self.kind {
            ModelKind::TransE => {
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                let diff: Vec<f64> = (0..self.dim).map(|j| eh[j] + er[j] - et[j]).collect();
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return;
                }
                let grad: Vec<f64> = diff.iter().map(|d| d / norm).collect();
                for j in 0..self.dim {
                    self.entities[h][j] -= step * grad[j];
                    self.relations[r][j] -= step * grad[j];
                    self.entities[t][j] += step * grad[j];
                }
            }
            ModelKind::RotatE => {
                let d2 = self.dim / 2;
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                // Per complex coordinate: gradient of |rot(h) - t|.
                let mut gh = vec![0.0; self.dim];
                let mut gr = vec![0.0; d2];
                let mut gt = vec![0.0; self.dim];
                for j in 0..d2 {
                    let (c, s) = (er[j].cos(), er[j].sin());
                    let rot_re = eh[j] * c - eh[d2 + j] * s;
                    let rot_im = eh[j] * s + eh[d2 + j] * c;
                    let zre = rot_re - et[j];
                    let zim = rot_im - et[d2 + j];
                    let modulus = (zre * zre + zim * zim).sqrt();
                    if modulus < 1e-12 {
                        continue;
                    }
                    let (ure, uim) = (zre / modulus, zim / modulus);
                    gh[j] = ure * c + uim * s;
                    gh[d2 + j] = -ure * s + uim * c;
                    gr[j] = ure * -rot_im + uim * rot_re;
                    gt[j] = -ure;
                    gt[d2 + j] = -uim;
                }
                for j in 0..self.dim {
                    self.entities[h][j] -= step * gh[j];
                    self.entities[t][j] -= step * gt[j];
                }
                for j in 0..d2 {
                    self.relations[r][j] -= step * gr[j];
                }
            }
            _ => unreachable!("distance gradients exist for margin-loss kinds only"),
        }
    }

    /// Applies `param -= step * d(score)/d(param)` for the logistic
    /// kinds.
    fn apply_score_gradient(&mut self, h: usize, r: usize, t: usize, step: f64) {
        match self.kind {
            ModelKind::DistMult => {
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                let gh: Vec<f64> = (0..self.dim).map(|j| er[j] * et[j]).collect();
                let gr: Vec<f64> = (0..self.dim).map(|j| eh[j] * et[j]).collect();
                let gt: Vec<f64> = (0..self.dim).map(|j| eh[j] * er[j]).collect();
                for j in 0..self.dim {
                    self.entities[h][j] -= step * gh[j];
                    self.relations[r][j] -= step * gr[j];
                    self.entities[t][j] -= step * gt[j];
                }
            }
            ModelKind::ComplEx => {
                let d2 = self.dim / 2;
                let (eh, er, et) = (&self.entities[h], &self.relations[r], &self.entities[t]);
                let mut gh = vec![0.0; self.dim];
                let mut gr = vec![0.0; self.dim];
                let mut gt = vec![0.0; self.dim];
                for j in 0..d2 {
                    let (hre, him) = (eh[j], eh[d2 + j]);
                    let (rre, rim) = (er[j], er[d2 + j]);
                    let (tre, tim) = (et[j], et[d2 + j]);
                    gh[j] = rre * tre + rim * tim;
                    gh[d2 + j] = rre * tim - rim * tre;
                    gr[j] = hre * tre + him * tim;
                    gr[d2 + j] = hre * tim - him * tre;
                    gt[j] = hre * rre - him * rim;
                    gt[d2 + j] = him * rre + hre * rim;
                }
                for j in 0..self.dim {
                    self.entities[h][j] -= step * gh[j];
                    self.relations[r][j] -= step * gr[j];
                    self.entities[t][j] -= step * gt[j];
                }
            }
            _ => unreachable!("score gradients are used by the logistic kinds only"),
        }
    }
}

// ---------------------------------------------------------------------------
// Training.

/// A trained model with its per-epoch training loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub epoch_losses: Vec<f64>,
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniformly corrupts the head or the tail, resampling (boundedly) while
/// the corrupted triple is a known training triple.
fn corrupt(
    h: usize,
    r: usize,
    t: usize,
    n_entities: usize,
    train_set: &BTreeSet<(usize, usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    for _ in 0..100 {
        let replacement = rng.gen_range(0..n_entities);
        let corrupted =
            if rng.gen_range(0..2) == 0 { (replacement, r, t) } else { (h, r, replacement) };
        if !train_set.contains(&corrupted) {
            return (corrupted.0, corrupted.2);
        }
    }
    // Degenerate graphs where almost everything is true: accept any
    // non-identical corruption.
    ((h + 1) % n_entities, t)
}

/// Trains an embedding model by per-triple SGD. Deterministic given the
/// seed; reports divergence (non-finite loss or embeddings) with the
/// zero-based epoch at which it was detected.
pub fn train(data: &TripleDataset, config: &ModelConfig) -> Result<TrainOutcome, LinkPredError> {
    config.validate()?;
    data.validate()?;
    if data.train.is_empty() {
        return Err(LinkPredError::EmptyTrainSplit);
    }
    let n_entities = data.entities.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(config, n_entities, data.relations.len(), &mut rng);
    let train_set: BTreeSet<(usize, usize, usize)> = data.train.iter().copied().collect();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let lr = config.learning_rate;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let (h, r, t) = data.train[idx];
            for _ in 0..config.negatives_per_positive {
                let (nh, nt) = corrupt(h, r, t, n_entities, &train_set, &mut rng);
                if config.kind.uses_margin_loss() {
                    let d_pos = model.distance(h, r, t);
                    let d_neg = model.distance(nh, r, nt);
                    let hinge = config.margin + d_pos - d_neg;
                    if hinge > 0.0 {
                        epoch_loss += hinge;
                        model.apply_distance_gradient(h, r, t, lr);
                        model.apply_distance_gradient(nh, r, nt, -lr);
                    } else if hinge.is_nan() {
                        epoch_loss += hinge;
                    }
                } else {
                    let s_pos = model.score_unchecked(h, r, t);
                    let s_neg = model.score_unchecked(nh, r, nt);
                    epoch_loss += softplus(-s_pos) + softplus(s_neg);
                    model.apply_score_gradient(h, r, t, lr * -sigmoid(-s_pos));
                    model.apply_score_gradient(nh, r, nt, lr * sigmoid(s_neg));
                }
            }
        }
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(LinkPredError::Divergence { epoch });
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

// ---------------------------------------------------------------------------
// Ranking.

/// A ranking query: predict the missing endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    /// (h, r, ?)
    Tail { head: usize, relation: usize },
    /// (?, r, t)
    Head { relation: usize, tail: usize },
}

/// Raw keeps every candidate; filtered removes other known-true answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Raw,
    Filtered,
}

/// Mean-rank tie rule over explicit scores: rank = 1 + |strictly better|
/// plus half the tie count, where ties are competitors with exactly the
/// true answer's score.
pub fn rank_from_scores(truth_score: f64, competitor_scores: &[f64]) -> f64 {
    let better = competitor_scores.iter().filter(|&&s| s > truth_score).count();
    let ties = competitor_scores.iter().filter(|&&s| s == truth_score).count();
    1.0 + better as f64 + ties as f64 / 2.0
}

/// Ranks the true answer among all entities. In filtered mode,
/// candidates completing another known-true triple are removed (the true
/// answer itself always stays).
pub fn rank_query(
    model: &Model,
    query: Query,
    truth: usize,
    known_true: &BTreeSet<(usize, usize, usize)>,
    mode: RankMode,
) -> Result<f64, LinkPredError> {
    let n = model.entities.len();
    if truth >= n {
        return Err(LinkPredError::IndexOutOfRange { what: "entity", index: truth, len: n });
    }
    let complete = |candidate: usize| -> (usize, usize, usize) {
        match query {
            Query::Tail { head, relation } => (head, relation, candidate),
            Query::Head { relation, tail } => (candidate, relation, tail),
        }
    };
    let (h0, r0, t0) = complete(truth);
    let truth_score = model.score(h0, r0, t0)?;
    let mut competitors = Vec::with_capacity(n - 1);
    for candidate in 0..n {
        if candidate == truth {
            continue;
        }
        let (h, r, t) = complete(candidate);
        if mode == RankMode::Filtered && known_true.contains(&(h, r, t)) {
            continue;
        }
        competitors.push(model.score_unchecked(h, r, t));
    }
    Ok(rank_from_scores(truth_score, &competitors))
}

/// Per-query ranks: two per test triple (tail prediction, then head
/// prediction), in test order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub ranks: Vec<f64>,
}

/// Ranks every test triple's head and tail queries. The filtered known-
/// true set is the union of all three splits.
pub fn evaluate(
    model: &Model,
    data: &TripleDataset,
    mode: RankMode,
) -> Result<RankingResult, LinkPredError> {
    let known_true = data.all_triples();
    let mut ranks = Vec::with_capacity(2 * data.test.len());
    for &(h, r, t) in &data.test {
        ranks.push(rank_query(model, Query::Tail { head: h, relation: r }, t, &known_true, mode)?);
        ranks.push(rank_query(model, Query::Head { relation: r, tail: t }, h, &known_true, mode)?);
    }
    Ok(RankingResult { ranks })
}

/// Expected MRR of a uniformly random ranking over each query's
/// candidate count — the chance baseline for the same dataset and mode.
/// For C candidates, E[1/rank] = H(C)/C (mean of the reciprocals).
pub fn random_ranking_baseline_mrr(
    data: &TripleDataset,
    mode: RankMode,
) -> Result<f64, LinkPredError> {
    if data.test.is_empty() {
        return Err(LinkPredError::EmptyRanks);
    }
    let known_true = data.all_triples();
    let n = data.entities.len();
    let harmonic = |c: usize| -> f64 { (1..=c).map(|k| 1.0 / k as f64).sum() };
    let candidate_count = |query: Query, truth: usize| -> usize {
        let complete = |candidate: usize| match query {
            Query::Tail { head, relation } => (head, relation, candidate),
            Query::Head { relation, tail } => (candidate, relation, tail),
        };
        (0..n)
            .filter(|&c| c == truth || mode == RankMode::Raw || !known_true.contains(&complete(c)))
            .count()
    };
    let mut total = 0.0;
    let mut queries = 0;
    for &(h, r, t) in &data.test {
        for (query, truth) in
            [(Query::Tail { head: h, relation: r }, t), (Query::Head { relation: r, tail: t }, h)]
        {
            let c = candidate_count(query, truth);
            total += harmonic(c) / c as f64;
            queries += 1;
        }
    }
    Ok(total / queries as f64)
}

// ---------------------------------------------------------------------------
// Metrics.

/// Mean rank.
pub fn mr(ranks: &[f64]) -> Result<f64, LinkPredError> {
    if ranks.is_empty() {
        return Err(LinkPredError::EmptyRanks);
    }
    Ok(ranks.iter().sum::<f64>() / ranks.len() as f64)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[f64]) -> Result<f64, LinkPredError> {
    if ranks.is_empty() {
        return Err(LinkPredError::EmptyRanks);
    }
    Ok(ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of queries ranked at K or better.
pub fn hits_at_k(ranks: &[f64], k: usize) -> Result<f64, LinkPredError> {
    if ranks.is_empty() {
        return Err(LinkPredError::EmptyRanks);
    }
    if k == 0 {
        return Err(LinkPredError::BadK);
    }
    Ok(ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64)
}

/// Literal precision at K for single-answer queries: hits@K divided by
/// K (at most one of the top K candidates can be relevant).
pub fn p_at_k(ranks: &[f64], k: usize) -> Result<f64, LinkPredError> {
    Ok(hits_at_k(ranks, k)? / k as f64)
}

/// One report row: MR, MRR, and hits@/P@ at 1, 3, 10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPredMetrics {
    pub mr: f64,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub p_at_1: f64,
    pub p_at_3: f64,
    pub p_at_10: f64,
    pub queries: usize,
}

/// Computes the standard report row from a rank list.
pub fn metrics(ranks: &[f64]) -> Result<LinkPredMetrics, LinkPredError> {
    Ok(LinkPredMetrics {
        mr: mr(ranks)?,
        mrr: mrr(ranks)?,
        hits_at_1: hits_at_k(ranks, 1)?,
        hits_at_3: hits_at_k(ranks, 3)?,
        hits_at_10: hits_at_k(ranks, 10)?,
        p_at_1: p_at_k(ranks, 1)?,
        p_at_3: p_at_k(ranks, 3)?,
        p_at_10: p_at_k(ranks, 10)?,
        queries: ranks.len(),
    })
}

/// Renders the per-model metrics table (TSV, three decimals).
pub fn render_metrics_table(rows: &[(String, LinkPredMetrics)]) -> String {
    let mut out =
        String::from("model\tqueries\tMR\tMRR\thits@1\thits@3\thits@10\tP@1\tP@3\tP@10\n");
    for (name, m) in rows {
        out.push_str(&format!(
            "{name}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\n",
            m.queries,
            m.mr,
            m.mrr,
            m.hits_at_1,
            m.hits_at_3,
            m.hits_at_10,
            m.p_at_1,
            m.p_at_3,
            m.p_at_10
        ));
    }
    out
}
