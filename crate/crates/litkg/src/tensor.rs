//! The entities × actions × attributes data tensor, its CP decomposition
//! by alternating least squares, and min–max-calibrated relation scores.
//!
//! Triples are naturally four-mode (head, edge, tail, attributes) but the
//! tensor is three-mode, so heads and tails share one entity index space:
//! the head index goes on axis 1, and when a triple carries no attributes
//! its tail is folded into the attribute axis as a `tail:<key>` slot.
//! Attribute slot 0 is always the reserved `none` slot. Entry values are
//! sums of candidate confidences.
//!
//! CP-ALS solves each half-step's normal equations exactly (Gaussian
//! elimination with partial pivoting); a small ridge (1e-8) is added only
//! when a near-singular system is detected, which keeps the fit error
//! nonincreasing on well-posed problems while surviving rank-deficient
//! slices. Initialization is uniform [0,1) from the given seed, so runs
//! are deterministic. Ranks larger than an axis dimension are permitted
//! (callers may warn); they simply over-parameterize the fit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{CandidateTriple, EdgeType};
use crate::util::sci12;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rank must be at least 1")]
    BadRank,
    #[error("tensor has no nonzero entries")]
    EmptyTensor,
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange { what: &'static str, index: usize, size: usize },
    #[error("normal equations singular even after ridge")]
    SingularSystem,
    #[error("calibration set is empty")]
    EmptyCalibration,
}

/// Reserved attribute slot for triples that carry neither attributes nor a
/// folded tail (index 0 by construction).
pub const NONE_ATTRIBUTE: &str = "none";

/// Sparse three-mode tensor with bijective key→index maps per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTensor {
    pub dims: (usize, usize, usize),
    pub entries: BTreeMap<(usize, usize, usize), f64>,
    pub entity_index: BTreeMap<String, usize>,
    pub action_index: BTreeMap<String, usize>,
    pub attribute_index: BTreeMap<String, usize>,
}

impl DataTensor {
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries.get(&(i, j, k)).copied().unwrap_or(0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dense tensor (row-major nested vecs) for small test instances; the
    /// index maps get synthetic keys.
    pub fn from_dense(data: &[Vec<Vec<f64>>]) -> DataTensor {
        let i_dim = data.len();
        let j_dim = data.first().map(|m| m.len()).unwrap_or(0);
        let k_dim = data.first().and_then(|m| m.first()).map(|r| r.len()).unwrap_or(0);
        let mut entries = BTreeMap::new();
        for (i, mat) in data.iter().enumerate() {
            for (j, row) in mat.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        entries.insert((i, j, k), v);
                    }
                }
            }
        }
        DataTensor {
            dims: (i_dim, j_dim, k_dim),
            entries,
            entity_index: (0..i_dim).map(|i| (format!("e{i}"), i)).collect(),
            action_index: (0..j_dim).map(|j| (format!("a{j}"), j)).collect(),
            attribute_index: (0..k_dim).map(|k| (format!("t{k}"), k)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        for (&(i, j, k), &v) in &self.entries {
            if i >= self.dims.0 {
                return Err(TensorError::IndexOutOfRange {
                    what: "entity",
                    index: i,
                    size: self.dims.0,
                });
            }
            if j >= self.dims.1 {
                return Err(TensorError::IndexOutOfRange {
                    what: "action",
                    index: j,
                    size: self.dims.1,
                });
            }
            if k >= self.dims.2 {
                return Err(TensorError::IndexOutOfRange {
                    what: "attribute",
                    index: k,
                    size: self.dims.2,
                });
            }
            debug_assert!(v >= 0.0);
        }
        Ok(())
    }
}

/// Builds the data tensor from candidate triples. Axis 1 indexes head
/// entities within the shared head∪tail entity space, axis 2 is the fixed
/// 24-slot edge-type axis, axis 3 holds `key=value` attribute slots plus
/// folded `tail:<key>` slots, with `none` reserved at index 0.
pub fn build_tensor(triples: &[CandidateTriple]) -> DataTensor {
    use std::collections::BTreeSet;
    let mut entity_keys: BTreeSet<String> = BTreeSet::new();
    let mut attribute_keys: BTreeSet<String> = BTreeSet::new();
    for t in triples {
        entity_keys.insert(t.head.canonical_key());
        entity_keys.insert(t.tail.canonical_key());
        if t.attributes.is_empty() {
            attribute_keys.insert(format!("tail:{}", t.tail.canonical_key()));
        } else {
            for (k, v) in &t.attributes {
                attribute_keys.insert(format!("{k}={v}"));
            }
        }
    }
    let entity_index: BTreeMap<String, usize> =
        entity_keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
    let action_index: BTreeMap<String, usize> =
        EdgeType::ALL.iter().map(|e| (e.name().to_string(), e.ordinal())).collect();
    let mut attribute_index: BTreeMap<String, usize> = BTreeMap::new();
    attribute_index.insert(NONE_ATTRIBUTE.to_string(), 0);
    for (offset, key) in attribute_keys.into_iter().enumerate() {
        attribute_index.insert(key, offset + 1);
    }

    let mut entries: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for t in triples {
        let i = entity_index[&t.head.canonical_key()];
        let j = t.edge.ordinal();
        let slots: Vec<usize> = if t.attributes.is_empty() {
            vec![attribute_index[&format!("tail:{}", t.tail.canonical_key())]]
        } else {
            t.attributes.iter().map(|(k, v)| attribute_index[&format!("{k}={v}")]).collect()
        };
        for k in slots {
            *entries.entry((i, j, k)).or_insert(0.0) += t.confidence;
        }
    }

    DataTensor {
        dims: (entity_index.len(), EdgeType::ALL.len(), attribute_index.len()),
        entries,
        entity_index,
        action_index,
        attribute_index,
    }
}

/// CP factor matrices: `a` is I×R, `b` is J×R, `c` is K×R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPFactors {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub rank: usize,
}

/// Controls for [`cp_als`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig { max_iters: 200, tol: 1e-6, seed: 0 }
    }
}

/// CP-ALS result: the factors plus the relative fit error after each
/// iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFit {
    pub factors: CPFactors,
    pub relative_errors: Vec<f64>,
}

const PIVOT_FLOOR: f64 = 1e-12;
const RIDGE: f64 = 1e-8;

/// Inverts a small symmetric matrix by Gauss–Jordan with partial
/// pivoting; `None` signals near-singularity.
fn invert(matrix: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = matrix.len();
    let mut aug: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, aug[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pivot_abs < PIVOT_FLOOR {
            return None;
        }
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        for v in &mut aug[col] {
            *v /= pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[row][col];
            if factor == 0.0 {
                continue;
            }
            let (pivot_row_copy, target) = if row < col {
                let (head, tail) = aug.split_at_mut(col);
                (&tail[0], &mut head[row])
            } else {
                let (head, tail) = aug.split_at_mut(row);
                (&head[col], &mut tail[0])
            };
            for j in 0..2 * n {
                target[j] -= factor * pivot_row_copy[j];
            }
        }
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Inverts the Gram product, falling back to a ridge on near-singularity.
fn invert_gram(gram: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TensorError> {
    if let Some(inv) = invert(gram) {
        return Ok(inv);
    }
    let mut ridged = gram.to_vec();
    for (r, row) in ridged.iter_mut().enumerate() {
        row[r] += RIDGE;
    }
    invert(&ridged).ok_or(TensorError::SingularSystem)
}

fn gram(m: &[Vec<f64>], rank: usize) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; rank]; rank];
    for row in m {
        for r in 0..rank {
            for s in r..rank {
                g[r][s] += row[r] * row[s];
            }
        }
    }
    for r in 0..rank {
        for s in 0..r {
            g[r][s] = g[s][r];
        }
    }
    g
}

fn hadamard(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter().zip(y).map(|(rx, ry)| rx.iter().zip(ry).map(|(a, b)| a * b).collect()).collect()
}

/// Squared Frobenius norm of the reconstruction, via the factor Grams.
fn reconstruction_norm_sq(f: &CPFactors) -> f64 {
    let ga = gram(&f.a, f.rank);
    let gb = gram(&f.b, f.rank);
    let gc = gram(&f.c, f.rank);
    let mut total = 0.0;
    for r in 0..f.rank {
        for s in 0..f.rank {
            total += ga[r][s] * gb[r][s] * gc[r][s];
        }
    }
    total
}

fn inner_product(t: &DataTensor, f: &CPFactors) -> f64 {
    let mut total = 0.0;
    for (&(i, j, k), &v) in &t.entries {
        let mut cell = 0.0;
        for r in 0..f.rank {
            cell += f.a[i][r] * f.b[j][r] * f.c[k][r];
        }
        total += v * cell;
    }
    total
}

fn relative_error(t: &DataTensor, f: &CPFactors, norm_t: f64) -> f64 {
    let fit_sq = (norm_t * norm_t - 2.0 * inner_product(t, f) + reconstruction_norm_sq(f)).max(0.0);
    fit_sq.sqrt() / norm_t
}

/// One ALS half-step: rebuilds `target` (I×R) from the sparse tensor and
/// the other two factors, where `index_of` picks this mode's index from an
/// entry coordinate and `others` picks the two opposite-mode rows.
fn half_step(
    t: &DataTensor,
    dim: usize,
    rank: usize,
    mode: usize,
    f1: &[Vec<f64>],
    f2: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, TensorError> {
    // MTTKRP over the nonzeros.
    let mut m = vec![vec![0.0; rank]; dim];
    for (&(i, j, k), &v) in &t.entries {
        let (row, o1, o2) = match mode {
            0 => (i, j, k),
            1 => (j, i, k),
            _ => (k, i, j),
        };
        for r in 0..rank {
            m[row][r] += v * f1[o1][r] * f2[o2][r];
        }
    }
    let g = hadamard(&gram(f1, rank), &gram(f2, rank));
    let inv = invert_gram(&g)?;
    // Row-wise solve: new_row = m_row · Ginv (G symmetric).
    let mut out = vec![vec![0.0; rank]; dim];
    for (row, m_row) in m.iter().enumerate() {
        for r in 0..rank {
            let mut acc = 0.0;
            for s in 0..rank {
                acc += m_row[s] * inv[s][r];
            }
            out[row][r] = acc;
        }
    }
    Ok(out)
}

/// Fits a rank-R CP decomposition by alternating least squares. The
/// returned trace holds the relative fit error after every iteration;
/// it is nonincreasing within 1e-10 on well-posed problems.
pub fn cp_als(t: &DataTensor, rank: usize, config: &CpConfig) -> Result<CpFit, TensorError> {
    if rank == 0 {
        return Err(TensorError::BadRank);
    }
    if t.entries.is_empty() || t.entries.values().all(|&v| v == 0.0) {
        return Err(TensorError::EmptyTensor);
    }
    t.validate()?;
    let (i_dim, j_dim, k_dim) = t.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |rows: usize| -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..rank).map(|_| rng.gen::<f64>()).collect()).collect()
    };
    let mut factors = CPFactors { a: init(i_dim), b: init(j_dim), c: init(k_dim), rank };

    let norm_t = t.frobenius_norm();
    let mut errors = Vec::new();
    let mut last = f64::INFINITY;
    for _ in 0..config.max_iters {
        factors.a = half_step(t, i_dim, rank, 0, &factors.b, &factors.c)?;
        factors.b = half_step(t, j_dim, rank, 1, &factors.a, &factors.c)?;
        factors.c = half_step(t, k_dim, rank, 2, &factors.a, &factors.b)?;
        let err = relative_error(t, &factors, norm_t);
        errors.push(err);
        if (last - err).abs() < config.tol {
            break;
        }
        last = err;
    }
    Ok(CpFit { factors, relative_errors: errors })
}

/// Pointwise reconstruction `sum_r a[i][r] * b[j][r] * c[k][r]`.
pub fn reconstruct(f: &CPFactors, i: usize, j: usize, k: usize) -> Result<f64, TensorError> {
    let a = f.a.get(i).ok_or(TensorError::IndexOutOfRange {
        what: "entity",
        index: i,
        size: f.a.len(),
    })?;
    let b = f.b.get(j).ok_or(TensorError::IndexOutOfRange {
        what: "action",
        index: j,
        size: f.b.len(),
    })?;
    let c = f.c.get(k).ok_or(TensorError::IndexOutOfRange {
        what: "attribute",
        index: k,
        size: f.c.len(),
    })?;
    Ok((0..f.rank).map(|r| a[r] * b[r] * c[r]).sum())
}

/// Min–max-normalized reconstruction value over a calibration set of
/// cells, clipped to [0,1]. A constant calibration set maps everything to
/// 0.5.
pub fn relation_score(
    f: &CPFactors,
    i: usize,
    j: usize,
    k: usize,
    calibration: &[(usize, usize, usize)],
) -> Result<f64, TensorError> {
    if calibration.is_empty() {
        return Err(TensorError::EmptyCalibration);
    }
    let raw = reconstruct(f, i, j, k)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &(ci, cj, ck) in calibration {
        let v = reconstruct(f, ci, cj, ck)?;
        min = min.min(v);
        max = max.max(v);
    }
    if max - min <= 0.0 {
        return Ok(0.5);
    }
    Ok(((raw - min) / (max - min)).clamp(0.0, 1.0))
}

fn write_file(path: &Path, content: String) -> Result<(), TensorError> {
    fs::write(path, content)
        .map_err(|source| TensorError::Io { path: path.display().to_string(), source })
}

fn index_map_tsv(map: &BTreeMap<String, usize>) -> String {
    let mut rows: Vec<(&usize, &String)> = map.iter().map(|(k, v)| (v, k)).collect();
    rows.sort();
    let mut out = String::from("key\tindex\n");
    for (v, k) in rows {
        out.push_str(&format!("{k}\t{v}\n"));
    }
    out
}

/// Writes the sparse tensor (`tensor.tsv`) and its three index maps into
/// `dir`.
pub fn save_tensor(t: &DataTensor, dir: impl AsRef<Path>) -> Result<(), TensorError> {
    let dir = dir.as_ref();
    let mut sparse = String::from("i\tj\tk\tvalue\n");
    for (&(i, j, k), &v) in &t.entries {
        sparse.push_str(&format!("{i}\t{j}\t{k}\t{}\n", sci12(v)));
    }
    write_file(&dir.join("tensor.tsv"), sparse)?;
    write_file(&dir.join("entities.tsv"), index_map_tsv(&t.entity_index))?;
    write_file(&dir.join("actions.tsv"), index_map_tsv(&t.action_index))?;
    write_file(&dir.join("attributes.tsv"), index_map_tsv(&t.attribute_index))
}

fn factor_tsv(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|&v| sci12(v)).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// Writes one TSV per factor matrix into `dir`.
pub fn save_factors(f: &CPFactors, dir: impl AsRef<Path>) -> Result<(), TensorError> {
    let dir = dir.as_ref();
    write_file(&dir.join("factor_entities.tsv"), factor_tsv(&f.a))?;
    write_file(&dir.join("factor_actions.tsv"), factor_tsv(&f.b))?;
    write_file(&dir.join("factor_attributes.tsv"), factor_tsv(&f.c))
}
