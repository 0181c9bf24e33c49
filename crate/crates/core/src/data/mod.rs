//! Datasets, preprocessing, one-vs-all tasks and node partitioning.

mod covertype;
mod idx;
mod synthetic;

use std::sync::Arc;

use log::warn;

pub use covertype::{load_covertype_csv, COVERTYPE_ROWS, COVERTYPE_TRAIN_ROWS};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use synthetic::{gaussian_blobs, SyntheticConfig};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm, pca_top_k, DenseVector, Matrix, Pca, RngStream};
use crate::loss::Sample;

/// Feature rows with an integer class per row.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl RawDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        check_dim(features.rows(), labels.len())?;
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no rows"));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= class_count) {
            return Err(Error::invalid(format!(
                "row {i}: label {c} outside 0..{class_count}"
            )));
        }
        Ok(RawDataset {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, idx: &[usize]) -> RawDataset {
        RawDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Rows `0..count` as one dataset and the remainder as another.
    pub fn split_at(&self, count: usize) -> Result<(RawDataset, RawDataset)> {
        if count == 0 || count >= self.len() {
            return Err(Error::invalid(format!(
                "split point {count} must be inside 1..{}",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..count).collect();
        let tail: Vec<usize> = (count..self.len()).collect();
        Ok((self.select(&head), self.select(&tail)))
    }

    /// `copies` back-to-back copies of every row; row `i` of copy `k` is
    /// row `k * len + i`.
    pub fn tile(&self, copies: usize) -> RawDataset {
        let idx: Vec<usize> = (0..copies).flat_map(|_| 0..self.len()).collect();
        self.select(&idx)
    }

    /// Seeded shuffle, then the first `train_count` rows become the training
    /// split.
    pub fn shuffle_split(
        &self,
        train_count: usize,
        rng: &mut RngStream,
    ) -> Result<(RawDataset, RawDataset)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        self.select(&order).split_at(train_count)
    }
}

/// Optional PCA followed by per-row rescaling to unit L2 norm.
///
/// Fit on the training split and apply the same projection to the test
/// split.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub pca: Option<Pca>,
}

impl Preprocessor {
    pub fn fit(train: &RawDataset, pca_dims: Option<usize>, rng: &mut RngStream) -> Result<Self> {
        let pca = match pca_dims {
            Some(k) => {
                if k > train.dim() {
                    return Err(Error::invalid(format!(
                        "pca_dims {k} exceeds feature dimension {}",
                        train.dim()
                    )));
                }
                Some(pca_top_k(&train.features, k, rng)?)
            }
            None => None,
        };
        Ok(Preprocessor { pca })
    }

    /// Returns the transformed dataset and the number of all-zero rows that
    /// could not be normalized.
    pub fn apply(&self, raw: &RawDataset) -> Result<(RawDataset, usize)> {
        let mut features = match &self.pca {
            Some(p) => p.transform(&raw.features)?,
            None => raw.features.clone(),
        };
        let zero_rows = normalize_rows(&mut features);
        if zero_rows > 0 {
            warn!("{zero_rows} zero feature rows left unnormalized");
        }
        Ok((
            RawDataset {
                features,
                labels: raw.labels.clone(),
                class_count: raw.class_count,
            },
            zero_rows,
        ))
    }
}

/// Fits and applies a [`Preprocessor`] on the same data.
pub fn preprocess(
    raw: &RawDataset,
    pca_dims: Option<usize>,
    rng: &mut RngStream,
) -> Result<(RawDataset, usize)> {
    Preprocessor::fit(raw, pca_dims, rng)?.apply(raw)
}

/// Rescales each nonzero row to unit norm; returns the count of zero rows.
pub fn normalize_rows(m: &mut Matrix) -> usize {
    let mut zero = 0;
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let n = norm(row);
        if n == 0.0 {
            zero += 1;
        } else if n != 1.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    zero
}

/// One-vs-all binary view of a dataset: shared features, `+1/-1` labels.
#[derive(Debug, Clone)]
pub struct BinaryTask {
    features: Arc<Matrix>,
    labels: Vec<f64>,
    positive_class: usize,
}

impl BinaryTask {
    pub fn new(features: Arc<Matrix>, labels: Vec<f64>, positive_class: usize) -> Result<Self> {
        check_dim(features.rows(), labels.len())?;
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("binary labels must be +1 or -1"));
        }
        Ok(BinaryTask {
            features,
            labels,
            positive_class,
        })
    }

    /// Convenience constructor from owned rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        BinaryTask::new(Arc::new(Matrix::from_rows(rows)?), labels, 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn positive_class(&self) -> usize {
        self.positive_class
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    #[inline]
    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            x: self.features.row(i),
            y: self.labels[i],
        }
    }
}

/// One binary task per class; task `c` labels a row `+1` iff its class is `c`.
pub fn make_tasks(raw: &RawDataset) -> Result<Vec<BinaryTask>> {
    if raw.class_count < 2 {
        return Err(Error::invalid("one-vs-all needs at least two classes"));
    }
    let features = Arc::new(raw.features.clone());
    (0..raw.class_count)
        .map(|c| {
            let labels = raw
                .labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect();
            BinaryTask::new(Arc::clone(&features), labels, c)
        })
        .collect()
}

/// Disjoint per-node index lists drawn without replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePartition {
    pub nodes: Vec<Vec<usize>>,
    pub per_node: usize,
}

impl NodePartition {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    /// Every index owned by some node, in node order.
    pub fn union(&self) -> Vec<usize> {
        self.nodes.iter().flatten().copied().collect()
    }
}

pub fn partition(
    n: usize,
    nodes: usize,
    per_node: usize,
    rng: &mut RngStream,
) -> Result<NodePartition> {
    if nodes == 0 || per_node == 0 {
        return Err(Error::invalid("partition needs at least one node and one sample per node"));
    }
    let needed = nodes
        .checked_mul(per_node)
        .ok_or_else(|| Error::invalid("partition size overflows"))?;
    if needed > n {
        return Err(Error::invalid(format!(
            "{nodes} nodes x {per_node} samples = {needed} exceeds the {n} available"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let nodes = order[..needed]
        .chunks(per_node)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(NodePartition { nodes, per_node })
}

/// Partition over `nodes` copies of a pool of `pool` rows (see
/// [`RawDataset::tile`]): node `k` draws `per_node` distinct rows of copy
/// `k`, so nodes may hold the same underlying sample but never share a
/// record id.
pub fn partition_replicated(
    pool: usize,
    nodes: usize,
    per_node: usize,
    rng: &mut RngStream,
) -> Result<NodePartition> {
    if nodes == 0 || per_node == 0 || per_node > pool {
        return Err(Error::invalid(format!(
            "replicated partition needs 1 <= per_node ({per_node}) <= pool ({pool}) and nodes >= 1"
        )));
    }
    let nodes = (0..nodes)
        .map(|k| {
            let mut order: Vec<usize> = (0..pool).collect();
            rng.shuffle(&mut order);
            order[..per_node].iter().map(|&i| k * pool + i).collect()
        })
        .collect();
    Ok(NodePartition { nodes, per_node })
}

/// Argmax of `<w_c, x>` over classes; ties go to the lowest class index.
pub fn predict_multiclass(models: &[DenseVector], x: &[f64]) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, w) in models.iter().enumerate() {
        check_dim(w.len(), x.len())?;
        let score: f64 = w.as_slice().iter().zip(x).map(|(a, b)| a * b).sum();
        if score > best.1 {
            best = (c, score);
        }
    }
    if models.is_empty() {
        return Err(Error::invalid("no models to predict with"));
    }
    Ok(best.0)
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(models: &[DenseVector], data: &RawDataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &y) in data.features.iter_rows().zip(&data.labels) {
        if predict_multiclass(models, x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
