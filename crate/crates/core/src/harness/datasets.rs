//! Dataset preparation for experiments and the `datasets fetch` listing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::{DatasetKind, ExperimentConfig};
use crate::data::{
    gaussian_blobs, load_covertype_csv, load_idx, Preprocessor, RawDataset, SyntheticConfig,
    COVERTYPE_TRAIN_ROWS,
};
use crate::error::{Error, Result};
use crate::linalg::RngStream;

/// Preprocessed train/test splits, ready for one-vs-all training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: RawDataset,
    pub test: RawDataset,
    /// Rows that were all zero after projection and stayed unnormalized.
    pub zero_rows: usize,
    /// Fraction of training variance kept by PCA, if applied.
    pub explained_variance: Option<f64>,
}

/// A downloadable file with its expected digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetFile {
    pub dataset: &'static str,
    /// Name expected under `<data_dir>/<dataset>/`.
    pub file: &'static str,
    pub url: &'static str,
    /// SHA-256 of the uncompressed file; `None` if not pinned.
    pub sha256: Option<&'static str>,
}

pub const DATASET_FILES: &[DatasetFile] = &[
    DatasetFile {
        dataset: "mnist",
        file: "train-images-idx3-ubyte",
        url: "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
        sha256: Some("ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
    },
    DatasetFile {
        dataset: "mnist",
        file: "train-labels-idx1-ubyte",
        url: "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz",
        sha256: Some("65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
    },
    DatasetFile {
        dataset: "mnist",
        file: "t10k-images-idx3-ubyte",
        url: "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-images-idx3-ubyte.gz",
        sha256: Some("0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
    },
    DatasetFile {
        dataset: "mnist",
        file: "t10k-labels-idx1-ubyte",
        url: "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-labels-idx1-ubyte.gz",
        sha256: Some("ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
    },
    DatasetFile {
        dataset: "covertype",
        file: "covtype.data",
        url: "https://archive.ics.uci.edu/ml/machine-learning-databases/covtype/covtype.data.gz",
        sha256: None,
    },
];

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// Status of one expected file on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileStatus {
    Missing,
    Verified,
    /// Present but the digest differs; holds the actual digest.
    Mismatch(String),
    /// Present, no pinned digest; holds the actual digest.
    Unpinned(String),
}

pub fn check_file(data_dir: &Path, f: &DatasetFile) -> Result<FileStatus> {
    let path = data_dir.join(f.dataset).join(f.file);
    if !path.is_file() {
        return Ok(FileStatus::Missing);
    }
    let actual = sha256_file(&path)?;
    Ok(match f.sha256 {
        Some(expected) if expected == actual => FileStatus::Verified,
        Some(_) => FileStatus::Mismatch(actual),
        None => FileStatus::Unpinned(actual),
    })
}

/// Human-readable download instructions plus local verification results.
/// Never touches the network.
pub fn fetch_report(data_dir: &Path) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "data directory: {}", data_dir.display());
    for f in DATASET_FILES {
        let status = match check_file(data_dir, f)? {
            FileStatus::Missing => "missing".to_string(),
            FileStatus::Verified => "ok".to_string(),
            FileStatus::Mismatch(a) => format!("DIGEST MISMATCH (got {a})"),
            FileStatus::Unpinned(a) => format!("present, sha256 {a}"),
        };
        let _ = writeln!(s, "{}/{}  [{status}]", f.dataset, f.file);
        let _ = writeln!(s, "  url:    {}", f.url);
        if let Some(d) = f.sha256 {
            let _ = writeln!(s, "  sha256: {d} (uncompressed)");
        }
    }
    let _ = writeln!(
        s,
        "download each file, gunzip it, and place it at <data_dir>/<dataset>/<file>"
    );
    Ok(s)
}

fn covertype_path(dir: &Path) -> Result<PathBuf> {
    for name in ["covtype.data", "covtype.csv"] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::DatasetMissing {
        path: dir.join("covtype.data"),
        hint: "download covtype.data.gz from the UCI repository and gunzip it there \
               (`dpsgd datasets fetch` lists the URL)"
            .into(),
    })
}

/// Loads the raw train/test splits named by the config, before preprocessing.
pub fn load_raw(cfg: &ExperimentConfig) -> Result<(RawDataset, RawDataset)> {
    match cfg.dataset {
        DatasetKind::Mnist => {
            let dir = cfg.data_dir.join("mnist");
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )?;
            Ok((train, test))
        }
        DatasetKind::Covertype => {
            let all = load_covertype_csv(&covertype_path(&cfg.data_dir.join("covertype"))?)?;
            let mut rng = RngStream::derive(cfg.data_seed, "split", 0);
            all.shuffle_split(COVERTYPE_TRAIN_ROWS.min(all.len() - 1), &mut rng)
        }
        DatasetKind::Synthetic => synthetic_split(&cfg.synthetic, cfg.synthetic_test_samples, cfg.data_seed),
    }
}

/// Blobs with `cfg.samples` training rows followed by `test_samples` test
/// rows drawn from the same centres.
pub fn synthetic_split(
    cfg: &SyntheticConfig,
    test_samples: usize,
    seed: u64,
) -> Result<(RawDataset, RawDataset)> {
    let all_cfg = SyntheticConfig {
        samples: cfg.samples + test_samples,
        ..cfg.clone()
    };
    let all = gaussian_blobs(&all_cfg, &mut RngStream::derive(seed, "synthetic", 0))?;
    all.split_at(cfg.samples)
}

/// Loads, projects (optional PCA fitted on the training split) and
/// normalizes rows to unit norm.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test) = load_raw(cfg)?;
    prepare_splits(&train, &test, cfg.pca_dims, cfg.data_seed)
}

pub fn prepare_splits(
    train: &RawDataset,
    test: &RawDataset,
    pca_dims: Option<usize>,
    seed: u64,
) -> Result<PreparedData> {
    let pre = Preprocessor::fit(train, pca_dims, &mut RngStream::derive(seed, "pca", 0))?;
    let (train, z1) = pre.apply(train)?;
    let (test, z2) = pre.apply(test)?;
    Ok(PreparedData {
        train,
        test,
        zero_rows: z1 + z2,
        explained_variance: pre.pca.as_ref().map(|p| p.explained_variance_ratio().iter().sum()),
    })
}
