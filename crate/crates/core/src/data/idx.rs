//! IDX (big-endian binary) image and label files, as distributed for MNIST.

use std::path::Path;

use super::RawDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::DatasetMissing {
                path: path.to_path_buf(),
                hint: "download the uncompressed MNIST IDX files (see `dpsgd datasets fetch`)"
                    .into(),
            }
        } else {
            Error::Io(e)
        }
    })
}

fn format_err(what: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        what: what.display().to_string(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, bytes.len(), "file ends inside the header"))
}

/// Parses an image file; pixels are scaled from `0..=255` to `[0, 1]`.
pub fn read_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_err(
            path,
            0,
            format!("magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let d = rows * cols;
    let expected = 16 + n * d;
    if bytes.len() < expected {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated: header declares {n} images of {rows}x{cols}, need {expected} bytes"),
        ));
    }
    let data = bytes[16..expected]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    Matrix::from_vec(n, d, data)
}

pub fn read_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(format_err(
            path,
            0,
            format!("magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, path)? as usize;
    if bytes.len() < 8 + n {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated: header declares {n} labels"),
        ));
    }
    Ok(bytes[8..8 + n].iter().map(|&l| usize::from(l)).collect())
}

/// Loads an image/label file pair into a 10-class dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let images = read_idx_images(&read_file(images_path)?, images_path)?;
    let labels = read_idx_labels(&read_file(labels_path)?, labels_path)?;
    if labels.len() != images.rows() {
        return Err(format_err(
            labels_path,
            4,
            format!(
                "label count {} does not match image count {}",
                labels.len(),
                images.rows()
            ),
        ));
    }
    if let Some(i) = labels.iter().position(|&l| l > 9) {
        return Err(format_err(labels_path, 8 + i, format!("label {} > 9", labels[i])));
    }
    RawDataset::new(images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn round_trips_two_images() {
        let mut img = header(IMAGE_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        let m = read_idx_images(&img, Path::new("img")).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 4));
        assert_eq!(m.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(m.get(1, 3), 4.0 / 255.0);
    }

    #[test]
    fn bad_magic_and_truncation_name_offsets() {
        let img = header(0x0803_0000, &[1, 1, 1]);
        let e = read_idx_images(&img, Path::new("img")).unwrap_err();
        assert!(matches!(e, Error::Format { offset: 0, .. }), "{e}");
        let mut img = header(IMAGE_MAGIC, &[2, 2, 2]);
        img.extend_from_slice(&[1, 2, 3]);
        let e = read_idx_images(&img, Path::new("img")).unwrap_err();
        assert!(matches!(e, Error::Format { offset: 19, .. }), "{e}");
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = header(IMAGE_MAGIC, &[2, 1, 1]);
        img.extend_from_slice(&[7, 9]);
        let mut lab = header(LABEL_MAGIC, &[3]);
        lab.extend_from_slice(&[1, 2, 3]);
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        let e = load_idx(&ip, &lp).unwrap_err();
        assert!(e.to_string().contains("does not match"), "{e}");
        let e = load_idx(&dir.path().join("missing"), &lp).unwrap_err();
        assert!(matches!(e, Error::DatasetMissing { .. }));
    }
}
