//! Gaussian blob generator.

use serde::{Deserialize, Serialize};

use super::RawDataset;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub dim: usize,
    /// Distance of every class centre from the origin.
    pub separation: f64,
    /// Per-coordinate standard deviation around each centre.
    pub spread: f64,
    pub samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 3,
            dim: 10,
            separation: 4.0,
            spread: 1.0,
            samples: 3000,
        }
    }
}

/// Blobs around random centres at distance `separation` from the origin.
/// Row `i` has class `i % classes`.
pub fn gaussian_blobs(cfg: &SyntheticConfig, rng: &mut RngStream) -> Result<RawDataset> {
    if cfg.classes < 2 || cfg.dim == 0 || cfg.samples == 0 {
        return Err(Error::invalid(
            "synthetic data needs >= 2 classes, dim >= 1 and samples >= 1",
        ));
    }
    let centres: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            let mut c: Vec<f64> = (0..cfg.dim).map(|_| rng.standard_normal()).collect();
            let n = norm(&c).max(f64::MIN_POSITIVE);
            c.iter_mut().for_each(|v| *v *= cfg.separation / n);
            c
        })
        .collect();
    let mut data = Vec::with_capacity(cfg.samples * cfg.dim);
    let mut labels = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let class = i % cfg.classes;
        for &c in &centres[class] {
            data.push(c + cfg.spread * rng.standard_normal());
        }
        labels.push(class);
    }
    RawDataset::new(Matrix::from_vec(cfg.samples, cfg.dim, data)?, labels, cfg.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = gaussian_blobs(&cfg, &mut RngStream::new(4)).unwrap();
        let b = gaussian_blobs(&cfg, &mut RngStream::new(4)).unwrap();
        assert_eq!((a.len(), a.dim()), (3000, 10));
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels[..4], [0, 1, 2, 0]);
    }
}
