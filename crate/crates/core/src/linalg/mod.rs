//! Dense kernels shared by the rest of the crate.

mod pca;
mod rng;

use serde::{Deserialize, Serialize};

pub use pca::{pca_top_k, symmetric_eigen, Pca};
pub use rng::{splitmix64, RngStream, ALGORITHM as RNG_ALGORITHM};

use crate::error::{check_dim, Error, Result};

/// A model weight vector, feature vector, gradient or noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        DenseVector(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        dot(self, other)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseVector) -> Result<()> {
        check_dim(self.len(), x.len())?;
        axpy(alpha, &x.0, &mut self.0);
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.0.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn distance(&self, other: &DenseVector) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Inner product; errors on a dimension mismatch.
pub fn dot(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(dot_slices(&a.0, &b.0))
}

/// Unchecked slice inner product for hot loops; callers guarantee lengths.
#[inline]
pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot_slices(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Euclidean projection onto the closed ball of the given radius.
pub fn project_to_ball(w: &DenseVector, radius: f64) -> DenseVector {
    let mut out = w.clone();
    project_in_place(out.as_mut_slice(), radius);
    out
}

/// In-place variant of [`project_to_ball`]. Returns true when `w` was scaled.
pub fn project_in_place(w: &mut [f64], radius: f64) -> bool {
    let n = norm(w);
    if n <= radius {
        return false;
    }
    let mut s = radius / n;
    // Rounding can leave the norm a few ulps above the radius; shrink until inside.
    loop {
        w.iter_mut().for_each(|v| *v *= s);
        if norm(w) <= radius {
            return true;
        }
        s = 1.0 - f64::EPSILON;
    }
}

/// `dim` i.i.d. draws from N(0, sigma^2).
pub fn gaussian_vector(rng: &mut RngStream, dim: usize, sigma: f64) -> Result<DenseVector> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(DenseVector::zeros(dim));
    }
    Ok(DenseVector((0..dim).map(|_| sigma * rng.standard_normal()).collect()))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok(self.iter_rows().map(|r| dot_slices(r, x)).collect())
    }

    /// `self * other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_vec(x.to_vec())
    }

    /// Kahan-compensated sum of products, used as the reference for `dot`.
    fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for (x, y) in a.iter().zip(b) {
            let term = x * y - c;
            let t = sum + term;
            c = (t - sum) - term;
            sum = t;
        }
        sum
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot(&v(&[1.0, 2.0]), &v(&[3.0, 4.0])).unwrap(), 11.0);
    }

    #[test]
    fn dot_dimension_mismatch_is_an_error() {
        let err = dot(&v(&[1.0, 2.0]), &v(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn dot_matches_compensated_oracle() {
        let mut rng = RngStream::new(11);
        for _ in 0..200 {
            let a: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
            let b: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
            let exact = kahan_dot(&a, &b);
            let got = dot_slices(&a, &b);
            let scale: f64 = a.iter().zip(&b).map(|(x, y)| (x * y).abs()).sum();
            assert!((got - exact).abs() <= 1e-12 * scale.max(exact.abs()), "{got} vs {exact}");
        }
    }

    #[test]
    fn projection_examples() {
        let w = v(&[3.0, 4.0]);
        assert_eq!(project_to_ball(&w, 10.0), w);
        assert_eq!(project_to_ball(&w, 5.0), w);
        let p = project_to_ball(&w, 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn projection_onto_zero_ball() {
        let p = project_to_ball(&v(&[3.0, -4.0]), 0.0);
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn gaussian_zero_sigma_and_negative_sigma() {
        let mut rng = RngStream::new(1);
        assert_eq!(gaussian_vector(&mut rng, 4, 0.0).unwrap(), DenseVector::zeros(4));
        assert!(gaussian_vector(&mut rng, 4, -1.0).is_err());
        assert!(gaussian_vector(&mut rng, 4, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_is_reproducible() {
        let a = gaussian_vector(&mut RngStream::new(5), 16, 0.3).unwrap();
        let b = gaussian_vector(&mut RngStream::new(5), 16, 0.3).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn gaussian_sample_variance() {
        // Var of the sample variance of 1e6 N(0,1) draws is 2/1e6, so the
        // 99.9% band is about +-0.0047; [0.99, 1.01] is comfortably wider.
        let mut rng = RngStream::new(2024);
        let x = gaussian_vector(&mut rng, 1_000_000, 1.0).unwrap();
        let n = x.len() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / n;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.99..=1.01).contains(&var), "variance {var}");
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = a.transpose();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[5.0, 11.0, 11.0, 25.0]);
        assert!(a.matmul(&Matrix::zeros(3, 1)).is_err());
    }
}
