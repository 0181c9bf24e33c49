//! Without-replacement mini-batch sampling: shuffle once, then consume the
//! permutation in disjoint chunks.

use crate::error::{Error, Result};
use crate::linalg::RngStream;

#[derive(Debug, Clone)]
pub struct PermutationCursor {
    order: Vec<usize>,
    position: usize,
    batch_size: usize,
}

impl PermutationCursor {
    /// Fisher–Yates shuffle of `indices` under `rng`; cursor at 0.
    pub fn new(indices: &[usize], batch_size: usize, rng: &mut RngStream) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if indices.is_empty() {
            return Err(Error::invalid("cursor over an empty index list"));
        }
        let mut order = indices.to_vec();
        rng.shuffle(&mut order);
        Ok(PermutationCursor {
            order,
            position: 0,
            batch_size,
        })
    }

    /// The next `b` indices, or the `b' < b` left over at the end; `None`
    /// once everything has been consumed.
    pub fn next_batch(&mut self) -> Option<Vec<usize>> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let batch = self.order[self.position..end].to_vec();
        self.position = end;
        Some(batch)
    }

    /// Reshuffles the same indices and rewinds, for multi-pass baselines.
    pub fn restart(&mut self, rng: &mut RngStream) {
        rng.shuffle(&mut self.order);
        self.position = 0;
    }

    pub fn is_exhausted(&self) -> bool {
        self.position >= self.order.len()
    }

    /// True when the batch that `next_batch` would return is the last one.
    pub fn next_is_last(&self) -> bool {
        self.position < self.order.len() && self.position + self.batch_size >= self.order.len()
    }

    pub fn batches_remaining(&self) -> usize {
        (self.order.len() - self.position).div_ceil(self.batch_size)
    }

    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.order
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}
