//! Dense weight vector over the hashed feature space.

use crate::sparse::SparseVec;

/// Weight vector of dimension 2^hash_bits. All workers hold an identical
/// copy after every synchronization; updates go through the scaled-add
/// methods so the summation order stays fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector {
    hash_bits: u32,
    w: Vec<f64>,
}

impl ModelVector {
    pub fn zeros(hash_bits: u32) -> Self {
        assert!((1..=30).contains(&hash_bits), "hash_bits out of range");
        ModelVector {
            hash_bits,
            w: vec![0.0; 1usize << hash_bits],
        }
    }

    /// Wraps an existing dense vector; the length must be a power of two.
    pub fn from_dense(w: Vec<f64>) -> Self {
        assert!(w.len().is_power_of_two() && w.len() >= 2, "dims must be 2^d");
        let hash_bits = w.len().trailing_zeros();
        ModelVector { hash_bits, w }
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Mutable view for in-place collectives.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn dot_dense(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.w.len(), "dimension mismatch");
        self.w.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn get(&self, idx: u32) -> f64 {
        self.w[idx as usize]
    }

    pub fn dot_sparse(&self, v: &SparseVec) -> f64 {
        v.iter().map(|(i, x)| self.w[i as usize] * x).sum()
    }

    pub fn add_scaled_sparse(&mut self, v: &SparseVec, scale: f64) {
        for (i, x) in v.iter() {
            self.w[i as usize] += scale * x;
        }
    }

    pub fn add_scaled_dense(&mut self, v: &[f64], scale: f64) {
        assert_eq!(v.len(), self.w.len(), "dimension mismatch");
        for (wi, vi) in self.w.iter_mut().zip(v) {
            *wi += scale * vi;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for wi in &mut self.w {
            *wi *= s;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum()
    }
}
