use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DyadicModel, Embeddings, ModelKind};

/// Inner-product decoder: `p_ij = sigmoid(x_i . x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotProductModel {
    dim: usize,
    embeddings: Vec<f64>,
}

impl DotProductModel {
    pub fn new(dim: usize, embeddings: Vec<f64>) -> Self {
        assert!(dim > 0 && embeddings.len().is_multiple_of(dim));
        DotProductModel { dim, embeddings }
    }

    /// I.i.d. `N(0, 1/dim)` entries.
    pub fn random(n: usize, dim: usize, seed: u64) -> Self {
        Self::new(dim, gaussian_init(n, dim, seed))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }
}

pub(super) fn gaussian_init(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
    (0..n * dim).map(|_| normal.sample(&mut rng)).collect()
}

impl DyadicModel for DotProductModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Dot
    }

    fn node_count(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    fn params(&self) -> &[f64] {
        &self.embeddings
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.embeddings
    }

    fn raw_logit(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }

    // d(x_i . x_j)/dx_i = x_j and vice versa.
    fn add_logit_gradient(&self, i: usize, j: usize, weight: f64, grad: &mut [f64]) {
        let d = self.dim;
        for k in 0..d {
            grad[i * d + k] += weight * self.embeddings[j * d + k];
            grad[j * d + k] += weight * self.embeddings[i * d + k];
        }
    }

    fn embeddings(&self) -> Option<Embeddings<'_>> {
        Some(Embeddings {
            dim: self.dim,
            data: &self.embeddings,
        })
    }
}
