use serde::{Deserialize, Serialize};

use super::dot::gaussian_init;
use super::{DyadicModel, Embeddings, MaxEntModel, ModelKind};

/// Conditional network embedding.
///
/// The edge posterior combines a frozen MaxEnt prior `P_ij` with half-normal
/// distance likelihoods of spread `s1` (edges) and `s2` (non-edges):
///
/// ```text
/// logit_ij = logit(P_ij) + ln(s2 / s1) + |x_i - x_j|^2 (1/(2 s2^2) - 1/(2 s1^2))
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CneModel {
    dim: usize,
    embeddings: Vec<f64>,
    prior: MaxEntModel,
    s1: f64,
    s2: f64,
}

impl CneModel {
    pub fn new(dim: usize, embeddings: Vec<f64>, prior: MaxEntModel, s1: f64, s2: f64) -> Self {
        assert!(dim > 0 && embeddings.len() == dim * prior.potentials().len());
        assert!(s1 > 0.0 && s2 > 0.0);
        CneModel {
            dim,
            embeddings,
            prior,
            s1,
            s2,
        }
    }

    pub fn random(prior: MaxEntModel, dim: usize, s1: f64, s2: f64, seed: u64) -> Self {
        let n = prior.potentials().len();
        Self::new(dim, gaussian_init(n, dim, seed), prior, s1, s2)
    }

    pub fn prior(&self) -> &MaxEntModel {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spreads(&self) -> (f64, f64) {
        (self.s1, self.s2)
    }

    fn quadratic_coefficient(&self) -> f64 {
        0.5 / (self.s2 * self.s2) - 0.5 / (self.s1 * self.s1)
    }

    fn squared_distance(&self, i: usize, j: usize) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|k| {
                let diff = self.embeddings[i * d + k] - self.embeddings[j * d + k];
                diff * diff
            })
            .sum()
    }
}

impl DyadicModel for CneModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Cne
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
        self.prior.raw_logit(i, j)
            + (self.s2 / self.s1).ln()
            + self.squared_distance(i, j) * self.quadratic_coefficient()
    }

    // d logit / d x_i = 2 (x_i - x_j) * coef; the prior is frozen.
    fn add_logit_gradient(&self, i: usize, j: usize, weight: f64, grad: &mut [f64]) {
        let d = self.dim;
        let c = 2.0 * self.quadratic_coefficient() * weight;
        for k in 0..d {
            let diff = self.embeddings[i * d + k] - self.embeddings[j * d + k];
            grad[i * d + k] += c * diff;
            grad[j * d + k] -= c * diff;
        }
    }

    fn embeddings(&self) -> Option<Embeddings<'_>> {
        Some(Embeddings {
            dim: self.dim,
            data: &self.embeddings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::sigmoid;

    fn prior(n: usize) -> MaxEntModel {
        MaxEntModel::new((0..n).map(|v| -0.3 * v as f64).collect())
    }

    #[test]
    fn matches_two_gaussian_posterior() {
        let m = CneModel::random(prior(3), 2, 1.0, 16.0, 4);
        let (i, j) = (0, 2);
        let dist = m.squared_distance(i, j).sqrt();
        let density = |s: f64| (-(dist * dist) / (2.0 * s * s)).exp() / s;
        let p_prior = sigmoid(m.prior.raw_logit(i, j));
        let num = p_prior * density(1.0);
        let posterior = num / (num + (1.0 - p_prior) * density(16.0));
        assert!((m.probability(i, j) - posterior).abs() < 1e-12);
    }

    #[test]
    fn logit_decreases_with_distance() {
        let base = CneModel::new(1, vec![0.0, 0.0, 0.0], prior(3), 1.0, 16.0);
        let mut last = base.raw_logit(0, 1);
        for step in 1..6 {
            let m = CneModel::new(1, vec![0.0, step as f64 * 0.5, 0.0], prior(3), 1.0, 16.0);
            let z = m.raw_logit(0, 1);
            assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn equal_spreads_and_embeddings_reduce_to_prior() {
        let m = CneModel::new(2, vec![0.7; 6], prior(3), 2.0, 2.0);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(m.raw_logit(i, j), m.prior.raw_logit(i, j));
        }
    }
}
