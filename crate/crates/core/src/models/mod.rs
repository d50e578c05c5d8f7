//! Dyadic-independence link models.
//!
//! Every model assigns each candidate pair an independent Bernoulli edge
//! variable through a logit. Logits are clamped to `±LOGIT_BOUND`, which keeps
//! every probability inside `[PROB_EPS, 1 - PROB_EPS]`; the gradient of a
//! clamped logit is zero.

mod cne;
mod dot;
mod maxent;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cne::CneModel;
pub use dot::DotProductModel;
pub use maxent::{degree_error, fit_maxent, MaxEntFit, MaxEntModel, MaxEntOptions};

use crate::error::{Error, Result};
use crate::graph::{Graph, PairUniverse};
use crate::numeric::{log_sigmoid, par_accumulate, par_sum, sigmoid};
use crate::optim::Optimizer;

/// Probability floor applied before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// `logit(1 - PROB_EPS)`.
pub const LOGIT_BOUND: f64 = 16.118_095_550_958_316;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    MaxEnt,
    Dot,
    Cne,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MaxEnt => "maxent",
            ModelKind::Dot => "dot",
            ModelKind::Cne => "cne",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxent" => Ok(ModelKind::MaxEnt),
            "dot" | "dot-product" | "dotproduct" => Ok(ModelKind::Dot),
            "cne" => Ok(ModelKind::Cne),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Row-major node embedding matrix.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings<'a> {
    pub dim: usize,
    pub data: &'a [f64],
}

impl<'a> Embeddings<'a> {
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }
}

/// A graph model whose edges are independent given its parameters.
pub trait DyadicModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn node_count(&self) -> usize;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Unclamped `log(p_ij(1) / p_ij(0))`.
    fn raw_logit(&self, i: usize, j: usize) -> f64;

    /// Adds `weight * d raw_logit(i, j) / d params` into `grad`.
    fn add_logit_gradient(&self, i: usize, j: usize, weight: f64, grad: &mut [f64]);

    fn embeddings(&self) -> Option<Embeddings<'_>> {
        None
    }

    fn logit(&self, i: usize, j: usize) -> f64 {
        clamp_logit(self.raw_logit(i, j))
    }

    fn probability(&self, i: usize, j: usize) -> f64 {
        sigmoid(self.logit(i, j))
    }

    /// `(p_ij(1), p_ij(0))`, each computed without cancellation.
    fn probabilities(&self, i: usize, j: usize) -> (f64, f64) {
        let z = self.logit(i, j);
        (sigmoid(z), sigmoid(-z))
    }
}

pub fn clamp_logit(z: f64) -> f64 {
    z.clamp(-LOGIT_BOUND, LOGIT_BOUND)
}

/// Whether clamping cuts the gradient of this raw logit.
pub fn is_clamped(raw: f64) -> bool {
    raw.abs() > LOGIT_BOUND
}

/// Raw logits for every pair of the universe.
pub fn raw_logits(model: &dyn DyadicModel, universe: &PairUniverse) -> Vec<f64> {
    use rayon::prelude::*;
    universe
        .pairs()
        .par_iter()
        .map(|&(i, j)| model.raw_logit(i as usize, j as usize))
        .collect()
}

/// Clamped logits for every pair of the universe.
pub fn logits(model: &dyn DyadicModel, universe: &PairUniverse) -> Vec<f64> {
    let mut z = raw_logits(model, universe);
    for v in &mut z {
        *v = clamp_logit(*v);
    }
    z
}

/// Edge probabilities for every pair of the universe.
pub fn marginals(model: &dyn DyadicModel, universe: &PairUniverse) -> Vec<f64> {
    logits(model, universe).into_iter().map(sigmoid).collect()
}

/// Bernoulli cross-entropy `-sum [a log p + (1 - a) log(1 - p)]` from logits.
pub fn cross_entropy_from_logits(logits: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    par_sum(logits.len(), |k| {
        let z = clamp_logit(logits[k]);
        if labels[k] {
            -log_sigmoid(z)
        } else {
            -log_sigmoid(-z)
        }
    })
}

/// Negative log-likelihood of `graph` under `model`, full batch over `universe`.
pub fn model_cross_entropy(model: &dyn DyadicModel, graph: &Graph, universe: &PairUniverse) -> f64 {
    cross_entropy_from_logits(&logits(model, universe), &universe.edge_mask(graph))
}

/// `sum_k weights[k] * d raw_logit_k / d params`, reduced in a fixed order.
/// Pairs whose raw logit is clamped contribute nothing.
pub fn accumulate_gradient(
    model: &dyn DyadicModel,
    universe: &PairUniverse,
    weights: &[f64],
) -> Result<Vec<f64>> {
    assert_eq!(weights.len(), universe.len());
    if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
        let (i, j) = universe.pair(k);
        return Err(Error::NonFiniteGradient { pair: k, i, j });
    }
    let dim = model.params().len();
    Ok(par_accumulate(universe.len(), dim, |k, buf| {
        let w = weights[k];
        if w == 0.0 {
            return;
        }
        let (i, j) = universe.pair(k);
        if is_clamped(model.raw_logit(i, j)) {
            return;
        }
        model.add_logit_gradient(i, j, w, buf);
    }))
}

/// One optimizer update driven by per-pair `dL/dlogit` weights.
pub fn gradient_step(
    model: &mut dyn DyadicModel,
    universe: &PairUniverse,
    weights: &[f64],
    optimizer: &mut Optimizer,
) -> Result<()> {
    let grad = accumulate_gradient(model, universe, weights)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            epoch: 0,
            message: "parameter gradient is not finite".into(),
        });
    }
    optimizer.step(model.params_mut(), &grad);
    Ok(())
}

/// Any of the supported models, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    MaxEnt(MaxEntModel),
    Dot(DotProductModel),
    Cne(CneModel),
}

impl Model {
    fn inner(&self) -> &dyn DyadicModel {
        match self {
            Model::MaxEnt(m) => m,
            Model::Dot(m) => m,
            Model::Cne(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn DyadicModel {
        match self {
            Model::MaxEnt(m) => m,
            Model::Dot(m) => m,
            Model::Cne(m) => m,
        }
    }
}

impl DyadicModel for Model {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn node_count(&self) -> usize {
        self.inner().node_count()
    }

    fn params(&self) -> &[f64] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.inner_mut().params_mut()
    }

    fn raw_logit(&self, i: usize, j: usize) -> f64 {
        self.inner().raw_logit(i, j)
    }

    fn add_logit_gradient(&self, i: usize, j: usize, weight: f64, grad: &mut [f64]) {
        self.inner().add_logit_gradient(i, j, weight, grad)
    }

    fn embeddings(&self) -> Option<Embeddings<'_>> {
        self.inner().embeddings()
    }
}

/// JSON checkpoint: the model plus the seed and resolved config that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
