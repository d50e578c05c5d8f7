use serde::{Deserialize, Serialize};

use super::{DyadicModel, ModelKind};
use crate::graph::{Graph, PairUniverse, Side};
use crate::numeric::{par_accumulate, par_sum, sigmoid, softplus};
use crate::optim::lbfgs_minimize;

/// Degree-matching maximum-entropy model: `p_ij = sigmoid(a_i + a_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntModel {
    potentials: Vec<f64>,
}

impl MaxEntModel {
    pub fn new(potentials: Vec<f64>) -> Self {
        MaxEntModel { potentials }
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potentials
    }
}

impl DyadicModel for MaxEntModel {
    fn kind(&self) -> ModelKind {
        ModelKind::MaxEnt
    }

    fn node_count(&self) -> usize {
        self.potentials.len()
    }

    fn params(&self) -> &[f64] {
        &self.potentials
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.potentials
    }

    fn raw_logit(&self, i: usize, j: usize) -> f64 {
        self.potentials[i] + self.potentials[j]
    }

    fn add_logit_gradient(&self, i: usize, j: usize, weight: f64, grad: &mut [f64]) {
        grad[i] += weight;
        grad[j] += weight;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEntOptions {
    pub max_iters: usize,
    /// Stop when `max_i |sum_j p_ij - deg(i)|` falls below this.
    pub degree_tol: f64,
    /// Potential assigned to nodes whose degree cannot be matched by any
    /// finite potential (degree 0 gets `-bound`, full degree `+bound`).
    pub potential_bound: f64,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        MaxEntOptions {
            max_iters: 100,
            degree_tol: 1e-6,
            potential_bound: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntFit {
    pub model: MaxEntModel,
    pub iterations: usize,
    pub max_degree_error: f64,
    pub converged: bool,
    /// Nodes pinned at `±potential_bound`.
    pub pinned: Vec<usize>,
}

/// Fits the degree-matching model to `graph` by maximum likelihood over the
/// candidate pairs in `universe` (L-BFGS with a diagonal curvature guess).
pub fn fit_maxent(graph: &Graph, universe: &PairUniverse, options: MaxEntOptions) -> MaxEntFit {
    let n = graph.node_count();
    let degree: Vec<f64> = (0..n).map(|v| graph.degree(v) as f64).collect();
    let partners: Vec<usize> = match graph.sides() {
        None => vec![n - 1; n],
        Some(sides) => {
            let left = sides.iter().filter(|&&s| s == Side::Left).count();
            sides
                .iter()
                .map(|&s| if s == Side::Left { n - left } else { left })
                .collect()
        }
    };

    let mut potentials = vec![0.0; n];
    let mut free = Vec::with_capacity(n);
    let mut pinned = Vec::new();
    for v in 0..n {
        if graph.degree(v) == 0 {
            potentials[v] = -options.potential_bound;
            pinned.push(v);
        } else if graph.degree(v) == partners[v] {
            potentials[v] = options.potential_bound;
            pinned.push(v);
        } else {
            free.push(v);
        }
    }
    if !pinned.is_empty() {
        log::warn!(
            "{} node(s) have degree 0 or full degree; their potentials are pinned at ±{}",
            pinned.len(),
            options.potential_bound
        );
    }

    // Start from the mean-density solution.
    let density = graph.edge_count() as f64 / universe.len().max(1) as f64;
    if density > 0.0 && density < 1.0 {
        let start = 0.5 * (density / (1.0 - density)).ln();
        for &v in &free {
            potentials[v] = start;
        }
    }

    let labels = universe.edge_mask(graph);
    let expand = |x: &[f64], full: &mut Vec<f64>| {
        for (k, &v) in free.iter().enumerate() {
            full[v] = x[k];
        }
    };

    let mut x: Vec<f64> = free.iter().map(|&v| potentials[v]).collect();
    let mut full = potentials.clone();
    let eval = |x: &[f64], g: &mut [f64]| -> f64 {
        let mut alpha = full.clone();
        expand(x, &mut alpha);
        let value = par_sum(universe.len(), |k| {
            let (i, j) = universe.pair(k);
            let z = alpha[i] + alpha[j];
            softplus(z) - if labels[k] { z } else { 0.0 }
        });
        let expected = expected_degrees(&alpha, universe);
        for (k, &v) in free.iter().enumerate() {
            g[k] = expected[v] - degree[v];
        }
        value
    };
    let diag = |x: &[f64]| -> Vec<f64> {
        let mut alpha = potentials.clone();
        expand(x, &mut alpha);
        let curv = par_accumulate(universe.len(), n, |k, buf| {
            let (i, j) = universe.pair(k);
            let p = sigmoid(alpha[i] + alpha[j]);
            let c = p * (1.0 - p);
            buf[i] += c;
            buf[j] += c;
        });
        free.iter().map(|&v| curv[v]).collect()
    };

    let outcome = if x.is_empty() {
        None
    } else {
        Some(lbfgs_minimize(
            &mut x,
            eval,
            Some(&diag),
            20,
            options.max_iters,
            options.degree_tol,
        ))
    };
    expand(&x, &mut full);
    let model = MaxEntModel::new(full);
    let max_degree_error = degree_error(&model, graph, universe);
    let converged = max_degree_error <= options.degree_tol.max(1e-4);
    if !converged {
        log::warn!("maxent fit stopped with max degree error {max_degree_error:.3e}");
    }
    MaxEntFit {
        model,
        iterations: outcome.map_or(0, |o| o.iterations),
        max_degree_error,
        converged,
        pinned,
    }
}

fn expected_degrees(alpha: &[f64], universe: &PairUniverse) -> Vec<f64> {
    par_accumulate(universe.len(), alpha.len(), |k, buf| {
        let (i, j) = universe.pair(k);
        let p = sigmoid(alpha[i] + alpha[j]);
        buf[i] += p;
        buf[j] += p;
    })
}

/// `max_i |sum_j p_ij - deg(i)|` under the model's (clamped) probabilities.
pub fn degree_error(model: &dyn DyadicModel, graph: &Graph, universe: &PairUniverse) -> f64 {
    let expected = par_accumulate(universe.len(), graph.node_count(), |k, buf| {
        let (i, j) = universe.pair(k);
        let p = model.probability(i, j);
        buf[i] += p;
        buf[j] += p;
    });
    expected
        .iter()
        .enumerate()
        .map(|(v, e)| (e - graph.degree(v) as f64).abs())
        .fold(0.0, f64::max)
}
