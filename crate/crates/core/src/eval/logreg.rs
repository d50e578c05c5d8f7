use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::auc;
use crate::error::{Error, Result};
use crate::graph::SensitivePartition;
use crate::models::Embeddings;
use crate::numeric::{sigmoid, softplus};
use crate::optim::lbfgs_minimize;

/// Inverse regularization strengths tried for each classifier.
pub const RB_GRID: [f64; 9] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// L2-regularized logistic regression with an unpenalized intercept:
/// minimizes `0.5 |w|^2 + c * sum_i logloss_i`.
pub fn fit_logistic(rows: &[&[f64]], labels: &[bool], c: f64) -> LogisticModel {
    let dim = rows.first().map_or(0, |r| r.len());
    let n = rows.len().max(1) as f64;
    // Divided through by c*n so the gradient tolerance means the same thing
    // across the grid.
    let ridge = 1.0 / (c * n);
    let mut theta = vec![0.0; dim + 1];
    let eval = |t: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let (w, b) = (&t[..dim], t[dim]);
        let mut f = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let z = b + w.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
            f += softplus(z) - if y { z } else { 0.0 };
            let r = (sigmoid(z) - f64::from(u8::from(y))) / n;
            for (gk, v) in g[..dim].iter_mut().zip(x.iter()) {
                *gk += r * v;
            }
            g[dim] += r;
        }
        f /= n;
        for k in 0..dim {
            f += 0.5 * ridge * w[k] * w[k];
            g[k] += ridge * w[k];
        }
        f
    };
    lbfgs_minimize(&mut theta, eval, None, 10, 500, 1e-8);
    let intercept = theta[dim];
    theta.truncate(dim);
    LogisticModel {
        weights: theta,
        intercept,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbGroup {
    pub group: usize,
    pub label: String,
    pub c: f64,
    pub validation_auc: f64,
    /// Folded to `max(a, 1 - a)`.
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    /// Maximum folded test AUC over evaluated groups; `None` if no group
    /// could be evaluated.
    pub value: Option<f64>,
    pub groups: Vec<RbGroup>,
    /// Groups with fewer than three nodes.
    pub skipped: Vec<usize>,
}

struct NodeSplit {
    train: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

/// 60/20/20 split stratified by group; every group of three or more nodes
/// lands in all three parts.
fn stratified_split(partition: &SensitivePartition, seed: u64) -> NodeSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NodeSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for g in 0..partition.group_count() {
        let mut members = partition.members(g);
        members.shuffle(&mut rng);
        let n = members.len();
        let (n_val, n_test) = if n >= 3 {
            let part = ((0.2 * n as f64).round() as usize).max(1);
            (part, part)
        } else {
            (0, 0)
        };
        out.test.extend_from_slice(&members[..n_test]);
        out.validation.extend_from_slice(&members[n_test..n_test + n_val]);
        out.train.extend_from_slice(&members[n_test + n_val..]);
    }
    out
}

fn split_scores(model: &LogisticModel, emb: &Embeddings<'_>, nodes: &[usize], positive: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &v in nodes {
        let s = model.decision(emb.row(v));
        if positive(v) {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    (pos, neg)
}

/// Representation bias: how well a linear classifier recovers each sensitive
/// value from the node embeddings (one-vs-rest, folded test AUC).
pub fn rb_measure(emb: Embeddings<'_>, partition: &SensitivePartition, seed: u64) -> Result<RbResult> {
    if emb.node_count() != partition.node_count() {
        return Err(Error::Metric(format!(
            "embeddings cover {} nodes, partition has {}",
            emb.node_count(),
            partition.node_count()
        )));
    }
    let split = stratified_split(partition, seed);
    let sizes = partition.group_sizes();
    let skipped: Vec<usize> = (0..sizes.len()).filter(|&g| sizes[g] < 3).collect();
    for &g in &skipped {
        log::warn!(
            "sensitive value {:?} has {} node(s); skipped in representation bias",
            partition.labels()[g],
            sizes[g]
        );
    }
    let train_rows: Vec<&[f64]> = split.train.iter().map(|&v| emb.row(v)).collect();

    let mut groups = Vec::new();
    for (g, &size) in sizes.iter().enumerate() {
        if size < 3 || size == partition.node_count() {
            continue;
        }
        let positive = |v: usize| partition.group_of(v) == g;
        let labels: Vec<bool> = split.train.iter().map(|&v| positive(v)).collect();
        let mut best: Option<(f64, f64, LogisticModel)> = None;
        for &c in &RB_GRID {
            let model = fit_logistic(&train_rows, &labels, c);
            let (pos, neg) = split_scores(&model, &emb, &split.validation, positive);
            let a = auc(&pos, &neg)?;
            // Strict improvement keeps the smaller C on ties.
            if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                best = Some((a, c, model));
            }
        }
        let (validation_auc, c, model) = best.expect("grid is non-empty");
        let (pos, neg) = split_scores(&model, &emb, &split.test, positive);
        let a = auc(&pos, &neg)?;
        groups.push(RbGroup {
            group: g,
            label: partition.labels()[g].clone(),
            c,
            validation_auc,
            test_auc: a.max(1.0 - a),
        });
    }
    let value = groups.iter().map(|g| g.test_auc).reduce(f64::max);
    Ok(RbResult { value, groups, skipped })
}
