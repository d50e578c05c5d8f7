//! Stochastic block model graphs with one block per sensitive group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LoadReport, SensitivePartition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub nodes: usize,
    pub groups: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            nodes: 200,
            groups: 2,
            p_intra: 0.2,
            p_inter: 0.02,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_inter > 0.0 && self.p_inter <= self.p_intra && self.p_intra < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < p_inter <= p_intra < 1, got p_intra={} p_inter={}",
                self.p_intra, self.p_inter
            )));
        }
        if self.groups == 0 || self.groups > self.nodes {
            return Err(Error::Config(format!(
                "need 1 <= groups <= nodes, got {} groups for {} nodes",
                self.groups, self.nodes
            )));
        }
        Ok(())
    }

    /// `sum over pairs of their edge probability`.
    pub fn expected_edges(&self) -> f64 {
        let sizes = group_sizes(self.nodes, self.groups);
        let mut total = 0.0;
        for (a, &na) in sizes.iter().enumerate() {
            let na = na as f64;
            total += na * (na - 1.0) / 2.0 * self.p_intra;
            for &nb in &sizes[a + 1..] {
                total += na * nb as f64 * self.p_inter;
            }
        }
        total
    }
}

fn group_sizes(nodes: usize, groups: usize) -> Vec<usize> {
    (0..groups).map(|g| (0..nodes).filter(|v| v % groups == g).count()).collect()
}

/// Samples an SBM; node `v` is in group `v mod groups`, so any remainder is
/// spread round-robin. Node ids are `0..n` and labels `g0, g1, ...`.
pub fn sbm(params: &SbmParams) -> Result<Dataset> {
    params.validate()?;
    let n = params.nodes;
    let group_of: Vec<usize> = (0..n).map(|v| v % params.groups).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if group_of[i] == group_of[j] {
                params.p_intra
            } else {
                params.p_inter
            };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..params.groups).map(|g| format!("g{g}")).collect();
    Ok(Dataset {
        graph: Graph::new(n, edges, None)?,
        partition: SensitivePartition::new(group_of, labels)?,
        node_ids: (0..n).map(|v| v.to_string()).collect(),
        report: LoadReport::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_edge_count() {
        let p = SbmParams::default();
        assert!((p.expected_edges() - 2180.0).abs() < 1e-9);
        let d = sbm(&p).unwrap();
        // Binomial std is about 44.
        assert!((d.graph.edge_count() as f64 - 2180.0).abs() < 200.0);
    }

    #[test]
    fn deterministic_and_round_robin() {
        let p = SbmParams {
            nodes: 7,
            groups: 3,
            p_intra: 0.5,
            p_inter: 0.5,
            seed: 4,
        };
        let a = sbm(&p).unwrap();
        let b = sbm(&p).unwrap();
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(a.partition.group_sizes(), vec![3, 2, 2]);
    }

    #[test]
    fn rejects_bad_probabilities() {
        for (a, b) in [(0.1, 0.2), (1.0, 0.5), (0.5, 0.0)] {
            let p = SbmParams {
                p_intra: a,
                p_inter: b,
                ..SbmParams::default()
            };
            assert!(sbm(&p).is_err());
        }
    }
}
