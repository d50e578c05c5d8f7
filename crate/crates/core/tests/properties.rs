use std::collections::HashSet;

use fairlink::eval::{auc, rdp_measure};
use fairlink::graph::group_pair;
use fairlink::iprojection::{dual_value, project, ProjectionOptions};
use fairlink::models::DotProductModel;
use fairlink::numeric::{bernoulli_kl, sigmoid};
use fairlink::{split, ConstraintSystem, DyadicModel, Graph, PairUniverse, SensitivePartition};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_and_partition(n: usize, p: f64, groups: usize, seed: u64) -> (Graph, SensitivePartition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::new(n, edges, None).unwrap();
    let mut ids: Vec<usize> = (0..n).map(|v| if v < groups { v } else { rng.gen_range(0..groups) }).collect();
    ids.shuffle(&mut rng);
    (graph, SensitivePartition::from_ids(ids).unwrap())
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &p in pos {
        for &q in neg {
            twice += if p > q { 2 } else if p == q { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_edges(n in 8usize..30, p in 0.2f64..0.6, frac in 0.05f64..0.3, seed in any::<u64>()) {
        let (graph, _) = graph_and_partition(n, p, 2, seed);
        let Ok(s) = split(&graph, frac, seed) else { return Ok(()) };
        let original: HashSet<_> = graph.edges().iter().map(|&(i, j)| key(i, j)).collect();
        let train: HashSet<_> = s.train_graph.edges().iter().map(|&(i, j)| key(i, j)).collect();
        let test: HashSet<_> = s.test_pos.iter().map(|&(i, j)| key(i, j)).collect();
        prop_assert_eq!(test.len(), s.test_pos.len());
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.union(&test).cloned().collect::<HashSet<_>>(), original);
        prop_assert_eq!(s.test_neg.len(), s.test_pos.len());
        let neg: HashSet<_> = s.test_neg.iter().map(|&(i, j)| key(i, j)).collect();
        prop_assert_eq!(neg.len(), s.test_neg.len());
        for &(i, j) in &s.test_neg {
            prop_assert!(i != j && !graph.has_edge(i, j));
        }
        for v in 0..n {
            if graph.degree(v) > 0 {
                prop_assert!(s.train_graph.degree(v) > 0, "node {} lost all train edges", v);
            }
        }
    }

    #[test]
    fn block_sizes_cover_universe(n in 2usize..30, groups in 1usize..5, seed in any::<u64>()) {
        let groups = groups.min(n);
        let (graph, partition) = graph_and_partition(n, 0.2, groups, seed);
        let universe = PairUniverse::new(&graph, &partition);
        prop_assert_eq!(universe.block_sizes().iter().sum::<usize>(), universe.len());
        prop_assert_eq!(universe.len(), n * (n - 1) / 2);
        let sizes = partition.group_sizes();
        for s in 0..groups {
            for t in s..groups {
                let expected = if s == t { sizes[s] * (sizes[s] - 1) / 2 } else { sizes[s] * sizes[t] };
                prop_assert_eq!(universe.block_size(group_pair(s, t)), expected);
            }
        }
    }

    #[test]
    fn constraints_are_disjoint(n in 4usize..25, p in 0.1f64..0.6, groups in 2usize..4, seed in any::<u64>()) {
        let (graph, partition) = graph_and_partition(n, p, groups, seed);
        let universe = PairUniverse::new(&graph, &partition);
        let dp = ConstraintSystem::build_dp(&universe);
        let mut seen = vec![false; universe.len()];
        for c in dp.constraints() {
            for &k in &c.members {
                prop_assert!(!seen[k]);
                seen[k] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let eo = ConstraintSystem::build_eo(&universe, &graph);
        let mut count = 0;
        let mut seen = vec![false; universe.len()];
        for c in eo.constraints() {
            for &k in &c.members {
                prop_assert!(!seen[k]);
                seen[k] = true;
                let (i, j) = universe.pair(k);
                prop_assert!(graph.has_edge(i, j));
                count += 1;
            }
        }
        prop_assert_eq!(count, graph.edge_count());
    }

    #[test]
    fn dual_is_concave(
        seed in any::<u64>(),
        t in 0.0f64..1.0,
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let (graph, partition) = graph_and_partition(12, 0.3, 2, seed);
        let universe = PairUniverse::new(&graph, &partition);
        let system = ConstraintSystem::build_dp(&universe);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..universe.len()).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let marg: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let targets = system.targets_from_marginals(&marg).values;
        let m = system.len();
        let (a, b) = (&a[..m], &b[..m]);
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = dual_value(&z, &system, &targets, &mid);
        let rhs = t * dual_value(&z, &system, &targets, a) + (1.0 - t) * dual_value(&z, &system, &targets, b);
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn auc_matches_pairwise_count(
        pos in prop::collection::vec(0u8..12, 1..40),
        neg in prop::collection::vec(0u8..12, 1..40),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(|v| f64::from(v) / 4.0).collect();
        let neg: Vec<f64> = neg.into_iter().map(|v| f64::from(v) / 4.0).collect();
        prop_assert_eq!(auc(&pos, &neg).unwrap(), brute_auc(&pos, &neg));
    }

    #[test]
    fn rdp_ignores_monotone_maps(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let (_, partition) = graph_and_partition(16, 0.0, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(usize, usize)> = (0..16).flat_map(|i| (i + 1..16).map(move |j| (i, j))).collect();
        let scores: Vec<f64> = pairs.iter().map(|_| f64::from(rng.gen_range(0..50u8)) / 50.0).collect();
        let mapped: Vec<f64> = scores.iter().map(|&s| (scale * s + shift).tanh() * 0.5 + s).collect();
        prop_assert_eq!(
            rdp_measure(&pairs, &scores, &partition).unwrap(),
            rdp_measure(&pairs, &mapped, &partition).unwrap()
        );
    }

    #[test]
    fn logit_is_log_odds(emb in prop::collection::vec(-2.0f64..2.0, 12), i in 0usize..4, j in 0usize..4) {
        prop_assume!(i != j);
        let model = DotProductModel::new(3, emb);
        let (p1, p0) = model.probabilities(i, j);
        prop_assert!((p1 + p0 - 1.0).abs() < 1e-15);
        prop_assert!((model.logit(i, j) - (p1.ln() - p0.ln())).abs() < 1e-12);
    }

    #[test]
    fn kl_is_sum_of_pairwise_terms(seed in any::<u64>(), eo in any::<bool>()) {
        let (graph, partition) = graph_and_partition(14, 0.3, 3, seed);
        let universe = PairUniverse::new(&graph, &partition);
        let system = if eo && graph.edge_count() > 0 {
            ConstraintSystem::build_eo(&universe, &graph)
        } else {
            ConstraintSystem::build_dp(&universe)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let z: Vec<f64> = (0..universe.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let marg: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let targets = system.targets_from_marginals(&marg).values;
        let proj = project(&z, &system, &targets, None, &ProjectionOptions::default()).unwrap();
        let direct: f64 = (0..z.len()).map(|k| bernoulli_kl(proj.projected[k], marg[k])).sum();
        prop_assert!(proj.kl >= 0.0);
        prop_assert!((proj.kl - direct).abs() <= 1e-9 * (1.0 + direct));
    }
}
