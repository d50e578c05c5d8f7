//! Link-prediction accuracy and fairness measures on a held-out test set.

mod logreg;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use logreg::{fit_logistic, rb_measure, LogisticModel, RbGroup, RbResult, RB_GRID};

use crate::error::{Error, Result};
use crate::graph::{group_pair, DataSplit, Graph, GroupPair, PairUniverse, SensitivePartition};
use crate::models::DyadicModel;

/// `P(pos > neg) + 0.5 P(pos = neg)` via average ranks.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Metric("AUC needs at least one score in each class".into()));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0.total_cmp(&all[start].0) == Ordering::Equal {
            end += 1;
        }
        // Ranks start..end (1-based: start+1 ..= end) share their average.
        let avg = (start + 1 + end) as f64 / 2.0;
        let positives = all[start..end].iter().filter(|x| x.1).count();
        rank_sum += avg * positives as f64;
        start = end;
    }
    let np = pos.len() as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * neg.len() as f64))
}

/// Weighted mean score of one group-pair block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStat {
    pub group_pair: GroupPair,
    pub positives: usize,
    pub negatives: usize,
    pub mean: f64,
}

/// A max-difference measure with the per-block table behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMeasure {
    pub value: f64,
    pub blocks: Vec<BlockStat>,
    /// Known blocks that had no test pairs.
    pub excluded: Vec<GroupPair>,
}

/// Weight that makes test negatives count as often as they occur in the
/// full pair set: `(N_neg_full / N_pos_full) * (N_pos_test / N_neg_test)`.
pub fn negative_weight(full_pairs: usize, full_edges: usize, test_pos: usize, test_neg: usize) -> f64 {
    if full_edges == 0 || test_neg == 0 {
        return 1.0;
    }
    let neg_full = full_pairs.saturating_sub(full_edges) as f64;
    (neg_full / full_edges as f64) * (test_pos as f64 / test_neg as f64)
}

fn max_spread(blocks: &[BlockStat]) -> f64 {
    let lo = blocks.iter().map(|b| b.mean).fold(f64::INFINITY, f64::min);
    let hi = blocks.iter().map(|b| b.mean).fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn excluded(known: &[GroupPair], blocks: &[BlockStat]) -> Vec<GroupPair> {
    known
        .iter()
        .copied()
        .filter(|gp| !blocks.iter().any(|b| b.group_pair == *gp))
        .collect()
}

/// Demographic-parity gap: the largest difference between weighted block
/// means over test pairs (positives weight 1, negatives `neg_weight`).
pub fn dp_measure(
    pos: &[(usize, usize)],
    pos_scores: &[f64],
    neg: &[(usize, usize)],
    neg_scores: &[f64],
    partition: &SensitivePartition,
    neg_weight: f64,
    known_blocks: &[GroupPair],
) -> Result<BlockMeasure> {
    #[derive(Default)]
    struct Acc {
        pos: usize,
        neg: usize,
        weighted: f64,
        weight: f64,
    }
    let mut acc: BTreeMap<GroupPair, Acc> = BTreeMap::new();
    let block = |&(i, j): &(usize, usize)| group_pair(partition.group_of(i), partition.group_of(j));
    // Accumulate offsets from a common reference so constant scores give
    // exactly equal block means.
    let reference = pos_scores.iter().chain(neg_scores).next().copied().unwrap_or(0.0);
    for (p, &s) in pos.iter().zip(pos_scores) {
        let a = acc.entry(block(p)).or_default();
        a.pos += 1;
        a.weighted += s - reference;
        a.weight += 1.0;
    }
    for (p, &s) in neg.iter().zip(neg_scores) {
        let a = acc.entry(block(p)).or_default();
        a.neg += 1;
        a.weighted += neg_weight * (s - reference);
        a.weight += neg_weight;
    }
    let blocks: Vec<BlockStat> = acc
        .into_iter()
        .map(|(gp, a)| BlockStat {
            group_pair: gp,
            positives: a.pos,
            negatives: a.neg,
            mean: reference + a.weighted / a.weight,
        })
        .collect();
    if blocks.len() < 2 {
        return Err(Error::Metric(format!(
            "DP needs test pairs in at least two blocks, found {}",
            blocks.len()
        )));
    }
    Ok(BlockMeasure {
        value: max_spread(&blocks),
        excluded: excluded(known_blocks, &blocks),
        blocks,
    })
}

/// Equalized-opportunity gap over positive test pairs. With `threshold`,
/// a block's rate is the fraction of scores at or above it; otherwise the
/// mean score.
pub fn eo_measure(
    pos: &[(usize, usize)],
    pos_scores: &[f64],
    partition: &SensitivePartition,
    threshold: Option<f64>,
    known_blocks: &[GroupPair],
) -> Result<BlockMeasure> {
    let rate = |s: f64| match threshold {
        Some(t) => f64::from(u8::from(s >= t)),
        None => s,
    };
    let reference = pos_scores.first().map_or(0.0, |&s| rate(s));
    let mut acc: BTreeMap<GroupPair, (usize, f64)> = BTreeMap::new();
    for (&(i, j), &s) in pos.iter().zip(pos_scores) {
        let e = acc
            .entry(group_pair(partition.group_of(i), partition.group_of(j)))
            .or_default();
        e.0 += 1;
        e.1 += rate(s) - reference;
    }
    let blocks: Vec<BlockStat> = acc
        .into_iter()
        .map(|(gp, (count, sum))| BlockStat {
            group_pair: gp,
            positives: count,
            negatives: 0,
            mean: reference + sum / count as f64,
        })
        .collect();
    if blocks.len() < 2 {
        return Err(Error::Metric(format!(
            "EO needs positive test pairs in at least two blocks, found {}",
            blocks.len()
        )));
    }
    Ok(BlockMeasure {
        value: max_spread(&blocks),
        excluded: excluded(known_blocks, &blocks),
        blocks,
    })
}

/// Rank parity: for each block, the AUC separating its scores from all other
/// blocks' scores, folded to `max(a, 1 - a)`; the maximum over blocks.
pub fn rdp_measure(pairs: &[(usize, usize)], scores: &[f64], partition: &SensitivePartition) -> Result<f64> {
    let mut by_block: BTreeMap<GroupPair, Vec<f64>> = BTreeMap::new();
    for (&(i, j), &s) in pairs.iter().zip(scores) {
        by_block
            .entry(group_pair(partition.group_of(i), partition.group_of(j)))
            .or_default()
            .push(s);
    }
    if by_block.len() < 2 {
        return Err(Error::Metric(format!(
            "RDP needs test pairs in at least two blocks, found {}",
            by_block.len()
        )));
    }
    let mut best: f64 = 0.5;
    for (gp, inside) in &by_block {
        let outside: Vec<f64> = by_block
            .iter()
            .filter(|(other, _)| *other != gp)
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let a = auc(inside, &outside)?;
        best = best.max(a.max(1.0 - a));
    }
    Ok(best)
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct EvalOptions {
    pub seed: u64,
    /// Use a thresholded true-positive rate for EO instead of the mean score.
    pub eo_threshold: Option<f64>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub dp: f64,
    pub eo: f64,
    pub rdp: f64,
    /// Absent for models without embeddings.
    pub rb: Option<f64>,
    pub negative_weight: f64,
    pub dp_blocks: BlockMeasure,
    pub eo_blocks: BlockMeasure,
    pub rb_detail: Option<RbResult>,
}

/// Scores the split's test pairs with `model` and computes every measure.
/// `full_graph` is the original (pre-split) graph.
pub fn evaluate(
    model: &dyn DyadicModel,
    split: &DataSplit,
    full_graph: &Graph,
    partition: &SensitivePartition,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let score = |pairs: &[(usize, usize)]| -> Vec<f64> {
        pairs.iter().map(|&(i, j)| model.probability(i, j)).collect()
    };
    let pos_scores = score(&split.test_pos);
    let neg_scores = score(&split.test_neg);
    let universe = PairUniverse::new(full_graph, partition);
    let known = universe.blocks().to_vec();

    let w = negative_weight(
        universe.len(),
        full_graph.edge_count(),
        split.test_pos.len(),
        split.test_neg.len(),
    );
    let dp_blocks = dp_measure(
        &split.test_pos,
        &pos_scores,
        &split.test_neg,
        &neg_scores,
        partition,
        w,
        &known,
    )?;
    let eo_blocks = eo_measure(&split.test_pos, &pos_scores, partition, options.eo_threshold, &known)?;
    let all_pairs: Vec<(usize, usize)> = split.test_pos.iter().chain(&split.test_neg).copied().collect();
    let all_scores: Vec<f64> = pos_scores.iter().chain(&neg_scores).copied().collect();
    let rdp = rdp_measure(&all_pairs, &all_scores, partition)?;
    let rb_detail = model
        .embeddings()
        .map(|e| rb_measure(e, partition, options.seed))
        .transpose()?;

    Ok(EvalReport {
        auc: auc(&pos_scores, &neg_scores)?,
        dp: dp_blocks.value,
        eo: eo_blocks.value,
        rdp,
        rb: rb_detail.as_ref().and_then(|r| r.value),
        negative_weight: w,
        dp_blocks,
        eo_blocks,
        rb_detail,
    })
}
