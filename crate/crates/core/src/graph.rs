//! Graphs, sensitive groups, the candidate pair universe, and train/test splits.
//!
//! Nodes are dense `usize` indices. File-level node ids are arbitrary strings;
//! [`Dataset`] keeps the mapping so reports can refer back to them.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of a bipartite graph a node sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Simple undirected graph, optionally bipartite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Normalized `(min, max)` pairs, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    sides: Option<Vec<Side>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates, out-of-range ids and
    /// (when `sides` is given) same-side edges.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, sides: Option<Vec<Side>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if let Some(s) = &sides {
            if s.len() != n {
                return Err(Error::InvalidGraph(format!(
                    "bipartite split has {} entries for {} nodes",
                    s.len(),
                    n
                )));
            }
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if let Some(s) = &sides {
                if s[u] == s[v] {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({u}, {v}) joins two nodes on the same side"
                    )));
                }
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        if normalized.len() != before {
            return Err(Error::InvalidGraph("duplicate edges".into()));
        }
        let mut g = Graph {
            n,
            edges: normalized,
            adjacency: Vec::new(),
            sides,
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        self.adjacency = adj;
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn sides(&self) -> Option<&[Side]> {
        self.sides.as_deref()
    }

    pub fn is_bipartite(&self) -> bool {
        self.sides.is_some()
    }

    /// Same node set and sides, different edges.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        Graph::new(self.n, edges, self.sides.clone())
    }

    /// Whether `{i, j}` is a structurally allowed pair (distinct, cross-side when bipartite).
    pub fn is_candidate(&self, i: usize, j: usize) -> bool {
        i != j
            && match &self.sides {
                Some(s) => s[i] != s[j],
                None => true,
            }
    }
}

// Deserialized graphs need their adjacency index restored.
impl Graph {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut g: Graph = serde_json::from_str(s)?;
        g.rebuild_adjacency();
        Ok(g)
    }
}

/// Assignment of every node to exactly one sensitive group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivePartition {
    group_of: Vec<usize>,
    labels: Vec<String>,
}

impl SensitivePartition {
    /// `labels[g]` names group `g`; every group must be non-empty.
    pub fn new(group_of: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let mut sizes = vec![0usize; labels.len()];
        for (node, &g) in group_of.iter().enumerate() {
            if g >= labels.len() {
                return Err(Error::InvalidGraph(format!(
                    "node {node} assigned to unknown group {g}"
                )));
            }
            sizes[g] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidGraph(format!("sensitive group {empty} is empty")));
        }
        Ok(SensitivePartition { group_of, labels })
    }

    /// Groups named `"0"`, `"1"`, ... from raw ids.
    pub fn from_ids(group_of: Vec<usize>) -> Result<Self> {
        let k = group_of.iter().copied().max().map_or(0, |m| m + 1);
        Self::new(group_of, (0..k).map(|g| g.to_string()).collect())
    }

    pub fn group_of(&self, node: usize) -> usize {
        self.group_of[node]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.group_of
    }

    pub fn group_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_count(&self) -> usize {
        self.group_of.len()
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.group_of.len())
            .filter(|&v| self.group_of[v] == group)
            .collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.labels.len()];
        for &g in &self.group_of {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Unordered group pair `(s, t)` with `s <= t`.
pub type GroupPair = (usize, usize);

pub fn group_pair(a: usize, b: usize) -> GroupPair {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone)]
enum PairLayout {
    /// All `i < j`, lexicographic.
    Full,
    /// Left-side nodes × right-side nodes, left-major.
    Bipartite {
        left: Vec<usize>,
        right: Vec<usize>,
        position: Vec<usize>,
    },
}

/// Every candidate vertex pair, indexed densely, with its group-pair block.
#[derive(Debug, Clone)]
pub struct PairUniverse {
    n: usize,
    layout: PairLayout,
    pairs: Vec<(u32, u32)>,
    block_of: Vec<u32>,
    blocks: Vec<GroupPair>,
    block_sizes: Vec<usize>,
}

impl PairUniverse {
    /// Enumerates all candidate pairs of `graph` and tags each with its
    /// unordered group pair. Blocks are sorted lexicographically; only
    /// non-empty blocks are listed.
    pub fn new(graph: &Graph, partition: &SensitivePartition) -> Self {
        assert_eq!(
            graph.node_count(),
            partition.node_count(),
            "partition and graph disagree on node count"
        );
        let n = graph.node_count();
        let (layout, pairs): (PairLayout, Vec<(u32, u32)>) = match graph.sides() {
            None => {
                let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        pairs.push((i as u32, j as u32));
                    }
                }
                (PairLayout::Full, pairs)
            }
            Some(sides) => {
                let left: Vec<usize> = (0..n).filter(|&v| sides[v] == Side::Left).collect();
                let right: Vec<usize> = (0..n).filter(|&v| sides[v] == Side::Right).collect();
                let mut position = vec![0; n];
                for (p, &v) in left.iter().enumerate() {
                    position[v] = p;
                }
                for (p, &v) in right.iter().enumerate() {
                    position[v] = p;
                }
                let mut pairs = Vec::with_capacity(left.len() * right.len());
                for &l in &left {
                    for &r in &right {
                        pairs.push((l.min(r) as u32, l.max(r) as u32));
                    }
                }
                (
                    PairLayout::Bipartite {
                        left,
                        right,
                        position,
                    },
                    pairs,
                )
            }
        };

        let k = partition.group_count();
        let mut sizes = vec![0usize; k * k];
        for &(i, j) in &pairs {
            let (s, t) = group_pair(
                partition.group_of(i as usize),
                partition.group_of(j as usize),
            );
            sizes[s * k + t] += 1;
        }
        let mut blocks = Vec::new();
        let mut block_sizes = Vec::new();
        let mut dense = vec![u32::MAX; k * k];
        for s in 0..k {
            for t in s..k {
                if sizes[s * k + t] > 0 {
                    dense[s * k + t] = blocks.len() as u32;
                    blocks.push((s, t));
                    block_sizes.push(sizes[s * k + t]);
                }
            }
        }
        let block_of = pairs
            .iter()
            .map(|&(i, j)| {
                let (s, t) = group_pair(
                    partition.group_of(i as usize),
                    partition.group_of(j as usize),
                );
                dense[s * k + t]
            })
            .collect();

        PairUniverse {
            n,
            layout,
            pairs,
            block_of,
            blocks,
            block_sizes,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        let (i, j) = self.pairs[index];
        (i as usize, j as usize)
    }

    /// Dense index of `{i, j}`, or `None` if it is not a candidate pair.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        match &self.layout {
            PairLayout::Full => {
                let (a, b) = (i.min(j), i.max(j));
                Some(a * self.n - a * (a + 1) / 2 + (b - a - 1))
            }
            PairLayout::Bipartite {
                left,
                right,
                position,
            } => {
                let (l, r) = if left.get(position[i]) == Some(&i) {
                    (i, j)
                } else {
                    (j, i)
                };
                if left.get(position[l]) != Some(&l) || right.get(position[r]) != Some(&r) {
                    return None;
                }
                Some(position[l] * right.len() + position[r])
            }
        }
    }

    /// Block index (into [`Self::blocks`]) of pair `index`.
    pub fn block_of(&self, index: usize) -> usize {
        self.block_of[index] as usize
    }

    pub fn block_indices(&self) -> &[u32] {
        &self.block_of
    }

    /// Non-empty unordered group pairs, lexicographically sorted.
    pub fn blocks(&self) -> &[GroupPair] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// `|U_st|`, zero for blocks with no candidate pairs.
    pub fn block_size(&self, pair: GroupPair) -> usize {
        let key = group_pair(pair.0, pair.1);
        self.blocks
            .iter()
            .position(|&b| b == key)
            .map_or(0, |b| self.block_sizes[b])
    }

    /// Per-pair adjacency indicator for `graph`.
    pub fn edge_mask(&self, graph: &Graph) -> Vec<bool> {
        let mut mask = vec![false; self.pairs.len()];
        for &(u, v) in graph.edges() {
            if let Some(idx) = self.index_of(u, v) {
                mask[idx] = true;
            }
        }
        mask
    }

    /// Universe indices of the edges of `graph`, in the graph's edge order.
    pub fn edge_indices(&self, graph: &Graph) -> Vec<usize> {
        graph
            .edges()
            .iter()
            .filter_map(|&(u, v)| self.index_of(u, v))
            .collect()
    }
}

/// Graph plus groups plus the original string ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub partition: SensitivePartition,
    pub node_ids: Vec<String>,
    pub report: LoadReport,
}

/// Counts of rows dropped while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a whitespace-separated edge list and a `node_id,group_label` CSV.
///
/// Dense node indices follow the order of the attribute file; group ids
/// follow first appearance of each label. In bipartite mode the first column
/// of the edge file is the left side, the second the right side.
pub fn load_edge_list(edge_path: &Path, attr_path: &Path, bipartite: bool) -> Result<Dataset> {
    let attrs = read_to_string(attr_path)?;
    let edges = read_to_string(edge_path)?;
    parse_edge_list(&edges, &attrs, bipartite).map_err(|e| match e {
        Error::Parse { line, message, path } if path.as_os_str() == "<edges>" => Error::Parse {
            path: edge_path.to_path_buf(),
            line,
            message,
        },
        Error::Parse { line, message, .. } => Error::Parse {
            path: attr_path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// In-memory form of [`load_edge_list`].
pub fn parse_edge_list(edges: &str, attrs: &str, bipartite: bool) -> Result<Dataset> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut node_ids = Vec::new();
    let mut group_of = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();

    for (lineno, line) in attrs.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: "<attrs>".into(),
            line: lineno + 1,
            message: format!("expected `node_id,group_label`, got `{line}`"),
        })?;
        let (id, label) = (id.trim(), label.trim());
        if index.contains_key(id) {
            return Err(Error::Parse {
                path: "<attrs>".into(),
                line: lineno + 1,
                message: format!("node `{id}` listed twice"),
            });
        }
        let g = *label_index.entry(label.to_string()).or_insert_with(|| {
            labels.push(label.to_string());
            labels.len() - 1
        });
        index.insert(id.to_string(), node_ids.len());
        node_ids.push(id.to_string());
        group_of.push(g);
    }

    let n = node_ids.len();
    let mut side: Vec<Option<Side>> = vec![None; n];
    let mut seen = BTreeSet::new();
    let mut report = LoadReport::default();
    for (lineno, line) in edges.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(Error::Parse {
                path: "<edges>".into(),
                line: lineno + 1,
                message: format!("expected `u v`, got `{line}`"),
            });
        };
        let u = *index
            .get(a)
            .ok_or_else(|| Error::MissingAttribute(a.to_string()))?;
        let v = *index
            .get(b)
            .ok_or_else(|| Error::MissingAttribute(b.to_string()))?;
        if bipartite {
            for (node, s) in [(u, Side::Left), (v, Side::Right)] {
                match side[node] {
                    None => side[node] = Some(s),
                    Some(prev) if prev != s => {
                        return Err(Error::Parse {
                            path: "<edges>".into(),
                            line: lineno + 1,
                            message: format!(
                                "node `{}` appears on both sides of a bipartite edge list",
                                node_ids[node]
                            ),
                        })
                    }
                    _ => {}
                }
            }
        }
        if u == v {
            report.self_loops += 1;
            continue;
        }
        if !seen.insert((u.min(v), u.max(v))) {
            report.duplicate_edges += 1;
        }
    }
    if report.self_loops + report.duplicate_edges > 0 {
        log::warn!(
            "dropped {} duplicate edges and {} self-loops",
            report.duplicate_edges,
            report.self_loops
        );
    }

    let sides = bipartite.then(|| side.iter().map(|s| s.unwrap_or(Side::Left)).collect());
    let graph = Graph::new(n, seen.into_iter().collect(), sides)?;
    let partition = SensitivePartition::new(group_of, labels)?;
    Ok(Dataset {
        graph,
        partition,
        node_ids,
        report,
    })
}

/// Edge list and attribute file contents for `graph`, using `node_ids`.
pub fn format_edge_list(graph: &Graph, node_ids: &[String]) -> String {
    let mut out = String::new();
    for &(u, v) in graph.edges() {
        let (a, b) = match graph.sides() {
            Some(s) if s[u] == Side::Right => (v, u),
            _ => (u, v),
        };
        out.push_str(&node_ids[a]);
        out.push(' ');
        out.push_str(&node_ids[b]);
        out.push('\n');
    }
    out
}

pub fn format_attributes(partition: &SensitivePartition, node_ids: &[String]) -> String {
    let mut out = String::new();
    for (v, id) in node_ids.iter().enumerate() {
        out.push_str(id);
        out.push(',');
        out.push_str(&partition.labels()[partition.group_of(v)]);
        out.push('\n');
    }
    out
}

/// Train graph plus held-out positive and sampled negative pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_graph: Graph,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
}

/// Holds out `floor(test_frac * |E|)` edges and the same number of non-edges.
///
/// Edges are drawn in a seeded random order; a draw is rejected if removing
/// it would leave either endpoint without a train edge. Negatives are uniform
/// candidate non-edges whose endpoints both keep a train edge.
pub fn split(graph: &Graph, test_frac: f64, seed: u64) -> Result<DataSplit> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::Split(format!("test fraction {test_frac} not in (0, 1)")));
    }
    if graph.edge_count() < 2 {
        return Err(Error::Split("graph needs at least two edges".into()));
    }
    let target = (test_frac * graph.edge_count() as f64).floor() as usize;
    if target == 0 {
        return Err(Error::Split(format!(
            "test fraction {test_frac} holds out no edges of {}",
            graph.edge_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    order.shuffle(&mut rng);
    let mut degree: Vec<usize> = (0..graph.node_count()).map(|v| graph.degree(v)).collect();
    let mut held = vec![false; graph.edge_count()];
    let mut test_pos = Vec::with_capacity(target);
    for &e in &order {
        if test_pos.len() == target {
            break;
        }
        let (u, v) = graph.edges()[e];
        if degree[u] < 2 || degree[v] < 2 {
            continue;
        }
        degree[u] -= 1;
        degree[v] -= 1;
        held[e] = true;
        test_pos.push((u, v));
    }
    if test_pos.len() < target {
        return Err(Error::Split(format!(
            "only {} of {target} edges can be held out without isolating a node; use a smaller test fraction",
            test_pos.len()
        )));
    }

    let train_edges: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .zip(&held)
        .filter(|(_, &h)| !h)
        .map(|(&e, _)| e)
        .collect();
    let train_graph = graph.with_edges(train_edges)?;

    let covered: Vec<usize> = (0..graph.node_count())
        .filter(|&v| train_graph.degree(v) > 0)
        .collect();
    let test_neg = sample_non_edges(graph, &covered, target, &mut rng)?;

    Ok(DataSplit {
        train_graph,
        test_pos,
        test_neg,
        seed,
    })
}

/// Uniform distinct candidate non-edges among `nodes`.
fn sample_non_edges(
    graph: &Graph,
    nodes: &[usize],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    let available = count_non_edges(graph, nodes);
    if available < count {
        return Err(Error::Split(format!(
            "need {count} negative pairs but only {available} non-edges exist among covered nodes"
        )));
    }
    let mut chosen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    // Rejection sampling; dense graphs fall back to enumerating.
    let max_attempts = 64 * count + 10_000;
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let a = nodes[rng.gen_range(0..nodes.len())];
        let b = nodes[rng.gen_range(0..nodes.len())];
        if !graph.is_candidate(a, b) || graph.has_edge(a, b) {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if chosen.insert(key) {
            out.push(key);
        }
    }
    if out.len() < count {
        let mut rest = Vec::new();
        for (x, &a) in nodes.iter().enumerate() {
            for &b in &nodes[x + 1..] {
                let key = (a.min(b), a.max(b));
                if graph.is_candidate(a, b) && !graph.has_edge(a, b) && !chosen.contains(&key) {
                    rest.push(key);
                }
            }
        }
        rest.shuffle(rng);
        out.extend(rest.into_iter().take(count - out.len()));
    }
    Ok(out)
}

fn count_non_edges(graph: &Graph, nodes: &[usize]) -> usize {
    let mut in_set = vec![false; graph.node_count()];
    for &v in nodes {
        in_set[v] = true;
    }
    let candidates = match graph.sides() {
        None => nodes.len() * nodes.len().saturating_sub(1) / 2,
        Some(s) => {
            let left = nodes.iter().filter(|&&v| s[v] == Side::Left).count();
            left * (nodes.len() - left)
        }
    };
    let edges = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| in_set[u] && in_set[v])
        .count();
    candidates - edges
}
