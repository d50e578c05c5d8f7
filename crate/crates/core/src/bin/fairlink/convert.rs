//! One-shot converters from public dataset formats to the edge-list plus
//! attribute-CSV pair the library reads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use fairlink::{Error, Result};

/// Edge list and attribute rows ready to be written.
#[derive(Debug, Default, PartialEq)]
pub struct Converted {
    pub edges: Vec<(String, String)>,
    pub attrs: Vec<(String, String)>,
}

impl Converted {
    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let mut edges = String::new();
        for (u, v) in &self.edges {
            edges.push_str(&format!("{u} {v}\n"));
        }
        let path = out.join("edges.txt");
        fs::write(&path, edges).map_err(|e| io_err(&path, e))?;
        let path = out.join("attrs.csv");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        for (id, label) in &self.attrs {
            w.write_record([id, label])?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Gml {
    Scalar(String),
    List(Vec<(String, Gml)>),
}

fn gml_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            for c in chars.by_ref() {
                if c == '"' {
                    break;
                }
                s.push(c);
            }
            out.push(format!("\"{s}"));
        } else if c == '[' || c == ']' {
            out.push(c.to_string());
            chars.next();
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == '[' || c == ']' {
                    break;
                }
                s.push(c);
                chars.next();
            }
            out.push(s);
        }
    }
    out
}

fn gml_list(tokens: &[String], pos: &mut usize, path: &Path) -> Result<Vec<(String, Gml)>> {
    let mut items = Vec::new();
    while *pos < tokens.len() {
        let key = tokens[*pos].clone();
        if key == "]" {
            *pos += 1;
            return Ok(items);
        }
        *pos += 1;
        let Some(value) = tokens.get(*pos) else {
            return Err(parse_err(path, 0, format!("key `{key}` has no value")));
        };
        *pos += 1;
        let value = if value == "[" {
            Gml::List(gml_list(tokens, pos, path)?)
        } else {
            Gml::Scalar(value.trim_start_matches('"').to_string())
        };
        items.push((key, value));
    }
    Ok(items)
}

fn scalar<'a>(items: &'a [(String, Gml)], key: &str) -> Option<&'a str> {
    items.iter().find_map(|(k, v)| match v {
        Gml::Scalar(s) if k == key => Some(s.as_str()),
        _ => None,
    })
}

/// Polblogs GML: undirected, deduplicated, self-loops dropped, restricted to
/// the largest connected component. The party label is the node `value`.
pub fn polblogs(gml_path: &Path) -> Result<Converted> {
    let tokens = gml_tokens(&read(gml_path)?);
    let mut pos = 0;
    let top = gml_list(&tokens, &mut pos, gml_path)?;
    let graph = top
        .iter()
        .find_map(|(k, v)| match v {
            Gml::List(items) if k == "graph" => Some(items),
            _ => None,
        })
        .ok_or_else(|| parse_err(gml_path, 0, "no `graph [ ... ]` block"))?;

    let mut label: BTreeMap<i64, String> = BTreeMap::new();
    let mut edges: BTreeSet<(i64, i64)> = BTreeSet::new();
    for (k, v) in graph {
        let Gml::List(items) = v else { continue };
        let num = |key: &str| -> Result<i64> {
            scalar(items, key)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(gml_path, 0, format!("{k} without integer `{key}`")))
        };
        match k.as_str() {
            "node" => {
                let value = scalar(items, "value")
                    .ok_or_else(|| parse_err(gml_path, 0, "node without `value`"))?;
                label.insert(num("id")?, value.to_string());
            }
            "edge" => {
                let (a, b) = (num("source")?, num("target")?);
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
            _ => {}
        }
    }

    let keep = largest_component(label.keys().copied(), &edges);
    Ok(Converted {
        edges: edges
            .iter()
            .filter(|(a, _)| keep.contains(a))
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        attrs: label
            .into_iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(id, l)| (id.to_string(), l))
            .collect(),
    })
}

/// Nodes of the largest connected component; ties go to the component with
/// the smallest node id.
fn largest_component(nodes: impl Iterator<Item = i64>, edges: &BTreeSet<(i64, i64)>) -> BTreeSet<i64> {
    let mut adj: BTreeMap<i64, Vec<i64>> = nodes.map(|v| (v, Vec::new())).collect();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = BTreeSet::new();
    let mut best = BTreeSet::new();
    for &start in adj.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &adj[&v] {
                if comp.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.extend(comp.iter().copied());
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// MovieLens age bin boundaries.
pub const AGE_BINS: [u32; 6] = [18, 25, 35, 45, 50, 56];

pub fn age_label(age: u32) -> String {
    match AGE_BINS.iter().position(|&b| age < b) {
        Some(0) => format!("<{}", AGE_BINS[0]),
        Some(k) => format!("{}-{}", AGE_BINS[k - 1], AGE_BINS[k] - 1),
        None => format!("{}+", AGE_BINS[AGE_BINS.len() - 1]),
    }
}

/// ML100k ratings as a bipartite user-movie graph. Users (`u<id>`) are
/// labelled by age bin, movies (`m<id>`) by the single label `movie`.
pub fn ml100k(data_path: &Path, users_path: &Path) -> Result<Converted> {
    let mut users = Vec::new();
    for (k, line) in read(users_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        let (Some(id), Some(age)) = (fields.first(), fields.get(1)) else {
            return Err(parse_err(users_path, k + 1, "expected `id|age|...`"));
        };
        let age: u32 = age
            .trim()
            .parse()
            .map_err(|_| parse_err(users_path, k + 1, format!("bad age `{age}`")))?;
        users.push((format!("u{}", id.trim()), age_label(age)));
    }
    let mut edges = BTreeSet::new();
    let mut movies = BTreeSet::new();
    for (k, line) in read(data_path)?.lines().enumerate() {
        let mut fields = line.split_whitespace();
        match (fields.next(), fields.next()) {
            (Some(u), Some(m)) => {
                let m: u64 = m
                    .parse()
                    .map_err(|_| parse_err(data_path, k + 1, format!("bad movie id `{m}`")))?;
                movies.insert(m);
                edges.insert((format!("u{u}"), m));
            }
            (None, _) => continue,
            _ => return Err(parse_err(data_path, k + 1, "expected `user item rating timestamp`")),
        }
    }
    let mut attrs = users;
    attrs.extend(movies.iter().map(|m| (format!("m{m}"), "movie".to_string())));
    Ok(Converted {
        edges: edges.into_iter().map(|(u, m)| (u, format!("m{m}"))).collect(),
        attrs,
    })
}

/// SNAP Facebook ego networks. Gender comes from the `gender;` features of
/// each ego's `.featnames`/`.feat`/`.egofeat` files; nodes without a gender
/// value are dropped with their edges. Edges come from `facebook_combined.txt`
/// when present, else from the ego `.edges` files plus ego-to-alter links.
pub fn facebook(dir: &Path) -> Result<Converted> {
    let mut egos: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "featnames") {
            if let Some(stem) = path.file_stem() {
                egos.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    egos.sort();
    if egos.is_empty() {
        return Err(Error::Config(format!("no *.featnames files in {}", dir.display())));
    }

    let mut gender: BTreeMap<u64, String> = BTreeMap::new();
    let mut conflicts = 0usize;
    let mut edges: BTreeSet<(u64, u64)> = BTreeSet::new();
    let combined = dir.join("facebook_combined.txt");
    let use_combined = combined.exists();

    for ego in &egos {
        let ego_id: u64 = ego
            .parse()
            .map_err(|_| Error::Config(format!("ego file stem `{ego}` is not a node id")))?;
        let names_path = dir.join(format!("{ego}.featnames"));
        let mut gender_cols: Vec<(usize, String)> = Vec::new();
        for (k, line) in read(&names_path)?.lines().enumerate() {
            let Some((idx, name)) = line.split_once(' ') else { continue };
            if let Some(value) = name.strip_prefix("gender;") {
                let idx = idx
                    .parse()
                    .map_err(|_| parse_err(&names_path, k + 1, "bad feature index"))?;
                gender_cols.push((idx, value.trim().to_string()));
            }
        }
        let mut assign = |node: u64, feats: &[&str]| {
            let value = gender_cols
                .iter()
                .find(|(idx, _)| feats.get(*idx) == Some(&"1"))
                .map(|(_, v)| v.clone());
            if let Some(v) = value {
                match gender.get(&node) {
                    Some(old) if *old != v => conflicts += 1,
                    Some(_) => {}
                    None => {
                        gender.insert(node, v);
                    }
                }
            }
        };
        let feat_path = dir.join(format!("{ego}.feat"));
        let mut alters = Vec::new();
        for line in read(&feat_path)?.lines() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some((id, feats)) = fields.split_first() else { continue };
            let id: u64 = id
                .parse()
                .map_err(|_| parse_err(&feat_path, 0, format!("bad node id `{id}`")))?;
            alters.push(id);
            assign(id, feats);
        }
        let egofeat = dir.join(format!("{ego}.egofeat"));
        if egofeat.exists() {
            let text = read(&egofeat)?;
            let feats: Vec<&str> = text.split_whitespace().collect();
            assign(ego_id, &feats);
        }
        if !use_combined {
            for &a in &alters {
                edges.insert((ego_id.min(a), ego_id.max(a)));
            }
            let edges_path = dir.join(format!("{ego}.edges"));
            if edges_path.exists() {
                for (k, line) in read(&edges_path)?.lines().enumerate() {
                    if let Some((a, b)) = pair(line) {
                        if a != b {
                            edges.insert((a.min(b), a.max(b)));
                        }
                    } else if !line.trim().is_empty() {
                        return Err(parse_err(&edges_path, k + 1, "expected `u v`"));
                    }
                }
            }
        }
    }
    if use_combined {
        for (k, line) in read(&combined)?.lines().enumerate() {
            if let Some((a, b)) = pair(line) {
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            } else if !line.trim().is_empty() {
                return Err(parse_err(&combined, k + 1, "expected `u v`"));
            }
        }
    }
    if conflicts > 0 {
        log::warn!("{conflicts} conflicting gender value(s) across ego files; first seen kept");
    }

    let mut all_nodes: BTreeSet<u64> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    all_nodes.extend(gender.keys().copied());
    let dropped = all_nodes.iter().filter(|v| !gender.contains_key(v)).count();
    log::info!("dropping {dropped} node(s) without a gender value");
    Ok(Converted {
        edges: edges
            .into_iter()
            .filter(|(a, b)| gender.contains_key(a) && gender.contains_key(b))
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        attrs: gender.into_iter().map(|(id, g)| (id.to_string(), g)).collect(),
    })
}

fn pair(line: &str) -> Option<(u64, u64)> {
    let mut it = line.split_whitespace();
    Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
}

/// Counts that let users check a conversion against published statistics.
pub fn summary(c: &Converted) -> HashMap<&'static str, usize> {
    let labels: BTreeSet<&str> = c.attrs.iter().map(|(_, l)| l.as_str()).collect();
    HashMap::from([
        ("nodes", c.attrs.len()),
        ("edges", c.edges.len()),
        ("groups", labels.len()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polblogs_keeps_largest_component() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.gml");
        fs::write(
            &path,
            r#"Creator "test"
graph
[
  directed 1
  node [ id 1 label "a.com" value 0 source "x" ]
  node [ id 2 label "b [x]" value 1 ]
  node [ id 3 label "c" value 0 ]
  node [ id 4 label "d" value 1 ]
  node [ id 5 label "e" value 1 ]
  edge [ source 1 target 2 ]
  edge [ source 2 target 1 ]
  edge [ source 2 target 3 ]
  edge [ source 3 target 3 ]
  edge [ source 4 target 5 ]
]"#,
        )
        .unwrap();
        let c = polblogs(&path).unwrap();
        assert_eq!(c.edges, vec![("1".into(), "2".into()), ("2".into(), "3".into())]);
        assert_eq!(c.attrs.len(), 3);
        assert_eq!(c.attrs[1], ("2".into(), "1".into()));
    }

    #[test]
    fn age_bins() {
        assert_eq!(age_label(7), "<18");
        assert_eq!(age_label(18), "18-24");
        assert_eq!(age_label(24), "18-24");
        assert_eq!(age_label(49), "45-49");
        assert_eq!(age_label(56), "56+");
        let all: BTreeSet<String> = (1..100).map(age_label).collect();
        assert_eq!(all.len(), 7);
    }

    #[test]
    fn ml100k_is_bipartite_user_movie() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("u.data");
        let users = dir.path().join("u.user");
        fs::write(&data, "1\t10\t5\t1\n2\t10\t3\t2\n1\t11\t4\t3\n1\t10\t2\t4\n").unwrap();
        fs::write(&users, "1|24|M|x|1\n2|60|F|y|2\n").unwrap();
        let c = ml100k(&data, &users).unwrap();
        assert_eq!(c.edges.len(), 3);
        assert_eq!(
            c.attrs,
            vec![
                ("u1".into(), "18-24".into()),
                ("u2".into(), "56+".into()),
                ("m10".into(), "movie".into()),
                ("m11".into(), "movie".into()),
            ]
        );
        let d = fairlink::graph::parse_edge_list(&edges_text(&c), &attrs_text(&c), true).unwrap();
        assert!(d.graph.is_bipartite());
    }

    fn edges_text(c: &Converted) -> String {
        c.edges.iter().map(|(u, v)| format!("{u} {v}\n")).collect()
    }

    fn attrs_text(c: &Converted) -> String {
        c.attrs.iter().map(|(u, l)| format!("{u},{l}\n")).collect()
    }

    #[test]
    fn facebook_drops_unlabeled_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(p.join("0.featnames"), "0 birthday;anonymized feature 1\n1 gender;anonymized feature 77\n2 gender;anonymized feature 78\n").unwrap();
        fs::write(p.join("0.feat"), "1 0 1 0\n2 1 0 1\n3 0 0 0\n").unwrap();
        fs::write(p.join("0.egofeat"), "0 0 1\n").unwrap();
        fs::write(p.join("0.edges"), "1 2\n2 3\n").unwrap();
        let c = facebook(p).unwrap();
        assert_eq!(
            c.attrs,
            vec![
                ("0".into(), "anonymized feature 78".into()),
                ("1".into(), "anonymized feature 77".into()),
                ("2".into(), "anonymized feature 78".into()),
            ]
        );
        assert_eq!(
            c.edges,
            vec![("0".into(), "1".into()), ("0".into(), "2".into()), ("1".into(), "2".into())]
        );
        let s = summary(&c);
        assert_eq!((s["nodes"], s["edges"], s["groups"]), (3, 3, 2));
    }
}
