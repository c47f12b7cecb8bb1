//! Edge-list ingestion, train/validation/test splitting and negative sampling.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{GapError, Result};

/// Bijection between the labels found in an input file and contiguous node indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `label`, assigning the next free one on first sight.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One label per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = IdMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let label = line.trim();
            if label.is_empty() {
                continue;
            }
            if map.get(label).is_some() {
                return Err(GapError::Parse {
                    line: lineno + 1,
                    msg: format!("duplicate label {label:?}"),
                });
            }
            map.intern(label);
        }
        Ok(map)
    }

    /// Hex SHA-256 of [`IdMap::to_text`]; used to detect checkpoint/split mismatches.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Counts of lines dropped during ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// An unweighted graph over contiguous node indices `0..n`.
///
/// `base_edges` holds one entry per input edge: ordered pairs for a directed
/// graph, one orientation of each unordered pair for an undirected graph.
/// `edges` holds every stored orientation (both, when undirected), and the
/// adjacency lists are derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    base_edges: Vec<(usize, usize)>,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    id_map: IdMap,
}

impl Graph {
    /// Builds a graph from already-deduplicated base edges.
    pub fn from_base_edges(
        num_nodes: usize,
        base_edges: Vec<(usize, usize)>,
        directed: bool,
        id_map: IdMap,
    ) -> Result<Self> {
        if id_map.len() != num_nodes {
            return Err(GapError::arg(format!(
                "id map has {} labels for {num_nodes} nodes",
                id_map.len()
            )));
        }
        let mut out_adj = vec![Vec::new(); num_nodes];
        let mut in_adj = vec![Vec::new(); num_nodes];
        let mut seen = HashSet::with_capacity(base_edges.len() * 2);
        let mut edges = Vec::with_capacity(base_edges.len() * if directed { 1 } else { 2 });
        for &(u, v) in &base_edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GapError::arg(format!("edge ({u},{v}) out of range for n={num_nodes}")));
            }
            if u == v {
                return Err(GapError::arg(format!("self-loop at node {u}")));
            }
            let orientations: &[(usize, usize)] = if directed { &[(u, v)] } else { &[(u, v), (v, u)] };
            for &(a, b) in orientations {
                if !seen.insert((a, b)) {
                    return Err(GapError::arg(format!("duplicate edge ({a},{b})")));
                }
                edges.push((a, b));
                out_adj[a].push(b);
                in_adj[b].push(a);
            }
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Graph {
            num_nodes,
            directed,
            base_edges,
            edges,
            out_adj,
            in_adj,
            id_map,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of base edges (`m`).
    pub fn num_edges(&self) -> usize {
        self.base_edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn base_edges(&self) -> &[(usize, usize)] {
        &self.base_edges
    }

    /// Every stored orientation.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_neighbors(&self, u: usize) -> &[usize] {
        &self.out_adj[u]
    }

    pub fn in_neighbors(&self, u: usize) -> &[usize] {
        &self.in_adj[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.out_adj[u].binary_search(&v).is_ok()
    }

    pub fn id_map(&self) -> &IdMap {
        &self.id_map
    }

    /// Edge-list text that [`parse_edge_list`] reads back into an identical graph.
    ///
    /// Nodes that would otherwise be introduced out of index order (or never,
    /// when isolated) are emitted as self-loop lines, which the parser indexes
    /// and then drops.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut seen = vec![false; self.num_nodes];
        let mut next_unseen = 0usize;
        let introduce = |w: usize, seen: &mut Vec<bool>, next_unseen: &mut usize, out: &mut String| {
            if seen[w] {
                return;
            }
            while *next_unseen < w {
                if !seen[*next_unseen] {
                    let l = self.id_map.label(*next_unseen);
                    let _ = writeln!(out, "{l} {l}");
                    seen[*next_unseen] = true;
                }
                *next_unseen += 1;
            }
            seen[w] = true;
        };
        for &(u, v) in &self.base_edges {
            introduce(u, &mut seen, &mut next_unseen, &mut out);
            introduce(v, &mut seen, &mut next_unseen, &mut out);
            let _ = writeln!(out, "{} {}", self.id_map.label(u), self.id_map.label(v));
        }
        for (w, was_seen) in seen.iter().enumerate() {
            if !was_seen {
                let l = self.id_map.label(w);
                let _ = writeln!(out, "{l} {l}");
            }
        }
        out
    }
}

/// Parses an edge list, also returning how many lines were dropped.
pub fn parse_edge_list_with_stats(text: &str, directed: bool) -> Result<(Graph, IngestStats)> {
    let mut id_map = IdMap::new();
    let mut stats = IngestStats::default();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut base = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (a, b) = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(GapError::Parse {
                    line: lineno + 1,
                    msg: format!("expected two node labels, got {line:?}"),
                })
            }
        };
        let u = id_map.intern(a);
        let v = id_map.intern(b);
        if u == v {
            stats.self_loops += 1;
            continue;
        }
        let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
        if !seen.insert(key) {
            stats.duplicates += 1;
            continue;
        }
        base.push((u, v));
    }
    if base.is_empty() {
        return Err(GapError::Parse {
            line: 0,
            msg: "edge list contains no edges".into(),
        });
    }
    let n = id_map.len();
    let g = Graph::from_base_edges(n, base, directed, id_map)?;
    Ok((g, stats))
}

/// Parses whitespace-separated edge-list text; `#` lines are comments.
pub fn parse_edge_list(text: &str, directed: bool) -> Result<Graph> {
    let (g, stats) = parse_edge_list_with_stats(text, directed)?;
    if stats.self_loops > 0 || stats.duplicates > 0 {
        info!(
            "dropped {} self-loops and {} duplicate edges",
            stats.self_loops, stats.duplicates
        );
    }
    Ok(g)
}

/// Which partition an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl Partition {
    pub fn tag(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "train" => Some(Partition::Train),
            "valid" => Some(Partition::Valid),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

/// A partition of a graph's base edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub train_edges: Vec<(usize, usize)>,
    pub valid_edges: Vec<(usize, usize)>,
    pub test_edges: Vec<(usize, usize)>,
    pub train_graph: Graph,
    pub ratio: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

fn floor_fraction(frac: f64, total: usize) -> usize {
    // guards against 0.29 * 100 = 28.999...
    ((frac * total as f64) + 1e-9).floor() as usize
}

/// Randomly splits base edges: `floor(ratio * m)` go to train+valid (of which
/// `valid_fraction` are validation), the remainder to test.
pub fn split_edges(g: &Graph, ratio: f64, valid_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(GapError::arg(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(GapError::arg(format!(
            "valid fraction must lie in [0, 1), got {valid_fraction}"
        )));
    }
    let m = g.num_edges();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = crate::rng::seeded(seed);
    order.shuffle(&mut rng);

    let n_keep = floor_fraction(ratio, m);
    let n_valid = floor_fraction(valid_fraction, n_keep);
    let mut tags = vec![Partition::Test; m];
    for (rank, &e) in order.iter().enumerate().take(n_keep) {
        tags[e] = if rank < n_valid { Partition::Valid } else { Partition::Train };
    }
    split_from_tags(g, &tags, ratio, valid_fraction, seed)
}

/// Rebuilds a split from per-base-edge partition tags (in base-edge order).
pub fn split_from_tags(
    g: &Graph,
    tags: &[Partition],
    ratio: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<EdgeSplit> {
    if tags.len() != g.num_edges() {
        return Err(GapError::arg("one partition tag per edge required"));
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (&e, &tag) in g.base_edges().iter().zip(tags) {
        match tag {
            Partition::Train => train.push(e),
            Partition::Valid => valid.push(e),
            Partition::Test => test.push(e),
        }
    }
    let train_graph = Graph::from_base_edges(g.num_nodes(), train.clone(), g.is_directed(), g.id_map().clone())?;
    Ok(EdgeSplit {
        train_edges: train,
        valid_edges: valid,
        test_edges: test,
        train_graph,
        ratio,
        valid_fraction,
        seed,
    })
}

/// Draws a node `t` with `t != s` and `(s, t)` not an edge, uniformly.
pub fn sample_negative<R: Rng + ?Sized>(g: &Graph, s: usize, rng: &mut R) -> Result<usize> {
    let n = g.num_nodes();
    if s >= n {
        return Err(GapError::arg(format!("node {s} out of range")));
    }
    let out = g.out_neighbors(s);
    let candidates = n - 1 - out.len();
    if candidates == 0 {
        return Err(GapError::NoCandidate(format!(
            "node {s} is adjacent to every other node"
        )));
    }
    if candidates * 8 >= n {
        loop {
            let t = rng.random_range(0..n);
            if t != s && out.binary_search(&t).is_err() {
                return Ok(t);
            }
        }
    }
    // sparse complement: pick the k-th candidate directly
    let mut k = rng.random_range(0..candidates);
    for t in 0..n {
        if t == s || out.binary_search(&t).is_ok() {
            continue;
        }
        if k == 0 {
            return Ok(t);
        }
        k -= 1;
    }
    unreachable!("candidate count out of sync with adjacency")
}

/// Draws `count` distinct ordered non-self pairs absent from the graph and from `exclude`.
pub fn sample_nonedges<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    let excluded_extra = exclude
        .iter()
        .filter(|&&(u, v)| u != v && u < n && v < n && !g.has_edge(u, v))
        .count();
    let total_pairs = n * n.saturating_sub(1);
    let available = total_pairs - g.edges().len() - excluded_extra;
    if count > available {
        return Err(GapError::NoCandidate(format!(
            "requested {count} non-edges but only {available} exist"
        )));
    }
    let is_free = |u: usize, v: usize| u != v && !g.has_edge(u, v) && !exclude.contains(&(u, v));

    if count * 4 >= available {
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| is_free(u, v))
            .collect();
        let (chosen, _) = all.partial_shuffle(rng, count);
        return Ok(chosen.to_vec());
    }
    let mut picked = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if is_free(u, v) && picked.insert((u, v)) {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// Parses a "node_label community_id" file into per-node community indices
/// (contiguous, first-appearance order). Labels for unknown nodes are ignored.
pub fn parse_labels(text: &str, id_map: &IdMap) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; id_map.len()];
    let mut communities: HashMap<String, usize> = HashMap::new();
    let mut unknown = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(GapError::Parse {
                line: lineno + 1,
                msg: format!("expected \"node community\", got {line:?}"),
            });
        }
        let next = communities.len();
        let c = *communities.entry(tokens[1].to_string()).or_insert(next);
        match id_map.get(tokens[0]) {
            Some(i) => out[i] = Some(c),
            None => unknown += 1,
        }
    }
    if unknown > 0 {
        info!("ignored {unknown} labels for nodes absent from the graph");
    }
    Ok(out)
}

/// Plain-text split manifest: a comment header, then "u v tag" per base edge.
pub fn write_manifest(g: &Graph, split: &EdgeSplit) -> String {
    let mut tags: HashMap<(usize, usize), Partition> = HashMap::new();
    for &e in &split.train_edges {
        tags.insert(e, Partition::Train);
    }
    for &e in &split.valid_edges {
        tags.insert(e, Partition::Valid);
    }
    for &e in &split.test_edges {
        tags.insert(e, Partition::Test);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# gap-split n={} m={} directed={} ratio={} valid_fraction={} seed={}",
        g.num_nodes(),
        g.num_edges(),
        g.is_directed(),
        split.ratio,
        split.valid_fraction,
        split.seed
    );
    let ids = g.id_map();
    for e in g.base_edges() {
        let tag = tags.get(e).copied().unwrap_or(Partition::Test);
        let _ = writeln!(out, "{} {} {}", ids.label(e.0), ids.label(e.1), tag.tag());
    }
    out
}

/// Reads a manifest written by [`write_manifest`], resolving labels through `id_map`.
pub fn read_manifest(text: &str, id_map: &IdMap) -> Result<(Graph, EdgeSplit)> {
    let mut header: HashMap<String, String> = HashMap::new();
    let mut base = Vec::new();
    let mut tags = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let err = |msg: String| GapError::Parse { line: lineno + 1, msg };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(err(format!("expected \"u v tag\", got {line:?}")));
        }
        let u = id_map
            .get(tokens[0])
            .ok_or_else(|| err(format!("unknown node {:?}", tokens[0])))?;
        let v = id_map
            .get(tokens[1])
            .ok_or_else(|| err(format!("unknown node {:?}", tokens[1])))?;
        let tag = Partition::from_tag(tokens[2]).ok_or_else(|| err(format!("bad tag {:?}", tokens[2])))?;
        base.push((u, v));
        tags.push(tag);
    }
    let parse_field = |key: &str| -> Result<&String> {
        header
            .get(key)
            .ok_or_else(|| GapError::Compat(format!("manifest header lacks {key}")))
    };
    let directed = parse_field("directed")? == "true";
    let num = |key: &str| -> Result<f64> {
        parse_field(key)?
            .parse::<f64>()
            .map_err(|_| GapError::Compat(format!("manifest header field {key} is not numeric")))
    };
    let ratio = num("ratio")?;
    let valid_fraction = num("valid_fraction")?;
    let seed = parse_field("seed")?
        .parse::<u64>()
        .map_err(|_| GapError::Compat("manifest seed is not an integer".into()))?;
    let n = num("n")? as usize;
    if n != id_map.len() {
        return Err(GapError::Compat(format!(
            "manifest declares n={n} but id map has {} nodes",
            id_map.len()
        )));
    }
    let g = Graph::from_base_edges(n, base, directed, id_map.clone())?;
    let split = split_from_tags(&g, &tags, ratio, valid_fraction, seed)?;
    Ok((g, split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn complete(n: usize) -> Graph {
        let mut text = String::new();
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    text.push_str(&format!("{u} {v}\n"));
                }
            }
        }
        parse_edge_list(&text, true).unwrap()
    }

    #[test]
    fn parses_small_directed() {
        let g = parse_edge_list("0 1\n1 2", true).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 1) && !g.has_edge(1, 0));
    }

    #[test]
    fn undirected_stores_both_orientations() {
        let g = parse_edge_list("a b\nb c\nc b\n", false).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.edges().len(), 4);
        assert!(g.has_edge(1, 0) && g.has_edge(0, 1));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_edge_list("a b b", true) {
            Err(GapError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_edge_list("# c\n0 1\n7\n", true) {
            Err(GapError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_edge_set_is_an_error() {
        assert!(parse_edge_list("# nothing\n", true).is_err());
        assert!(parse_edge_list("3 3\n", true).is_err());
    }

    #[test]
    fn drops_self_loops_and_duplicates() {
        let (g, stats) = parse_edge_list_with_stats("0 0\n0 1\n0 1\n1 0\n", true).unwrap();
        assert_eq!(stats, IngestStats { self_loops: 1, duplicates: 1 });
        assert_eq!(g.num_edges(), 2);
        let (g, stats) = parse_edge_list_with_stats("0 1\n1 0\n", false).unwrap();
        assert_eq!(stats.duplicates, 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn serialize_round_trips_with_isolated_nodes() {
        let text = "x x\nb c\nc x\nz z\n";
        for directed in [true, false] {
            let g = parse_edge_list(text, directed).unwrap();
            assert_eq!(g.num_nodes(), 4);
            let back = parse_edge_list(&g.serialize(), directed).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn split_boundaries() {
        let text: String = (0..10).map(|i| format!("{i} {}\n", i + 1)).collect();
        let g = parse_edge_list(&text, true).unwrap();
        let s = split_edges(&g, 1.0, 0.0, 3).unwrap();
        assert_eq!(s.train_edges.len(), 10);
        assert!(s.test_edges.is_empty());
        let s = split_edges(&g, 0.5, 0.0, 3).unwrap();
        assert_eq!((s.train_edges.len(), s.test_edges.len()), (5, 5));
        assert!(split_edges(&g, 1.5, 0.0, 3).is_err());
        assert!(split_edges(&g, 0.0, 0.0, 3).is_err());
        assert!(split_edges(&g, 0.5, 1.0, 3).is_err());
    }

    #[test]
    fn split_keeps_orientations_together() {
        let text: String = (0..40).map(|i| format!("{i} {}\n", (i * 7 + 3) % 41)).collect();
        let g = parse_edge_list(&text, false).unwrap();
        let s = split_edges(&g, 0.5, 0.1, 11).unwrap();
        for &(u, v) in &s.test_edges {
            assert!(!s.train_graph.has_edge(u, v) && !s.train_graph.has_edge(v, u));
        }
    }

    #[test]
    fn floor_of_fifteen_percent_of_cora_edge_count() {
        assert_eq!(floor_fraction(0.15, 5214), 782);
        assert_eq!(floor_fraction(0.29, 100), 29);
    }

    #[test]
    fn star_missing_one_leaf_forces_negative() {
        // node 0 links to 1..=5 except 3
        let g = parse_edge_list("0 1\n0 2\n0 4\n0 5\n3 1\n", true).unwrap();
        let s = g.id_map().get("0").unwrap();
        let w = g.id_map().get("3").unwrap();
        let mut rng = seeded(1);
        for _ in 0..200 {
            assert_eq!(sample_negative(&g, s, &mut rng).unwrap(), w);
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let g = complete(4);
        let mut rng = seeded(1);
        assert!(matches!(sample_negative(&g, 0, &mut rng), Err(GapError::NoCandidate(_))));
        assert!(sample_nonedges(&g, 1, &HashSet::new(), &mut rng).is_err());
    }

    #[test]
    fn path_graph_nonedge_membership() {
        let g = parse_edge_list("0 1\n1 2\n", false).unwrap();
        let mut rng = seeded(5);
        let pairs = sample_nonedges(&g, 1, &HashSet::new(), &mut rng).unwrap();
        let (u, v) = pairs[0];
        assert!(u != v && !g.has_edge(u, v));
        assert!(matches!((u, v), (0, 2) | (2, 0)));
    }

    #[test]
    fn labels_map_to_contiguous_communities() {
        let g = parse_edge_list("a b\nb c\n", true).unwrap();
        let labels = parse_labels("a 7\nb 3\nc 7\nq 1\n", g.id_map()).unwrap();
        assert_eq!(labels, vec![Some(0), Some(1), Some(0)]);
    }

    #[test]
    fn manifest_round_trip() {
        let text: String = (0..30).map(|i| format!("n{i} n{}\n", (i * 5 + 2) % 31)).collect();
        let g = parse_edge_list(&text, false).unwrap();
        let split = split_edges(&g, 0.55, 0.05, 9).unwrap();
        let manifest = write_manifest(&g, &split);
        let (g2, split2) = read_manifest(&manifest, g.id_map()).unwrap();
        assert_eq!(g2, g);
        assert_eq!(split2, split);
    }
}
