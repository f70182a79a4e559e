//! Global graph representation, dataset ingestion, and label splitting.
//!
//! Datasets live in a directory with three files:
//!   meta.json   {"name": str, "n": int, "d": int, "c": int}
//!   nodes.tsv   `<node_id>\t<label_id|-1>\t<f_1>,<f_2>,...,<f_d>`
//!   edges.tsv   `<u>\t<v>` with u < v, one undirected edge per line

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::child_rng;
use crate::sparse::CsrMatrix;

/// The full graph: ground truth for oracles and centralized baselines.
#[derive(Debug, Clone)]
pub struct GlobalGraph {
    pub name: String,
    pub n: usize,
    /// Undirected edges, stored once as (u, v) with u < v, sorted.
    pub edges: Vec<(u32, u32)>,
    /// Dense n x d feature matrix.
    pub features: Array2<f64>,
    /// Per-node class id; None marks a node unlabeled in the source data.
    pub labels: Vec<Option<u32>>,
    pub c: usize,
    pub d: usize,
}

impl GlobalGraph {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        edges: Vec<(u32, u32)>,
        features: Array2<f64>,
        labels: Vec<Option<u32>>,
        c: usize,
    ) -> Result<GlobalGraph> {
        let d = features.ncols();
        let g = GlobalGraph {
            name: name.into(),
            n,
            edges,
            features,
            labels,
            c,
            d,
        };
        g.check_invariants()?;
        Ok(g)
    }

    fn check_invariants(&self) -> Result<()> {
        if self.features.nrows() != self.n || self.labels.len() != self.n {
            return Err(Error::Dim(format!(
                "graph {}: rows {} labels {} vs n {}",
                self.name,
                self.features.nrows(),
                self.labels.len(),
                self.n
            )));
        }
        let mut prev: Option<(u32, u32)> = None;
        for &(u, v) in &self.edges {
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop edge {u}-{v}")));
            }
            if u > v || v as usize >= self.n {
                return Err(Error::InvalidArgument(format!("bad edge {u}-{v}")));
            }
            if prev == Some((u, v)) {
                return Err(Error::InvalidArgument(format!("duplicate edge {u}-{v}")));
            }
            prev = Some((u, v));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of {}", self.name)));
        }
        for (node, lab) in self.labels.iter().enumerate() {
            if let Some(l) = lab {
                if *l as usize >= self.c {
                    return Err(Error::InvalidArgument(format!(
                        "node {node}: label {l} >= c {}",
                        self.c
                    )));
                }
            }
        }
        Ok(())
    }

    /// Degree of every node (self-loops excluded; none exist by invariant).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Sorted adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        adj
    }
}

#[derive(Debug, Deserialize)]
struct Meta {
    name: String,
    n: usize,
    d: usize,
    c: usize,
}

/// Load a dataset directory. Node ids must be 0..n-1 in file order.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<GlobalGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_file = File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_reader(BufReader::new(meta_file))
        .map_err(|e| Error::parse(meta_path.display().to_string(), 0, e.to_string()))?;

    let nodes_path = dir.join("nodes.tsv");
    let nodes_name = nodes_path.display().to_string();
    let file = File::open(&nodes_path).map_err(|e| Error::io(&nodes_path, e))?;
    let mut features = Array2::zeros((meta.n, meta.d));
    let mut labels = vec![None; meta.n];
    let mut node_count = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(&nodes_path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let id: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&nodes_name, lineno, "bad node id"))?;
        if id != node_count {
            return Err(Error::parse(
                &nodes_name,
                lineno,
                format!("node id {id} out of order, expected {node_count}"),
            ));
        }
        if id >= meta.n {
            return Err(Error::parse(&nodes_name, lineno, format!("node id {id} >= n")));
        }
        let label: i64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&nodes_name, lineno, "bad label"))?;
        if label >= 0 {
            if label as usize >= meta.c {
                return Err(Error::parse(
                    &nodes_name,
                    lineno,
                    format!("label {label} >= c {}", meta.c),
                ));
            }
            labels[id] = Some(label as u32);
        }
        let feat_str = parts
            .next()
            .ok_or_else(|| Error::parse(&nodes_name, lineno, "missing features"))?;
        let mut k = 0usize;
        for tok in feat_str.split(',') {
            if k >= meta.d {
                return Err(Error::parse(
                    &nodes_name,
                    lineno,
                    format!("more than d={} features", meta.d),
                ));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(&nodes_name, lineno, format!("bad feature '{tok}'")))?;
            features[[id, k]] = v;
            k += 1;
        }
        if k != meta.d {
            return Err(Error::parse(
                &nodes_name,
                lineno,
                format!("expected d={} features, got {k}", meta.d),
            ));
        }
        node_count += 1;
    }
    if node_count != meta.n {
        return Err(Error::parse(
            &nodes_name,
            node_count,
            format!("expected n={} nodes, got {node_count}", meta.n),
        ));
    }

    let edges_path = dir.join("edges.tsv");
    let edges_name = edges_path.display().to_string();
    let file = File::open(&edges_path).map_err(|e| Error::io(&edges_path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(&edges_path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let u: u32 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&edges_name, lineno, "bad edge endpoint"))?;
        let v: u32 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(&edges_name, lineno, "bad edge endpoint"))?;
        if u == v {
            return Err(Error::parse(&edges_name, lineno, format!("self-loop {u} {v}")));
        }
        if u > v {
            return Err(Error::parse(&edges_name, lineno, format!("edge {u} {v} not u < v")));
        }
        if v as usize >= meta.n {
            return Err(Error::parse(&edges_name, lineno, format!("endpoint {v} >= n")));
        }
        edges.push((u, v));
    }
    let before = edges.len();
    edges.sort_unstable();
    edges.dedup();
    if edges.len() != before {
        return Err(Error::parse(&edges_name, 0, "duplicate edges"));
    }

    GlobalGraph::new(meta.name, meta.n, edges, features, labels, meta.c)
}

/// Row-stochastic self-loop adjacency: each row r has value 1/(deg(r)+1) at
/// the self position and at every neighbor.
pub fn normalized_self_loop_adjacency(g: &GlobalGraph) -> CsrMatrix {
    let adj = g.adjacency();
    let mut row_ptr = Vec::with_capacity(g.n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for v in 0..g.n {
        let w = 1.0 / (adj[v].len() as f64 + 1.0);
        let mut inserted_self = false;
        for &u in &adj[v] {
            if !inserted_self && u as usize > v {
                col_idx.push(v as u32);
                values.push(w);
                inserted_self = true;
            }
            col_idx.push(u);
            values.push(w);
        }
        if !inserted_self {
            col_idx.push(v as u32);
            values.push(w);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        rows: g.n,
        cols: g.n,
        row_ptr,
        col_idx,
        values,
    }
}

/// Fraction of edges whose endpoints share a label. Requires all nodes
/// labeled and at least one edge.
pub fn edge_homophily(g: &GlobalGraph) -> Result<f64> {
    if g.edges.is_empty() {
        return Err(Error::InvalidArgument("edge_homophily: empty edge set".into()));
    }
    let mut same = 0usize;
    for &(u, v) in &g.edges {
        let (a, b) = (g.labels[u as usize], g.labels[v as usize]);
        match (a, b) {
            (Some(a), Some(b)) => {
                if a == b {
                    same += 1;
                }
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "edge_homophily: unlabeled node".into(),
                ))
            }
        }
    }
    Ok(same as f64 / g.edges.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

/// Disjoint train/val/test masks covering all of V.
#[derive(Debug, Clone)]
pub struct LabelSplit {
    pub roles: Vec<SplitRole>,
}

impl LabelSplit {
    pub fn train_nodes(&self) -> Vec<u32> {
        self.nodes_with(SplitRole::Train)
    }

    pub fn val_nodes(&self) -> Vec<u32> {
        self.nodes_with(SplitRole::Val)
    }

    pub fn test_nodes(&self) -> Vec<u32> {
        self.nodes_with(SplitRole::Test)
    }

    pub fn nodes_with(&self, role: SplitRole) -> Vec<u32> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn is_train(&self, v: u32) -> bool {
        self.roles[v as usize] == SplitRole::Train
    }
}

/// Uniform split without replacement: shuffle node ids with the seeded
/// stream, take floor(n * train_ratio) for train, then floor(n * val_ratio)
/// for val, rest test.
pub fn split_labels(
    g: &GlobalGraph,
    train_ratio: f64,
    val_ratio: f64,
    seed: u64,
) -> Result<LabelSplit> {
    if train_ratio < 0.0 || val_ratio < 0.0 {
        return Err(Error::InvalidArgument("negative split ratio".into()));
    }
    if train_ratio + val_ratio > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "split ratios sum to {} > 1",
            train_ratio + val_ratio
        )));
    }
    let mut order: Vec<u32> = (0..g.n as u32).collect();
    let mut rng = child_rng(seed, "label-split", 0);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (g.n as f64 * train_ratio).floor() as usize;
    let n_val = (g.n as f64 * val_ratio).floor() as usize;
    let mut roles = vec![SplitRole::Test; g.n];
    for &v in &order[..n_train] {
        roles[v as usize] = SplitRole::Train;
    }
    for &v in &order[n_train..n_train + n_val] {
        roles[v as usize] = SplitRole::Val;
    }
    Ok(LabelSplit { roles })
}
