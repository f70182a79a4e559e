//! Graph partitioning into client subgraphs and client-view construction.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{GlobalGraph, LabelSplit};
use crate::rng::child_rng;
use crate::sparse::CsrMatrix;

/// Assignment of every node to one of K clients.
#[derive(Debug, Clone)]
pub struct Partition {
    pub k: usize,
    pub assignment: Vec<u32>,
}

impl Partition {
    pub fn client_nodes(&self) -> Vec<Vec<u32>> {
        let mut nodes = vec![Vec::new(); self.k];
        for (v, &c) in self.assignment.iter().enumerate() {
            nodes[c as usize].push(v as u32);
        }
        nodes
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.assignment.len() != n {
            return Err(Error::Dim("partition length != n".into()));
        }
        let mut counts = vec![0usize; self.k];
        for &c in &self.assignment {
            if c as usize >= self.k {
                return Err(Error::InvalidArgument(format!("client id {c} >= K")));
            }
            counts[c as usize] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument("empty client".into()));
        }
        Ok(())
    }

    /// One `<node_id>\t<client_id>` line per node.
    pub fn export_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        for (v, &c) in self.assignment.iter().enumerate() {
            writeln!(f, "{v}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn import_tsv(path: impl AsRef<Path>, n: usize) -> Result<Partition> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut assignment = vec![u32::MAX; n];
        let mut k = 0usize;
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let v: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&name, lineno + 1, "bad node id"))?;
            let c: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&name, lineno + 1, "bad client id"))?;
            if v >= n {
                return Err(Error::parse(&name, lineno + 1, "node id out of range"));
            }
            assignment[v] = c;
            k = k.max(c as usize + 1);
        }
        if assignment.iter().any(|&c| c == u32::MAX) {
            return Err(Error::parse(&name, 0, "missing node assignments"));
        }
        let p = Partition { k, assignment };
        p.validate(n)?;
        Ok(p)
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K={k} out of range 1..={n}")));
    }
    Ok(())
}

/// Each node drawn i.i.d. uniform over clients. If a client ends up empty,
/// the smallest-id node of the largest client is reassigned to it.
pub fn partition_random(g: &GlobalGraph, k: usize, seed: u64) -> Result<Partition> {
    check_k(g.n, k)?;
    let mut rng = child_rng(seed, "partition-random", 0);
    let mut assignment: Vec<u32> = (0..g.n).map(|_| rng.gen_range(0..k as u32)).collect();
    loop {
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c as usize] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let largest = counts
            .iter()
            .enumerate()
            .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
            .map(|(i, _)| i)
            .unwrap();
        let donor = assignment
            .iter()
            .position(|&c| c as usize == largest)
            .unwrap();
        log::warn!("random partition: reassigning node {donor} to empty client {empty}");
        assignment[donor] = empty as u32;
    }
    Ok(Partition { k, assignment })
}

/// Louvain communities, then the shared split/merge size control.
pub fn partition_louvain(g: &GlobalGraph, k: usize, seed: u64) -> Result<Partition> {
    check_k(g.n, k)?;
    let _ = seed; // deterministic tie-breaking; seed kept for interface parity
    let communities = crate::louvain::louvain_communities(g.n, &g.edges);
    let groups = group_by_community(&communities);
    Ok(enforce_size_cap(g, groups, k).0)
}

/// Lloyd's K-means on raw feature rows, then the same size control.
pub fn partition_kmeans(g: &GlobalGraph, k: usize, seed: u64) -> Result<Partition> {
    check_k(g.n, k)?;
    let clusters = kmeans_clusters(&g.features, k, seed);
    let groups = group_by_community(&clusters);
    Ok(enforce_size_cap(g, groups, k).0)
}

fn group_by_community(assign: &[u32]) -> Vec<Vec<u32>> {
    let k = assign.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut groups = vec![Vec::new(); k];
    for (v, &c) in assign.iter().enumerate() {
        groups[c as usize].push(v as u32);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Split any group above ceil(n/K) in two by BFS order, then merge the
/// sorted groups into K clients without exceeding the cap when possible.
/// Returns the partition and the number of fallback merges that had to
/// exceed the cap.
fn enforce_size_cap(g: &GlobalGraph, mut groups: Vec<Vec<u32>>, k: usize) -> (Partition, usize) {
    let cap = g.n.div_ceil(k);
    let adj = g.adjacency();

    let mut i = 0;
    while i < groups.len() {
        if groups[i].len() > cap {
            let group = groups.swap_remove(i);
            let order = bfs_order(&group, &adj);
            let half = order.len().div_ceil(2);
            groups.push(order[..half].to_vec());
            groups.push(order[half..].to_vec());
        } else {
            i += 1;
        }
    }

    // size descending, then smallest member id for determinism
    groups.sort_by_key(|grp| (std::cmp::Reverse(grp.len()), *grp.iter().min().unwrap()));

    let mut client_nodes: Vec<Vec<u32>> = groups.drain(..k.min(groups.len())).collect();
    while client_nodes.len() < k {
        // fewer groups than clients: peel single nodes off the largest client
        let donor = client_nodes
            .iter()
            .enumerate()
            .max_by_key(|(i, grp)| (grp.len(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .unwrap();
        let node = client_nodes[donor].pop().unwrap();
        client_nodes.push(vec![node]);
    }
    let mut fallbacks = 0usize;
    for group in groups {
        let fit = (0..k).find(|&c| client_nodes[c].len() + group.len() <= cap);
        let target = fit.unwrap_or_else(|| {
            let smallest = (0..k).min_by_key(|&c| (client_nodes[c].len(), c)).unwrap();
            log::warn!(
                "size-cap merge fallback: group of {} nodes into smallest client {smallest}",
                group.len()
            );
            fallbacks += 1;
            smallest
        });
        client_nodes[target].extend(group);
    }

    let mut assignment = vec![0u32; g.n];
    for (c, nodes) in client_nodes.iter().enumerate() {
        for &v in nodes {
            assignment[v as usize] = c as u32;
        }
    }
    (Partition { k, assignment }, fallbacks)
}

/// Deterministic BFS over the subgraph induced by `group`: start from the
/// smallest id, visit neighbors in ascending order, restart from the
/// smallest unvisited node if the group is disconnected.
fn bfs_order(group: &[u32], adj: &[Vec<u32>]) -> Vec<u32> {
    let mut sorted: Vec<u32> = group.to_vec();
    sorted.sort_unstable();
    let in_group: std::collections::HashSet<u32> = sorted.iter().copied().collect();
    let mut visited: std::collections::HashSet<u32> = Default::default();
    let mut order = Vec::with_capacity(group.len());
    for &start in &sorted {
        if visited.contains(&start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        visited.insert(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &u in &adj[v as usize] {
                if in_group.contains(&u) && visited.insert(u) {
                    queue.push_back(u);
                }
            }
        }
    }
    order
}

fn kmeans_clusters(features: &Array2<f64>, k: usize, seed: u64) -> Vec<u32> {
    let n = features.nrows();
    let d = features.ncols();
    let mut rng = child_rng(seed, "partition-kmeans", 0);

    // seeded random-point initialization without replacement
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let cand = rng.gen_range(0..n);
        if !chosen.contains(&cand) {
            chosen.push(cand);
        }
    }
    let mut centroids = Array2::zeros((k, d));
    for (c, &p) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&features.row(p));
    }

    let dist2 = |row: ndarray::ArrayView1<f64>, cent: ndarray::ArrayView1<f64>| -> f64 {
        row.iter()
            .zip(cent.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };

    let mut assign = vec![0u32; n];
    for _iter in 0..100 {
        // assignment step; equidistant ties go to the smaller centroid id
        for v in 0..n {
            let row = features.row(v);
            let mut best = (0u32, dist2(row, centroids.row(0)));
            for c in 1..k {
                let d2 = dist2(row, centroids.row(c));
                if d2 < best.1 {
                    best = (c as u32, d2);
                }
            }
            assign[v] = best.0;
        }
        // empty-cluster repair: re-seed at the point farthest from its
        // nearest centroid, drawn from clusters that can spare a point
        loop {
            let mut counts = vec![0usize; k];
            for &a in &assign {
                counts[a as usize] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|&v| counts[assign[v] as usize] > 1)
                .max_by(|&a, &b| {
                    let da = dist2(features.row(a), centroids.row(assign[a] as usize));
                    let db = dist2(features.row(b), centroids.row(assign[b] as usize));
                    da.partial_cmp(&db)
                        .unwrap()
                        .then(b.cmp(&a)) // tie -> smaller id
                })
                .unwrap();
            centroids.row_mut(empty).assign(&features.row(far));
            assign[far] = empty as u32;
        }
        // update step
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0.0f64; k];
        for v in 0..n {
            let c = assign[v] as usize;
            counts[c] += 1.0;
            let row = features.row(v);
            let mut s = sums.row_mut(c);
            for (acc, &x) in s.iter_mut().zip(row.iter()) {
                *acc += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            let mut delta = 0.0;
            for j in 0..d {
                let new = sums[[c, j]] / counts[c];
                delta += (new - centroids[[c, j]]).powi(2);
                centroids[[c, j]] = new;
            }
            shift = shift.max(delta.sqrt());
        }
        if shift < 1e-6 {
            break;
        }
    }
    assign
}

/// Records every feature-row read, for the privacy-boundary tests.
#[derive(Debug, Default)]
pub struct FeatureAccessLog {
    pub reads: Mutex<Vec<(usize, u32)>>,
}

impl FeatureAccessLog {
    pub fn record(&self, client: usize, node: u32) {
        self.reads.lock().unwrap().push((client, node));
    }
}

/// Client i's permitted knowledge of the global graph.
#[derive(Debug, Clone)]
pub struct ClientView {
    pub client_id: usize,
    /// Owned nodes, ascending global ids. Row order for all local matrices.
    pub internal_nodes: Vec<u32>,
    /// Foreign nodes adjacent to an internal node, ascending global ids.
    pub external_nodes: Vec<u32>,
    /// Intra-client undirected edges as global (u, v), u < v.
    pub intra_edges: Vec<(u32, u32)>,
    /// Per foreign client j: (own internal global id, remote global id in j).
    pub inter_edge_stubs: Vec<Vec<(u32, u32)>>,
    /// Feature rows of internal nodes only.
    features: Array2<f64>,
    /// Training labels: Some only for internal nodes in the train mask.
    pub labels: Vec<Option<u32>>,
    /// Row-stochastic self-loop adjacency over internal nodes, intra edges only.
    pub local_norm_adj: CsrMatrix,
    /// Diagonal of the self-loop degree matrix: 1 + global degree.
    pub self_loop_degree: Vec<f64>,
    /// Attached by tests to observe feature reads.
    pub access_log: Option<Arc<FeatureAccessLog>>,
}

impl ClientView {
    pub fn n_internal(&self) -> usize {
        self.internal_nodes.len()
    }

    pub fn local_index(&self, global: u32) -> Option<usize> {
        self.internal_nodes.binary_search(&global).ok()
    }

    /// Feature matrix of the internal nodes. Reads are logged when a test
    /// attached an access log.
    pub fn features(&self) -> &Array2<f64> {
        if let Some(log) = &self.access_log {
            for &v in &self.internal_nodes {
                log.record(self.client_id, v);
            }
        }
        &self.features
    }

    /// Local train-labeled nodes (global ids, ascending).
    pub fn labeled_nodes(&self) -> Vec<u32> {
        self.internal_nodes
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.is_some())
            .map(|(&v, _)| v)
            .collect()
    }
}

/// Materialize the K client views of a partitioned graph.
pub fn build_client_views(
    g: &GlobalGraph,
    p: &Partition,
    split: &LabelSplit,
) -> Result<Vec<ClientView>> {
    p.validate(g.n)?;
    let nodes = p.client_nodes();
    let degrees = g.degrees();
    let mut views = Vec::with_capacity(p.k);

    for (client_id, internal) in nodes.iter().enumerate() {
        let n_i = internal.len();
        let mut intra = Vec::new();
        let mut stubs = vec![Vec::new(); p.k];
        for &(u, v) in &g.edges {
            let (cu, cv) = (
                p.assignment[u as usize] as usize,
                p.assignment[v as usize] as usize,
            );
            if cu == client_id && cv == client_id {
                intra.push((u, v));
            } else if cu == client_id {
                stubs[cv].push((u, v));
            } else if cv == client_id {
                stubs[cu].push((v, u));
            }
        }
        let mut external: Vec<u32> = stubs
            .iter()
            .flat_map(|s| s.iter().map(|&(_, remote)| remote))
            .collect();
        external.sort_unstable();
        external.dedup();

        let mut features = Array2::zeros((n_i, g.d));
        for (r, &v) in internal.iter().enumerate() {
            features.row_mut(r).assign(&g.features.row(v as usize));
        }
        let labels: Vec<Option<u32>> = internal
            .iter()
            .map(|&v| {
                if split.is_train(v) {
                    g.labels[v as usize]
                } else {
                    None
                }
            })
            .collect();

        // local row-stochastic self-loop adjacency over internal nodes
        let mut local_adj: Vec<Vec<u32>> = vec![Vec::new(); n_i];
        for &(u, v) in &intra {
            let lu = internal.binary_search(&u).unwrap();
            let lv = internal.binary_search(&v).unwrap();
            local_adj[lu].push(lv as u32);
            local_adj[lv].push(lu as u32);
        }
        let mut triplets = Vec::new();
        for (lu, nbrs) in local_adj.iter().enumerate() {
            let w = 1.0 / (nbrs.len() as f64 + 1.0);
            triplets.push((lu, lu, w));
            for &lv in nbrs {
                triplets.push((lu, lv as usize, w));
            }
        }
        let local_norm_adj = CsrMatrix::from_triplets(n_i, n_i, triplets);

        let self_loop_degree: Vec<f64> = internal
            .iter()
            .map(|&v| 1.0 + degrees[v as usize] as f64)
            .collect();

        views.push(ClientView {
            client_id,
            internal_nodes: internal.clone(),
            external_nodes: external,
            intra_edges: intra,
            inter_edge_stubs: stubs,
            features,
            labels,
            local_norm_adj,
            self_loop_degree,
            access_log: None,
        });
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::split_labels;
    use ndarray::Array2;

    fn grid_graph(n: usize) -> GlobalGraph {
        // path graph with constant features
        let edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        GlobalGraph::new(
            "path",
            n,
            edges,
            Array2::zeros((n, 1)),
            vec![Some(0); n],
            1,
        )
        .unwrap()
    }

    #[test]
    fn random_k1_single_client() {
        let g = grid_graph(6);
        let p = partition_random(&g, 1, 0).unwrap();
        assert!(p.assignment.iter().all(|&c| c == 0));
        let split = split_labels(&g, 1.0, 0.0, 0).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        assert!(views[0].external_nodes.is_empty());
        assert!(views[0].inter_edge_stubs.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn random_partition_is_deterministic() {
        let g = grid_graph(4);
        let a = partition_random(&g, 2, 9).unwrap();
        let b = partition_random(&g, 2, 9).unwrap();
        assert_eq!(a.assignment, b.assignment);
        a.validate(4).unwrap();
    }

    #[test]
    fn random_partition_rejects_k_above_n() {
        let g = grid_graph(3);
        assert!(partition_random(&g, 4, 0).is_err());
    }

    #[test]
    fn random_interconnection_fraction_near_expected() {
        // Monte Carlo over seeds: ~ (K-1)/K of edges cross clients
        let n = 400;
        let mut edges = Vec::new();
        let mut rng = child_rng(7, "testgraph", 0);
        for _ in 0..1200 {
            let u = rng.gen_range(0..n as u32);
            let v = rng.gen_range(0..n as u32);
            if u != v {
                edges.push((u.min(v), u.max(v)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let g = GlobalGraph::new(
            "rand",
            n,
            edges,
            Array2::zeros((n, 1)),
            vec![Some(0); n],
            1,
        )
        .unwrap();
        let k = 4;
        let mut frac = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let p = partition_random(&g, k, seed).unwrap();
            let cross = g
                .edges
                .iter()
                .filter(|&&(u, v)| p.assignment[u as usize] != p.assignment[v as usize])
                .count();
            frac += cross as f64 / g.edges.len() as f64;
        }
        frac /= seeds as f64;
        let expected = (k - 1) as f64 / k as f64;
        assert!((frac - expected).abs() <= 0.05, "frac {frac} vs {expected}");
    }

    #[test]
    fn louvain_two_cliques_two_clients_no_interconnections() {
        let mut edges = Vec::new();
        for base in [0u32, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        edges.sort_unstable();
        let g = GlobalGraph::new(
            "cliques",
            10,
            edges,
            Array2::zeros((10, 1)),
            vec![Some(0); 10],
            1,
        )
        .unwrap();
        let p = partition_louvain(&g, 2, 0).unwrap();
        p.validate(10).unwrap();
        let cross = g
            .edges
            .iter()
            .filter(|&&(u, v)| p.assignment[u as usize] != p.assignment[v as usize])
            .count();
        assert_eq!(cross, 0);
        assert_ne!(p.assignment[0], p.assignment[5]);
    }

    #[test]
    fn louvain_k1_is_single_client() {
        let g = grid_graph(8);
        let p = partition_louvain(&g, 1, 0).unwrap();
        assert!(p.assignment.iter().all(|&c| c == 0));
    }

    #[test]
    fn louvain_sizes_respect_cap_without_fallback() {
        let g = grid_graph(30);
        for k in [2, 3, 5] {
            let communities = crate::louvain::louvain_communities(g.n, &g.edges);
            let groups = super::group_by_community(&communities);
            // pre-merge: splitting leaves no group above the cap
            let cap = 30usize.div_ceil(k);
            let (p, fallbacks) = super::enforce_size_cap(&g, groups, k);
            p.validate(30).unwrap();
            if fallbacks == 0 {
                for nodes in p.client_nodes() {
                    assert!(nodes.len() <= cap, "k={k} size {} cap {cap}", nodes.len());
                }
            }
        }
    }

    #[test]
    fn kmeans_identical_features_still_balances() {
        let g = GlobalGraph::new(
            "flat",
            9,
            vec![(0, 1), (1, 2), (4, 5)],
            Array2::ones((9, 3)),
            vec![Some(0); 9],
            1,
        )
        .unwrap();
        let p = partition_kmeans(&g, 3, 1).unwrap();
        p.validate(9).unwrap();
        let cap = 3;
        for nodes in p.client_nodes() {
            assert!(nodes.len() <= cap);
        }
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let n = 40;
        let mut rng = child_rng(3, "blobs", 0);
        let mut features = Array2::zeros((n, 2));
        for i in 0..n {
            let center = if i < n / 2 { -10.0 } else { 10.0 };
            features[[i, 0]] = center + rng.gen::<f64>();
            features[[i, 1]] = center + rng.gen::<f64>();
        }
        let g = GlobalGraph::new("blobs", n, vec![(0, 1)], features.clone(), vec![Some(0); n], 1)
            .unwrap();
        let p = partition_kmeans(&g, 2, 5).unwrap();
        // brute-force nearest-centroid check: all first-half nodes together
        assert!(p.assignment[..n / 2]
            .iter()
            .all(|&c| c == p.assignment[0]));
        assert!(p.assignment[n / 2..]
            .iter()
            .all(|&c| c == p.assignment[n / 2]));
        assert_ne!(p.assignment[0], p.assignment[n / 2]);
        // centroid consistency: every node is nearest to its own centroid
        let groups = p.client_nodes();
        let mut centroids = Array2::<f64>::zeros((2, 2));
        for (c, nodes) in groups.iter().enumerate() {
            for &v in nodes {
                for j in 0..2 {
                    centroids[[c, j]] += features[[v as usize, j]] / nodes.len() as f64;
                }
            }
        }
        for v in 0..n {
            let d: Vec<f64> = (0..2)
                .map(|c| {
                    (0..2)
                        .map(|j| (features[[v, j]] - centroids[[c, j]]).powi(2))
                        .sum()
                })
                .collect();
            let nearest = if d[0] <= d[1] { 0 } else { 1 };
            assert_eq!(p.assignment[v], nearest as u32);
        }
    }

    #[test]
    fn kmeans_same_seed_identical() {
        let g = grid_graph(12);
        let a = partition_kmeans(&g, 3, 11).unwrap();
        let b = partition_kmeans(&g, 3, 11).unwrap();
        assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn views_two_node_path_split() {
        let g = GlobalGraph::new(
            "pair",
            2,
            vec![(0, 1)],
            Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap(),
            vec![Some(0), Some(0)],
            1,
        )
        .unwrap();
        let p = Partition {
            k: 2,
            assignment: vec![0, 1],
        };
        let split = split_labels(&g, 1.0, 0.0, 0).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        for (i, view) in views.iter().enumerate() {
            assert_eq!(view.n_internal(), 1);
            assert_eq!(view.external_nodes.len(), 1);
            let stub_count: usize = view.inter_edge_stubs.iter().map(|s| s.len()).sum();
            assert_eq!(stub_count, 1);
            assert_eq!(view.local_norm_adj.to_dense(), ndarray::arr2(&[[1.0]]));
            assert_eq!(view.self_loop_degree, vec![2.0]);
            assert_eq!(view.features()[[0, 0]], (i + 1) as f64);
        }
    }

    #[test]
    fn views_conserve_nodes_edges_features_labels() {
        let g = grid_graph(10);
        let p = partition_random(&g, 3, 2).unwrap();
        let split = split_labels(&g, 0.5, 0.2, 2).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        let total_nodes: usize = views.iter().map(|v| v.n_internal()).sum();
        assert_eq!(total_nodes, g.n);
        let intra: usize = views.iter().map(|v| v.intra_edges.len()).sum();
        let stubs: usize = views
            .iter()
            .map(|v| v.inter_edge_stubs.iter().map(|s| s.len()).sum::<usize>())
            .sum();
        assert_eq!(intra + stubs / 2, g.edges.len());
        // each internal feature row matches the global row
        for view in &views {
            for (r, &v) in view.internal_nodes.iter().enumerate() {
                assert_eq!(view.features()[[r, 0]], g.features[[v as usize, 0]]);
            }
        }
        // labels only on train nodes
        let n_labels: usize = views
            .iter()
            .flat_map(|v| v.labels.iter())
            .filter(|l| l.is_some())
            .count();
        assert_eq!(n_labels, split.train_nodes().len());
    }

    #[test]
    fn view_global_degree_in_self_loop_diag() {
        let g = grid_graph(4); // 0-1-2-3
        let p = Partition {
            k: 2,
            assignment: vec![0, 0, 1, 1],
        };
        let split = split_labels(&g, 1.0, 0.0, 0).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        // node 1 has global degree 2 even though one edge leaves the client
        assert_eq!(views[0].self_loop_degree, vec![2.0, 3.0]);
        assert_eq!(views[1].self_loop_degree, vec![3.0, 2.0]);
    }

    #[test]
    fn view_serialization_contains_no_foreign_features() {
        // the debug representation of a view must not leak foreign rows:
        // give foreign nodes a sentinel value and scan for it
        let mut features = Array2::zeros((4, 1));
        features[[2, 0]] = 777.25;
        features[[3, 0]] = 888.25;
        let g = GlobalGraph::new(
            "leak",
            4,
            vec![(0, 2), (1, 3)],
            features,
            vec![Some(0); 4],
            1,
        )
        .unwrap();
        let p = Partition {
            k: 2,
            assignment: vec![0, 0, 1, 1],
        };
        let split = split_labels(&g, 1.0, 0.0, 0).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        let dump = format!("{:?}", views[0]);
        assert!(!dump.contains("777.25") && !dump.contains("888.25"), "{dump}");
    }

    #[test]
    fn partition_roundtrip_tsv() {
        let g = grid_graph(6);
        let p = partition_random(&g, 2, 1).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("partition.tsv");
        p.export_tsv(&path).unwrap();
        let q = Partition::import_tsv(&path, 6).unwrap();
        assert_eq!(p.assignment, q.assignment);
        assert_eq!(p.k, q.k);
    }
}
