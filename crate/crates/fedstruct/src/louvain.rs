//! Louvain modularity maximization with deterministic tie-breaking.
//!
//! Nodes are visited in ascending id. A node moves to the neighboring
//! community with the largest modularity gain; exact ties go to the
//! community with the smallest id. Resolution is fixed at 1.

use std::collections::HashMap;

/// Community assignment for every node of the input graph.
pub fn louvain_communities(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut adj: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    for &(u, v) in edges {
        *adj[u as usize].entry(v as usize).or_insert(0.0) += 1.0;
        *adj[v as usize].entry(u as usize).or_insert(0.0) += 1.0;
    }
    let mut membership: Vec<u32> = (0..n as u32).collect();
    let mut node_of_comm: Vec<Vec<u32>> = (0..n as u32).map(|v| vec![v]).collect();

    loop {
        let level_n = adj.len();
        let (assign, moved) = one_level(&adj);
        if !moved {
            break;
        }
        // relabel communities to 0..k-1 in order of first appearance
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut labels = vec![0usize; level_n];
        for i in 0..level_n {
            let next = remap.len();
            let c = *remap.entry(assign[i]).or_insert(next);
            labels[i] = c;
        }
        let k = remap.len();
        // push down to original nodes
        let mut new_node_of_comm: Vec<Vec<u32>> = vec![Vec::new(); k];
        for i in 0..level_n {
            new_node_of_comm[labels[i]].extend(node_of_comm[i].iter().copied());
        }
        for (c, nodes) in new_node_of_comm.iter().enumerate() {
            for &v in nodes {
                membership[v as usize] = c as u32;
            }
        }
        node_of_comm = new_node_of_comm;
        if k == level_n {
            break;
        }
        // aggregate graph: communities become nodes; self-weight counts twice
        let mut new_adj: Vec<HashMap<usize, f64>> = vec![HashMap::new(); k];
        for i in 0..level_n {
            let ci = labels[i];
            for (&j, &w) in &adj[i] {
                let cj = labels[j];
                if ci == cj {
                    *new_adj[ci].entry(ci).or_insert(0.0) += w;
                } else {
                    *new_adj[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        adj = new_adj;
    }
    membership
}

/// One local-moving phase. Returns (community of each node, any move made).
fn one_level(adj: &[HashMap<usize, f64>]) -> (Vec<usize>, bool) {
    let n = adj.len();
    let k_i: Vec<f64> = (0..n).map(|i| adj[i].values().sum()).collect();
    let two_m: f64 = k_i.iter().sum();
    if two_m == 0.0 {
        return ((0..n).collect(), false);
    }
    let mut community: Vec<usize> = (0..n).collect();
    let mut sigma_tot = k_i.clone();
    let mut any_move = false;

    loop {
        let mut moved = false;
        for i in 0..n {
            let old = community[i];
            // weights from i to each neighboring community (self-loop excluded)
            let mut to_comm: HashMap<usize, f64> = HashMap::new();
            for (&j, &w) in &adj[i] {
                if j != i {
                    *to_comm.entry(community[j]).or_insert(0.0) += w;
                }
            }
            sigma_tot[old] -= k_i[i];
            let base = to_comm.get(&old).copied().unwrap_or(0.0)
                - sigma_tot[old] * k_i[i] / two_m;
            // ascending candidate order + strict improvement resolves ties
            // toward the smallest community id (staying wins a tie with old)
            let mut best_comm = old;
            let mut best_gain = base;
            let mut cands: Vec<usize> = to_comm.keys().copied().collect();
            cands.sort_unstable();
            for c in cands {
                if c == old {
                    continue;
                }
                let gain = to_comm[&c] - sigma_tot[c] * k_i[i] / two_m;
                if gain > best_gain {
                    best_gain = gain;
                    best_comm = c;
                }
            }
            sigma_tot[best_comm] += k_i[i];
            community[i] = best_comm;
            if best_comm != old {
                moved = true;
                any_move = true;
            }
        }
        if !moved {
            break;
        }
    }
    (community, any_move)
}

/// Modularity of an assignment on an unweighted graph (used by tests).
pub fn modularity(n: usize, edges: &[(u32, u32)], assign: &[u32]) -> f64 {
    let m = edges.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = assign.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut intra = vec![0.0f64; k];
    let mut deg_sum = vec![0.0f64; k];
    for &(u, v) in edges {
        deg_sum[assign[u as usize] as usize] += 1.0;
        deg_sum[assign[v as usize] as usize] += 1.0;
        if assign[u as usize] == assign[v as usize] {
            intra[assign[u as usize] as usize] += 1.0;
        }
    }
    let _ = n;
    (0..k)
        .map(|c| intra[c] / m - (deg_sum[c] / (2.0 * m)).powi(2))
        .sum()
}
