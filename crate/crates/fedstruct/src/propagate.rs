//! The L_s-hop combined adjacency matrix and its multi-round collaborative
//! acquisition across clients.
//!
//! The protocol is simulated in-process with an explicit message ledger.
//! One "block transfer" is a client-to-client message: the initial roster
//! exchange counts as round 1, and each later round sends one stacked block
//! matrix per ordered client pair, so a full run transfers exactly
//! `L_s * K * (K-1)` messages.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::ClientView;
use crate::sparse::CsrMatrix;

/// Per-hop weights for the combined adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    pub weights: Vec<f64>,
}

impl BetaSchedule {
    /// Uniform weights 1/L over L hops.
    pub fn uniform(l: usize) -> Self {
        BetaSchedule {
            weights: vec![1.0 / l as f64; l],
        }
    }

    /// Explicit weights, normalized to sum 1 unless `normalize` is false.
    pub fn new(weights: Vec<f64>, normalize: bool) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty beta schedule".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidArgument("beta weights must be >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("beta weights sum to zero".into()));
        }
        let weights = if normalize {
            weights.iter().map(|w| w / sum).collect()
        } else {
            weights
        };
        Ok(BetaSchedule { weights })
    }

    pub fn hops(&self) -> usize {
        self.weights.len()
    }
}

/// Rows of the global combined adjacency matrix owned by one client.
#[derive(Debug, Clone)]
pub struct CombinedAdjacencyPartition {
    pub client_id: usize,
    /// n_i x n matrix; row r belongs to the r-th internal node of the client.
    pub rows: CsrMatrix,
}

/// Communication ledger of a protocol or training run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CommReport {
    /// Scalars moved before training: rosters, adjacency blocks, NSF shares.
    pub offline_scalars: u64,
    /// Scalars moved per training epoch (gradients up, model down).
    pub online_scalars_per_epoch: u64,
    /// Client-to-client messages during acquisition.
    pub blocks_sent: u64,
    /// Protocol rounds (1 roster round + L_s - 1 block rounds).
    pub rounds: u32,
    /// Epochs actually trained.
    pub online_epochs: u64,
    /// online_scalars_per_epoch * online_epochs.
    pub online_scalars_total: u64,
}

/// Everything the acquisition protocol produces.
#[derive(Debug, Clone)]
pub struct AcquisitionResult {
    pub partitions: Vec<CombinedAdjacencyPartition>,
    /// Per client: n_i x L_s matrix of (A_hat^l)_{vv} diagonal values.
    pub diag_powers: Vec<Array2<f64>>,
    pub report: CommReport,
}

/// Oracle: the weighted sum of sparse powers of a row-stochastic matrix.
/// Powers are built by left-multiplication, matching the protocol order.
pub fn combined_adjacency(a_hat: &CsrMatrix, beta: &BetaSchedule) -> Result<CsrMatrix> {
    if a_hat.rows != a_hat.cols {
        return Err(Error::Dim("combined_adjacency: matrix not square".into()));
    }
    let mut power = a_hat.clone();
    let mut acc = scale(&power, beta.weights[0]);
    for &b in &beta.weights[1..] {
        power = a_hat.sp_sp_mul(&power)?;
        acc = add_scaled(&acc, &power, b)?;
    }
    Ok(acc)
}

fn scale(m: &CsrMatrix, alpha: f64) -> CsrMatrix {
    let mut out = m.clone();
    for v in &mut out.values {
        *v *= alpha;
    }
    out
}

/// acc + alpha * m, merging sorted rows.
fn add_scaled(acc: &CsrMatrix, m: &CsrMatrix, alpha: f64) -> Result<CsrMatrix> {
    if acc.rows != m.rows || acc.cols != m.cols {
        return Err(Error::Dim("add_scaled: shape mismatch".into()));
    }
    let mut row_ptr = Vec::with_capacity(acc.rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for r in 0..acc.rows {
        let (ac, av) = acc.row(r);
        let (mc, mv) = m.row(r);
        let (mut i, mut j) = (0, 0);
        while i < ac.len() || j < mc.len() {
            let take_a = j >= mc.len() || (i < ac.len() && ac[i] < mc[j]);
            let take_b = i >= ac.len() || (j < mc.len() && mc[j] < ac[i]);
            if take_a {
                col_idx.push(ac[i]);
                values.push(av[i]);
                i += 1;
            } else if take_b {
                col_idx.push(mc[j]);
                values.push(alpha * mv[j]);
                j += 1;
            } else {
                col_idx.push(ac[i]);
                values.push(av[i] + alpha * mv[j]);
                i += 1;
                j += 1;
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix {
        rows: acc.rows,
        cols: acc.cols,
        row_ptr,
        col_idx,
        values,
    })
}

/// Keep the `keep` largest-magnitude entries of a block; ties broken by
/// smaller (row, col).
fn prune_block(block: &CsrMatrix, keep: usize) -> CsrMatrix {
    if block.nnz() <= keep {
        return block.clone();
    }
    let mut entries: Vec<(usize, u32, f64)> = Vec::with_capacity(block.nnz());
    for r in 0..block.rows {
        let (cols, vals) = block.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            entries.push((r, c, v));
        }
    }
    entries.sort_by(|a, b| {
        b.2.abs()
            .partial_cmp(&a.2.abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    entries.truncate(keep);
    CsrMatrix::from_triplets(
        block.rows,
        block.cols,
        entries.into_iter().map(|(r, c, v)| (r, c as usize, v)),
    )
}

/// Multi-round private acquisition of each client's partition of the global
/// combined adjacency matrix.
pub fn acquire_partitions(
    views: &[ClientView],
    beta: &BetaSchedule,
) -> Result<AcquisitionResult> {
    acquire_partitions_impl(views, beta, None)
}

/// Same protocol, with every transmitted block truncated to its top
/// `p * n_i` entries.
pub fn acquire_partitions_pruned(
    views: &[ClientView],
    beta: &BetaSchedule,
    p: usize,
) -> Result<AcquisitionResult> {
    if p < 1 {
        return Err(Error::InvalidArgument("pruning parameter p must be >= 1".into()));
    }
    acquire_partitions_impl(views, beta, Some(p))
}

fn acquire_partitions_impl(
    views: &[ClientView],
    beta: &BetaSchedule,
    prune: Option<usize>,
) -> Result<AcquisitionResult> {
    let k = views.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no client views".into()));
    }
    // consistency: internal node sets must be disjoint
    let mut seen = std::collections::HashSet::new();
    for view in views {
        for &v in &view.internal_nodes {
            if !seen.insert(v) {
                return Err(Error::Protocol(format!(
                    "node {v} appears in more than one client"
                )));
            }
        }
    }
    let n: usize = views.iter().map(|v| v.n_internal()).sum();
    let l_s = beta.hops();

    let mut report = CommReport::default();

    // Round 1: roster broadcast. Every client learns the ordered internal
    // node list of every other client (needed to index block columns).
    let rosters: Vec<&[u32]> = views.iter().map(|v| v.internal_nodes.as_slice()).collect();
    for sender in 0..k {
        for receiver in 0..k {
            if sender != receiver {
                report.blocks_sent += 1;
                report.offline_scalars += rosters[sender].len() as u64;
            }
        }
    }
    report.rounds = 1;

    // Self-loop adjacency blocks in local indexing: tilde[i][j] is n_i x n_j.
    let mut tilde: Vec<Vec<CsrMatrix>> = Vec::with_capacity(k);
    for (i, view) in views.iter().enumerate() {
        let mut blocks = Vec::with_capacity(k);
        for (j, roster_j) in rosters.iter().enumerate() {
            if i == j {
                let n_i = view.n_internal();
                let mut triplets: Vec<(usize, usize, f64)> =
                    (0..n_i).map(|r| (r, r, 1.0)).collect();
                for &(u, v) in &view.intra_edges {
                    let lu = view.local_index(u).unwrap();
                    let lv = view.local_index(v).unwrap();
                    triplets.push((lu, lv, 1.0));
                    triplets.push((lv, lu, 1.0));
                }
                blocks.push(CsrMatrix::from_triplets(n_i, n_i, triplets));
            } else {
                let triplets = views[i].inter_edge_stubs[j].iter().map(|&(own, remote)| {
                    let r = views[i].local_index(own).unwrap();
                    let c = roster_j.binary_search(&remote).unwrap();
                    (r, c, 1.0)
                });
                blocks.push(CsrMatrix::from_triplets(
                    view.n_internal(),
                    roster_j.len(),
                    triplets,
                ));
            }
        }
        tilde.push(blocks);
    }

    let inv_deg: Vec<Vec<f64>> = views
        .iter()
        .map(|v| v.self_loop_degree.iter().map(|d| 1.0 / d).collect())
        .collect();

    // power[i][j] = [A_hat^[i]_j]^l, initialized at l = 1
    let mut power: Vec<Vec<CsrMatrix>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| tilde[i][j].scale_rows(&inv_deg[i]))
                .collect()
        })
        .collect();
    // abar[i][j] accumulates beta_l * [A_hat^[i]_j]^l
    let mut abar: Vec<Vec<CsrMatrix>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| scale(&power[i][j], beta.weights[0]))
                .collect()
        })
        .collect();

    let mut diag_powers: Vec<Array2<f64>> = views
        .iter()
        .map(|v| Array2::zeros((v.n_internal(), l_s)))
        .collect();
    for i in 0..k {
        for r in 0..views[i].n_internal() {
            diag_powers[i][[r, 0]] = power[i][i].get(r, r);
        }
    }

    for l in 2..=l_s {
        report.rounds += 1;
        let mut next_power: Vec<Vec<CsrMatrix>> = Vec::with_capacity(k);
        for i in 0..k {
            let n_i = views[i].n_internal();
            let keep = prune.map(|p| p * n_i);
            let mut row_blocks = Vec::with_capacity(k);
            for j in 0..k {
                // sum of B_ijk over senders k, ascending for determinism
                let mut sum = CsrMatrix::zeros(n_i, rosters[j].len());
                for sender in 0..k {
                    let mut block = tilde[i][sender].sp_sp_mul(&power[sender][j])?;
                    if sender != i {
                        if let Some(keep) = keep {
                            block = prune_block(&block, keep);
                        }
                        report.offline_scalars += block.nnz() as u64;
                    }
                    sum = add_scaled(&sum, &block, 1.0)?;
                }
                row_blocks.push(sum.scale_rows(&inv_deg[i]));
            }
            // one stacked message per sender->receiver pair this round
            for sender in 0..k {
                if sender != i {
                    report.blocks_sent += 1;
                }
            }
            for j in 0..k {
                abar[i][j] = add_scaled(&abar[i][j], &row_blocks[j], beta.weights[l - 1])?;
            }
            for r in 0..n_i {
                diag_powers[i][[r, l - 1]] = row_blocks[i].get(r, r);
            }
            next_power.push(row_blocks);
        }
        power = next_power;
    }

    // assemble per-client rows in global column indexing
    let mut partitions = Vec::with_capacity(k);
    for (i, view) in views.iter().enumerate() {
        let n_i = view.n_internal();
        let mut triplets = Vec::new();
        for (j, roster_j) in rosters.iter().enumerate() {
            let block = &abar[i][j];
            for r in 0..n_i {
                let (cols, vals) = block.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    triplets.push((r, roster_j[c as usize] as usize, v));
                }
            }
        }
        let rows = CsrMatrix::from_triplets(n_i, n, triplets);
        partitions.push(CombinedAdjacencyPartition {
            client_id: i,
            rows,
        });
    }

    Ok(AcquisitionResult {
        partitions,
        diag_powers,
        report,
    })
}
