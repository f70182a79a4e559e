//! Node structure features: one-hot degree, the degree-plus-return-probability
//! concatenation, and the learnable random initialization.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::partition::ClientView;
use crate::propagate::AcquisitionResult;
use crate::rng::{child_rng, uniform_symmetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NsfMethod {
    Deg,
    Fedstar,
    Hop2vec,
}

impl std::fmt::Display for NsfMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NsfMethod::Deg => "deg",
            NsfMethod::Fedstar => "fedstar",
            NsfMethod::Hop2vec => "hop2vec",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for NsfMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deg" => Ok(NsfMethod::Deg),
            "fedstar" => Ok(NsfMethod::Fedstar),
            "hop2vec" | "h2v" => Ok(NsfMethod::Hop2vec),
            other => Err(Error::Config(format!("unknown nsf method '{other}'"))),
        }
    }
}

/// The n x d_s matrix of node structure features.
#[derive(Debug, Clone)]
pub struct NsfMatrix {
    pub values: Array2<f64>,
    pub method: NsfMethod,
    pub trainable: bool,
}

impl NsfMatrix {
    pub fn d_s(&self) -> usize {
        self.values.ncols()
    }

    pub fn export_tsv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for (v, row) in self.values.rows().into_iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            writeln!(f, "{v}\t{}", vals.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Global degree of every node, assembled from client views alone
/// (self_loop_degree is 1 + global degree and is locally computable).
fn degrees_from_views(views: &[ClientView], n: usize) -> Vec<usize> {
    let mut deg = vec![0usize; n];
    for view in views {
        for (r, &v) in view.internal_nodes.iter().enumerate() {
            deg[v as usize] = (view.self_loop_degree[r] - 1.0).round() as usize;
        }
    }
    deg
}

/// One-hot degree encoding: row v has a 1 at min(deg(v), cap - 1).
pub fn nsf_degree(views: &[ClientView], cap: usize) -> Result<NsfMatrix> {
    if cap < 1 {
        return Err(Error::InvalidArgument("degree cap must be >= 1".into()));
    }
    let n: usize = views.iter().map(|v| v.n_internal()).sum();
    let deg = degrees_from_views(views, n);
    let mut values = Array2::zeros((n, cap));
    for (v, &d) in deg.iter().enumerate() {
        values[[v, d.min(cap - 1)]] = 1.0;
    }
    Ok(NsfMatrix {
        values,
        method: NsfMethod::Deg,
        trainable: false,
    })
}

/// Degree one-hot concatenated with the return probabilities
/// (A_hat^l)_{vv} for l = 1..L_s, harvested during acquisition.
pub fn nsf_fedstar(
    views: &[ClientView],
    acq: &AcquisitionResult,
    cap: usize,
) -> Result<NsfMatrix> {
    if acq.diag_powers.len() != views.len() {
        return Err(Error::InvalidArgument(
            "fedstar: diagonal powers unavailable for all clients".into(),
        ));
    }
    let l_s = acq
        .diag_powers
        .first()
        .map(|d| d.ncols())
        .ok_or_else(|| Error::InvalidArgument("fedstar: no clients".into()))?;
    let deg_part = nsf_degree(views, cap)?;
    let n = deg_part.values.nrows();
    let mut values = Array2::zeros((n, cap + l_s));
    for (view, diag) in views.iter().zip(&acq.diag_powers) {
        if diag.nrows() != view.n_internal() {
            return Err(Error::InvalidArgument(
                "fedstar: diagonal rows do not match view".into(),
            ));
        }
        for (r, &v) in view.internal_nodes.iter().enumerate() {
            for k in 0..cap {
                values[[v as usize, k]] = deg_part.values[[v as usize, k]];
            }
            for l in 0..l_s {
                values[[v as usize, cap + l]] = diag[[r, l]];
            }
        }
    }
    Ok(NsfMatrix {
        values,
        method: NsfMethod::Fedstar,
        trainable: false,
    })
}

/// Random trainable initialization: i.i.d. uniform in [-r, r], r = 1/sqrt(d_s).
pub fn nsf_hop2vec_init(n: usize, d_s: usize, seed: u64) -> Result<NsfMatrix> {
    if d_s < 1 {
        return Err(Error::InvalidArgument("d_s must be >= 1".into()));
    }
    let mut rng = child_rng(seed, "hop2vec-init", 0);
    let r = 1.0 / (d_s as f64).sqrt();
    let mut values = Array2::zeros((n, d_s));
    for row in 0..n {
        for col in 0..d_s {
            values[[row, col]] = uniform_symmetric(&mut rng, r);
        }
    }
    Ok(NsfMatrix {
        values,
        method: NsfMethod::Hop2vec,
        trainable: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_labels, GlobalGraph};
    use crate::partition::{build_client_views, Partition};
    use crate::propagate::{acquire_partitions, BetaSchedule};
    use ndarray::Array2;

    fn views_of(g: &GlobalGraph, assignment: Vec<u32>, k: usize) -> Vec<crate::partition::ClientView> {
        let split = split_labels(g, 1.0, 0.0, 0).unwrap();
        build_client_views(g, &Partition { k, assignment }, &split).unwrap()
    }

    #[test]
    fn degree_one_hot_basics() {
        // node 0 isolated; node 1 with degree 3
        let g = GlobalGraph::new(
            "star",
            5,
            vec![(1, 2), (1, 3), (1, 4)],
            Array2::zeros((5, 1)),
            vec![Some(0); 5],
            1,
        )
        .unwrap();
        let views = views_of(&g, vec![0; 5], 1);
        let s = nsf_degree(&views, 4).unwrap();
        assert_eq!(s.d_s(), 4);
        assert_eq!(s.values.row(0).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.values.row(1).to_vec(), vec![0.0, 0.0, 0.0, 1.0]);
        // equal degrees give identical rows
        assert_eq!(s.values.row(2).to_vec(), s.values.row(3).to_vec());
        assert!(!s.trainable);
    }

    #[test]
    fn degree_cap_buckets_overflow_into_last_bin() {
        let g = GlobalGraph::new(
            "star",
            5,
            vec![(0, 1), (0, 2), (0, 3), (0, 4)],
            Array2::zeros((5, 1)),
            vec![Some(0); 5],
            1,
        )
        .unwrap();
        let views = views_of(&g, vec![0; 5], 1);
        let s = nsf_degree(&views, 3).unwrap();
        assert_eq!(s.values.row(0).to_vec(), vec![0.0, 0.0, 1.0]); // degree 4 -> bin 2
    }

    #[test]
    fn degree_uses_global_degree_across_clients() {
        // path 0-1-2 split so node 1 has one intra and one inter edge
        let g = GlobalGraph::new(
            "path",
            3,
            vec![(0, 1), (1, 2)],
            Array2::zeros((3, 1)),
            vec![Some(0); 3],
            1,
        )
        .unwrap();
        let views = views_of(&g, vec![0, 0, 1], 2);
        let s = nsf_degree(&views, 4).unwrap();
        assert_eq!(s.values.row(1).to_vec(), vec![0.0, 0.0, 1.0, 0.0]); // degree 2
    }

    #[test]
    fn fedstar_two_node_path() {
        let g = GlobalGraph::new(
            "pair",
            2,
            vec![(0, 1)],
            Array2::zeros((2, 1)),
            vec![Some(0); 2],
            1,
        )
        .unwrap();
        let views = views_of(&g, vec![0, 1], 2);
        let beta = BetaSchedule::uniform(2);
        let acq = acquire_partitions(&views, &beta).unwrap();
        let s = nsf_fedstar(&views, &acq, 4).unwrap();
        assert_eq!(s.d_s(), 6);
        for v in 0..2 {
            assert_eq!(
                s.values.row(v).to_vec(),
                vec![0.0, 1.0, 0.0, 0.0, 0.5, 0.5],
                "node {v}"
            );
        }
    }

    #[test]
    fn fedstar_isolated_node_diag_is_one() {
        let g = GlobalGraph::new(
            "iso",
            3,
            vec![(1, 2)],
            Array2::zeros((3, 1)),
            vec![Some(0); 3],
            1,
        )
        .unwrap();
        let views = views_of(&g, vec![0; 3], 1);
        let acq = acquire_partitions(&views, &BetaSchedule::uniform(3)).unwrap();
        let s = nsf_fedstar(&views, &acq, 2).unwrap();
        assert_eq!(s.d_s(), 2 + 3);
        for l in 0..3 {
            assert_eq!(s.values[[0, 2 + l]], 1.0);
        }
    }

    #[test]
    fn fedstar_diag_matches_oracle_powers() {
        let mut edges = vec![(0, 1), (0, 2), (1, 3), (2, 4), (3, 4), (4, 5)];
        edges.sort_unstable();
        let g = GlobalGraph::new("g", 6, edges, Array2::zeros((6, 1)), vec![Some(0); 6], 1)
            .unwrap();
        let views = views_of(&g, vec![0, 0, 1, 1, 0, 1], 2);
        let l_s = 3;
        let acq = acquire_partitions(&views, &BetaSchedule::uniform(l_s)).unwrap();
        let s = nsf_fedstar(&views, &acq, 2).unwrap();
        let a_hat = crate::graph::normalized_self_loop_adjacency(&g);
        let mut power = a_hat.clone();
        for l in 0..l_s {
            if l > 0 {
                power = a_hat.sp_sp_mul(&power).unwrap();
            }
            for v in 0..6 {
                assert!(
                    (s.values[[v, 2 + l]] - power.get(v, v)).abs() <= 1e-12,
                    "node {v} hop {l}"
                );
            }
        }
    }

    #[test]
    fn hop2vec_init_is_seeded_and_bounded() {
        let a = nsf_hop2vec_init(20, 16, 9).unwrap();
        let b = nsf_hop2vec_init(20, 16, 9).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.trainable);
        let r = 1.0 / 4.0;
        assert!(a.values.iter().all(|&v| v >= -r && v < r));
        let c = nsf_hop2vec_init(20, 16, 10).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn hop2vec_init_mean_near_zero() {
        // mean of n*d_s >= 1e4 uniforms in [-r, r): within 3 sigma of 0
        let s = nsf_hop2vec_init(200, 64, 3).unwrap();
        let count = (200 * 64) as f64;
        let r = 1.0 / 8.0;
        let sigma = r / (3.0f64).sqrt() / count.sqrt();
        let mean: f64 = s.values.iter().sum::<f64>() / count;
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean} sigma {sigma}");
    }
}
