//! MLP predictors with hand-rolled forward/backward, softmax cross-entropy,
//! and the per-client prediction rule combining a locally propagated feature
//! path with a globally propagated structure path.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::ClientView;
use crate::propagate::CombinedAdjacencyPartition;
use crate::rng::uniform_symmetric;
use crate::sparse::CsrMatrix;

/// One affine layer; weights are in_dim x out_dim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Affine + ReLU stack with an identity output layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Hidden activations of one forward pass (inputs are kept by the caller).
#[derive(Debug, Clone)]
pub struct MlpCache {
    hidden: Vec<Array2<f64>>,
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Mlp {
    /// Layers drawn uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], weights
    /// row-major then bias, in layer order.
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng, bias: bool) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("mlp needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let r = 1.0 / (fan_in as f64).sqrt();
            let mut w = Array2::zeros((fan_in, fan_out));
            for row in 0..fan_in {
                for col in 0..fan_out {
                    w[[row, col]] = uniform_symmetric(rng, r);
                }
            }
            let mut b = Array1::zeros(fan_out);
            if bias {
                for col in 0..fan_out {
                    b[col] = uniform_symmetric(rng, r);
                }
            }
            layers.push(DenseLayer { w, b });
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Batched forward over rows of x.
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Dim(format!(
                "mlp forward: input dim {} vs {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let mut hidden = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for layer in self.layers.iter().skip(1) {
            h.mapv_inplace(|v| v.max(0.0));
            hidden.push(h.clone());
            h = h.dot(&layer.w) + &layer.b;
        }
        Ok((h, MlpCache { hidden }))
    }

    /// Reverse-mode gradients of sum(output * upstream) w.r.t. parameters
    /// and input. `x` must be the forward input, `cache` its cache.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        cache: &MlpCache,
        upstream: &ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        let n_layers = self.layers.len();
        if cache.hidden.len() != n_layers - 1 {
            return Err(Error::Dim("mlp backward: cache does not match".into()));
        }
        if upstream.nrows() != x.nrows() || upstream.ncols() != self.out_dim() {
            return Err(Error::Dim("mlp backward: upstream shape".into()));
        }
        let mut w_grads = vec![Array2::zeros((0, 0)); n_layers];
        let mut b_grads = vec![Array1::zeros(0); n_layers];
        let mut g = upstream.to_owned();
        for i in (0..n_layers).rev() {
            if i > 0 {
                let act = &cache.hidden[i - 1];
                w_grads[i] = act.t().dot(&g);
                b_grads[i] = g.sum_axis(Axis(0));
                g = g.dot(&self.layers[i].w.t());
                // relu mask of the activation that fed layer i
                g.zip_mut_with(act, |gv, &av| {
                    if av <= 0.0 {
                        *gv = 0.0;
                    }
                });
            } else {
                w_grads[0] = x.t().dot(&g);
                b_grads[0] = g.sum_axis(Axis(0));
                g = g.dot(&self.layers[0].w.t());
            }
        }
        Ok((
            MlpGrads {
                w: w_grads,
                b: b_grads,
            },
            g,
        ))
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> MlpGrads {
        MlpGrads {
            w: mlp.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            b: mlp.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.w {
            *w *= alpha;
        }
        for b in &mut self.b {
            *b *= alpha;
        }
    }
}

/// Numerically stabilized softmax cross-entropy for one logit vector.
/// Returns the loss and d loss / d z = softmax(z) - y.
pub fn softmax_cross_entropy(z: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let lse = sum.ln() + zmax;
    let mut loss = 0.0;
    let mut dz = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        loss += y[i] * (lse - z[i]);
        dz.push(exp[i] / sum - y[i]);
    }
    (loss, dz)
}

/// Row-wise softmax.
pub fn softmax_rows(z: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Feature path plus a structure MLP over fixed NSFs.
    Generic,
    /// Trainable NSFs used directly as structure logits (d_s = c).
    Hop2vecFolded,
    /// Trainable NSFs fed through the structure MLP.
    Hop2vecChain,
    /// Feature path only; no structure inputs at all.
    FeatureOnly,
}

/// Both MLP stacks; the output projection is folded into the final layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub f: Mlp,
    pub s: Option<Mlp>,
    pub mode: ModelMode,
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.f.param_count() + self.s.as_ref().map_or(0, |m| m.param_count())
    }

    pub fn validate(&self, d_s: usize, c: usize) -> Result<()> {
        if self.f.out_dim() != c {
            return Err(Error::Dim("feature mlp must end at c".into()));
        }
        match self.mode {
            ModelMode::FeatureOnly => {
                if self.s.is_some() {
                    return Err(Error::Dim("feature-only mode carries no structure mlp".into()));
                }
            }
            ModelMode::Hop2vecFolded => {
                if self.s.is_some() {
                    return Err(Error::Dim("folded mode carries no structure mlp".into()));
                }
                if d_s != c {
                    return Err(Error::Dim(format!("folded mode needs d_s = c, got {d_s}")));
                }
            }
            ModelMode::Generic | ModelMode::Hop2vecChain => {
                let s = self
                    .s
                    .as_ref()
                    .ok_or_else(|| Error::Dim("structure mlp missing".into()))?;
                if s.in_dim() != d_s || s.out_dim() != c {
                    return Err(Error::Dim(format!(
                        "structure mlp {}->{} vs d_s {d_s}, c {c}",
                        s.in_dim(),
                        s.out_dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Forward results for a set of evaluated nodes of one client.
#[derive(Debug)]
pub struct ForwardCache {
    /// Evaluated global node ids, ascending.
    pub nodes: Vec<u32>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    /// f cache over all internal nodes.
    f_cache: MlpCache,
    /// Column support of the requested combined-adjacency rows.
    support: Vec<u32>,
    /// g outputs and cache over the support (empty in folded mode).
    g_cache: Option<MlpCache>,
}

fn union_support(abar: &CsrMatrix, rows: &[usize]) -> Vec<u32> {
    let mut mark = vec![false; abar.cols];
    for &r in rows {
        let (cols, _) = abar.row(r);
        for &c in cols {
            mark[c as usize] = true;
        }
    }
    (0..abar.cols as u32)
        .filter(|&c| mark[c as usize])
        .collect()
}

/// Per-node logits z_v = sum_u abar_vu g(s_u) + sum_u local_abar_vu f(x_u),
/// evaluated for the requested internal nodes of one client.
///
/// `local_abar` is the L-hop combined matrix over the client's internal
/// nodes; `abar` holds the client's rows of the global combined matrix.
pub fn forward_client(
    view: &ClientView,
    abar: Option<&CombinedAdjacencyPartition>,
    local_abar: &CsrMatrix,
    s_matrix: &Array2<f64>,
    params: &ModelParams,
    nodes: &[u32],
) -> Result<ForwardCache> {
    params.validate(s_matrix.ncols(), params.f.out_dim())?;
    let rows: Vec<usize> = nodes
        .iter()
        .map(|&v| {
            view.local_index(v)
                .ok_or_else(|| Error::InvalidArgument(format!("node {v} not internal")))
        })
        .collect::<Result<_>>()?;

    let features = view.features();
    let (f_out, f_cache) = params.f.forward(&features.view())?;
    let sel: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    let mut logits = local_abar.spmm_rows(&sel, &f_out.view())?;

    let mut support = Vec::new();
    let mut g_cache = None;
    if params.mode != ModelMode::FeatureOnly {
        let abar = abar.ok_or_else(|| Error::Dim("missing combined adjacency rows".into()))?;
        if abar.rows.rows != view.n_internal() {
            return Err(Error::Dim("abar rows do not cover the client".into()));
        }
        support = union_support(&abar.rows, &rows);
        let s_sub = select_rows(s_matrix, &support);
        let g_vals = match (params.mode, &params.s) {
            (ModelMode::Hop2vecFolded, _) => s_sub,
            (_, Some(g_mlp)) => {
                let (out, cache) = g_mlp.forward(&s_sub.view())?;
                g_cache = Some(cache);
                out
            }
            _ => unreachable!("validated above"),
        };
        // z_struct[r] = sum over support of abar[row_r, u] * g_vals[pos(u)]
        let mut pos = vec![usize::MAX; abar.rows.cols];
        for (p, &u) in support.iter().enumerate() {
            pos[u as usize] = p;
        }
        let c = params.f.out_dim();
        for (k, &r) in rows.iter().enumerate() {
            let (cols, vals) = abar.rows.row(r);
            for (&u, &a) in cols.iter().zip(vals) {
                let gp = g_vals.row(pos[u as usize]);
                for j in 0..c {
                    logits[[k, j]] += a * gp[j];
                }
            }
        }
    }
    let probs = softmax_rows(&logits.view());
    Ok(ForwardCache {
        nodes: nodes.to_vec(),
        logits,
        probs,
        f_cache,
        support,
        g_cache,
    })
}

fn select_rows(m: &Array2<f64>, rows: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(k).assign(&m.row(r as usize));
    }
    out
}

/// Gradients of one client's summed cross-entropy loss.
#[derive(Debug, Clone)]
pub struct ClientGrads {
    pub loss: f64,
    pub n_labeled: usize,
    pub f: MlpGrads,
    pub s: Option<MlpGrads>,
    /// d loss / d S over all global nodes (chain and folded modes).
    pub s_rows: Option<Array2<f64>>,
}

/// Loss and closed-form gradients over the client's labeled nodes.
pub fn local_loss_and_gradients(
    view: &ClientView,
    abar: Option<&CombinedAdjacencyPartition>,
    local_abar: &CsrMatrix,
    s_matrix: &Array2<f64>,
    params: &ModelParams,
) -> Result<ClientGrads> {
    let labeled = view.labeled_nodes();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "client {}: no labeled nodes",
            view.client_id
        )));
    }
    let cache = forward_client(view, abar, local_abar, s_matrix, params, &labeled)?;
    gradients_from_cache(view, abar, local_abar, s_matrix, params, &cache, &labeled)
}

/// Same as [`local_loss_and_gradients`] but reuses a forward cache that
/// covers at least the labeled nodes (the per-epoch evaluation pass).
pub fn gradients_from_cache(
    view: &ClientView,
    abar: Option<&CombinedAdjacencyPartition>,
    local_abar: &CsrMatrix,
    s_matrix: &Array2<f64>,
    params: &ModelParams,
    cache: &ForwardCache,
    labeled: &[u32],
) -> Result<ClientGrads> {
    let c = params.f.out_dim();
    let n_lab = labeled.len();
    if n_lab == 0 {
        return Err(Error::InvalidArgument("no labeled nodes".into()));
    }
    // rows of the cache corresponding to the labeled nodes
    let cache_rows: Vec<usize> = labeled
        .iter()
        .map(|&v| {
            cache
                .nodes
                .binary_search(&v)
                .map_err(|_| Error::InvalidArgument(format!("node {v} not in cache")))
        })
        .collect::<Result<_>>()?;

    let mut loss = 0.0;
    let mut dz = Array2::zeros((n_lab, c));
    for (k, (&v, &row)) in labeled.iter().zip(&cache_rows).enumerate() {
        let label = view.labels[view.local_index(v).unwrap()]
            .ok_or_else(|| Error::InvalidArgument(format!("node {v} unlabeled")))?;
        let z = cache.logits.row(row);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = z.iter().map(|&x| (x - zmax).exp()).sum::<f64>().ln() + zmax;
        loss += lse - z[label as usize];
        for j in 0..c {
            dz[[k, j]] = cache.probs[[row, j]] - if j == label as usize { 1.0 } else { 0.0 };
        }
    }

    // feature path: upstream for u in V_i is sum_v local_abar[v, u] dz_v
    let labeled_local: Vec<u32> = labeled
        .iter()
        .map(|&v| view.local_index(v).unwrap() as u32)
        .collect();
    let u_f = local_abar.spmm_rows_t(&labeled_local, &dz.view())?;
    let features = view.features();
    let (f_grads, _) = params.f.backward(&features.view(), &cache.f_cache, &u_f.view())?;

    let (s_grads, s_rows) = if params.mode == ModelMode::FeatureOnly {
        (None, None)
    } else {
        // structure path: upstream for global u is sum_v abar[v, u] dz_v
        let abar = abar.ok_or_else(|| Error::Dim("missing combined adjacency rows".into()))?;
        let u_s_global = abar.rows.spmm_rows_t(&labeled_local, &dz.view())?;
        match (params.mode, &params.s) {
            (ModelMode::Hop2vecFolded, _) => (None, Some(u_s_global)),
            (mode, Some(g_mlp)) => {
                let u_s_sup = select_rows(&u_s_global, &cache.support);
                let s_sub = select_rows(s_matrix, &cache.support);
                let g_cache = cache
                    .g_cache
                    .as_ref()
                    .ok_or_else(|| Error::Dim("missing structure cache".into()))?;
                let (grads, d_input) = g_mlp.backward(&s_sub.view(), g_cache, &u_s_sup.view())?;
                let s_rows = if mode == ModelMode::Hop2vecChain {
                    let mut full = Array2::zeros((s_matrix.nrows(), s_matrix.ncols()));
                    for (p, &u) in cache.support.iter().enumerate() {
                        full.row_mut(u as usize).assign(&d_input.row(p));
                    }
                    Some(full)
                } else {
                    None
                };
                (Some(grads), s_rows)
            }
            _ => unreachable!(),
        }
    };

    Ok(ClientGrads {
        loss,
        n_labeled: n_lab,
        f: f_grads,
        s: s_grads,
        s_rows,
    })
}
