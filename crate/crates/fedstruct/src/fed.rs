//! Server/client orchestration: gradient aggregation, parameter updates,
//! the federated training loops, centralized and local baselines, and
//! evaluation.
//!
//! Each epoch is one full-batch round: every client computes its summed
//! cross-entropy loss and exact gradients, the server averages them over the
//! total labeled-node count and takes one optimizer step. The trainable-NSF
//! variant relays the previous epoch's averaged NSF gradient back to the
//! clients, which apply it before the current epoch's forward pass.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GlobalGraph, LabelSplit, SplitRole};
use crate::model::{
    forward_client, gradients_from_cache, ClientGrads, Mlp, MlpGrads, ModelMode, ModelParams,
};
use crate::nsf::{nsf_degree, nsf_fedstar, nsf_hop2vec_init, NsfMethod};
use crate::partition::ClientView;
use crate::propagate::{
    acquire_partitions, acquire_partitions_pruned, combined_adjacency, BetaSchedule,
    CombinedAdjacencyPartition, CommReport,
};
use crate::rng::{child_rng, child_seed};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptKind {
    /// Plain gradient descent: x <- x - lr * (g + wd * x).
    Sgd,
    /// Adam with coupled L2 weight decay.
    Adam,
}

impl std::str::FromStr for OptKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptKind::Sgd),
            "adam" => Ok(OptKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Training hyper-parameters. Layer lists are the widths after the input
/// layer and must end in the class count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub lr_s: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Feature-path propagation depth.
    pub l_feat: usize,
    /// Structure-path propagation depth.
    pub l_struct: usize,
    /// NSF dimension (trainable NSFs) or one-hot degree cap (fixed NSFs).
    pub d_s: usize,
    pub layers_f: Vec<usize>,
    pub layers_s: Vec<usize>,
    /// Structure-path hop weights; None means uniform 1/L_s.
    pub beta: Option<Vec<f64>>,
    /// Top-(p * n_i) truncation of transmitted adjacency blocks.
    pub prune: Option<usize>,
    pub nsf: NsfMethod,
    pub mode: ModelMode,
    pub optimizer: OptKind,
    pub bias: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr: 0.002,
            lr_s: 0.002,
            weight_decay: 5e-4,
            epochs: 40,
            l_feat: 2,
            l_struct: 10,
            d_s: 256,
            layers_f: vec![64],
            layers_s: vec![256],
            beta: None,
            prune: None,
            nsf: NsfMethod::Hop2vec,
            mode: ModelMode::Hop2vecChain,
            optimizer: OptKind::Adam,
            bias: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.lr_s <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.l_feat < 1 || self.l_struct < 1 {
            return Err(Error::Config("propagation depths must be >= 1".into()));
        }
        if let Some(beta) = &self.beta {
            if beta.len() != self.l_struct {
                return Err(Error::Config(format!(
                    "beta has {} weights but L_s = {}",
                    beta.len(),
                    self.l_struct
                )));
            }
        }
        Ok(())
    }

    pub fn beta_struct(&self) -> Result<BetaSchedule> {
        match &self.beta {
            Some(w) => BetaSchedule::new(w.clone(), true),
            None => Ok(BetaSchedule::uniform(self.l_struct)),
        }
    }

    pub fn beta_feat(&self) -> BetaSchedule {
        BetaSchedule::uniform(self.l_feat)
    }

    /// Full layer chain given the input dimension; accepts lists with or
    /// without the input dimension, requires the output to be c.
    fn chain(widths: &[usize], input: usize, c: usize) -> Result<Vec<usize>> {
        let mut dims = Vec::with_capacity(widths.len() + 1);
        if widths.first() != Some(&input) {
            dims.push(input);
        }
        dims.extend_from_slice(widths);
        if dims.last() != Some(&c) {
            return Err(Error::Config(format!(
                "layer list {widths:?} must end in the class count {c}"
            )));
        }
        if dims.len() < 2 {
            return Err(Error::Config("layer list too short".into()));
        }
        Ok(dims)
    }
}

/// Plain SGD step: x <- x - lr * (g + wd * x). Weight decay applies to
/// weight matrices only; pass wd = 0 for biases and NSFs.
pub fn apply_update(x: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) -> Result<()> {
    if x.len() != grad.len() {
        return Err(Error::Dim("apply_update: length mismatch".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient in apply_update".into()));
    }
    for (xi, gi) in x.iter_mut().zip(grad) {
        *xi -= lr * (gi + weight_decay * *xi);
    }
    Ok(())
}

/// Adam moments for one tensor.
#[derive(Debug, Clone)]
struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state over an ordered list of tensors.
#[derive(Debug, Clone)]
pub struct OptState {
    kind: OptKind,
    lr: f64,
    t: u64,
    slots: Vec<AdamSlot>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    pub fn new(kind: OptKind, lr: f64) -> OptState {
        OptState {
            kind,
            lr,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// Advance the shared step counter; call once per epoch before `step`.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Update one tensor in the fixed slot order of the caller.
    pub fn step(&mut self, slot: usize, x: &mut [f64], grad: &[f64], wd: f64) -> Result<()> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient in optimizer slot {slot}"
            )));
        }
        match self.kind {
            OptKind::Sgd => apply_update(x, grad, self.lr, wd),
            OptKind::Adam => {
                while self.slots.len() <= slot {
                    self.slots.push(AdamSlot {
                        m: Vec::new(),
                        v: Vec::new(),
                    });
                }
                let s = &mut self.slots[slot];
                if s.m.is_empty() {
                    s.m = vec![0.0; x.len()];
                    s.v = vec![0.0; x.len()];
                }
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..x.len() {
                    let g = grad[i] + wd * x[i];
                    s.m[i] = ADAM_BETA1 * s.m[i] + (1.0 - ADAM_BETA1) * g;
                    s.v[i] = ADAM_BETA2 * s.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mh = s.m[i] / bc1;
                    let vh = s.v[i] / bc2;
                    x[i] -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
                }
                Ok(())
            }
        }
    }
}

/// Aggregated gradients, scaled by 1/|labeled| over all clients.
#[derive(Debug, Clone)]
pub struct AggGrads {
    pub f: MlpGrads,
    pub s: Option<MlpGrads>,
    pub s_rows: Option<Array2<f64>>,
    pub loss_sum: f64,
}

/// Sum per-client gradients in ascending client order, divide by the total
/// labeled-node count.
pub fn aggregate_gradients(
    grads: &[ClientGrads],
    params: &ModelParams,
    n_labeled_total: usize,
) -> Result<AggGrads> {
    if n_labeled_total == 0 {
        return Err(Error::InvalidArgument("no labeled nodes in total".into()));
    }
    let mut f = MlpGrads::zeros_like(&params.f);
    let mut s = params.s.as_ref().map(MlpGrads::zeros_like);
    let mut s_rows: Option<Array2<f64>> = None;
    let mut loss_sum = 0.0;
    for g in grads {
        loss_sum += g.loss;
        f.add_assign(&g.f);
        if let (Some(acc), Some(gs)) = (&mut s, &g.s) {
            acc.add_assign(gs);
        }
        if let Some(rows) = &g.s_rows {
            match &mut s_rows {
                Some(acc) => *acc += rows,
                None => s_rows = Some(rows.clone()),
            }
        }
    }
    let scale = 1.0 / n_labeled_total as f64;
    f.scale(scale);
    if let Some(acc) = &mut s {
        acc.scale(scale);
    }
    if let Some(acc) = &mut s_rows {
        *acc *= scale;
    }
    Ok(AggGrads {
        f,
        s,
        s_rows,
        loss_sum,
    })
}

fn update_mlp(
    mlp: &mut Mlp,
    grads: &MlpGrads,
    opt: &mut OptState,
    slot_base: usize,
    wd: f64,
) -> Result<usize> {
    let mut slot = slot_base;
    for (layer, (gw, gb)) in mlp.layers.iter_mut().zip(grads.w.iter().zip(&grads.b)) {
        opt.step(
            slot,
            layer.w.as_slice_mut().unwrap(),
            gw.as_slice().unwrap(),
            wd,
        )?;
        slot += 1;
        opt.step(
            slot,
            layer.b.as_slice_mut().unwrap(),
            gb.as_slice().unwrap(),
            0.0,
        )?;
        slot += 1;
    }
    Ok(slot)
}

/// One server step on the model parameters.
fn update_params(
    params: &mut ModelParams,
    agg: &AggGrads,
    opt: &mut OptState,
    wd: f64,
) -> Result<()> {
    opt.begin_step();
    let next = update_mlp(&mut params.f, &agg.f, opt, 0, wd)?;
    if let (Some(s_mlp), Some(gs)) = (&mut params.s, &agg.s) {
        update_mlp(s_mlp, gs, opt, next, wd)?;
    }
    Ok(())
}

/// Everything one client needs at training time.
#[derive(Debug, Clone)]
pub struct ClientCtx {
    pub view: ClientView,
    pub abar: Option<CombinedAdjacencyPartition>,
    pub local_abar: CsrMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub final_train_acc: f64,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_test_acc: f64,
    pub wall_time_s: f64,
    pub comm: CommReport,
}

impl TrainReport {
    fn from_epochs(epochs: Vec<EpochMetrics>, comm: CommReport, wall: f64) -> TrainReport {
        let last = epochs.last().cloned().unwrap_or(EpochMetrics {
            epoch: 0,
            loss: f64::NAN,
            train_acc: 0.0,
            val_acc: 0.0,
            test_acc: 0.0,
        });
        let mut best = (0usize, f64::NEG_INFINITY, 0.0);
        for m in &epochs {
            if m.val_acc > best.1 {
                best = (m.epoch, m.val_acc, m.test_acc);
            }
        }
        TrainReport {
            final_train_acc: last.train_acc,
            final_val_acc: last.val_acc,
            final_test_acc: last.test_acc,
            best_val_epoch: best.0,
            best_val_acc: best.1.max(0.0),
            best_val_test_acc: best.2,
            epochs,
            wall_time_s: wall,
            comm,
        }
    }
}

/// Trained artifacts plus the report.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub report: TrainReport,
    pub params: ModelParams,
    pub nsf: Array2<f64>,
}

/// Top-1 accuracy over `nodes`, ties broken toward the smaller class id.
pub fn evaluate(
    params: &ModelParams,
    s_matrix: &Array2<f64>,
    ctxs: &[ClientCtx],
    nodes: &[u32],
    truth: &[Option<u32>],
) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("evaluate: empty mask".into()));
    }
    let mut wanted = vec![false; truth.len()];
    for &v in nodes {
        wanted[v as usize] = true;
    }
    let mut correct = 0usize;
    for ctx in ctxs {
        let eval_nodes: Vec<u32> = ctx
            .view
            .internal_nodes
            .iter()
            .copied()
            .filter(|&v| wanted[v as usize])
            .collect();
        if eval_nodes.is_empty() {
            continue;
        }
        let cache = forward_client(
            &ctx.view,
            ctx.abar.as_ref(),
            &ctx.local_abar,
            s_matrix,
            params,
            &eval_nodes,
        )?;
        for (k, &v) in eval_nodes.iter().enumerate() {
            if truth[v as usize] == Some(argmax(cache.probs.row(k).as_slice().unwrap()) as u32) {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

struct EpochEval {
    loss_mean: f64,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
    grads: Vec<ClientGrads>,
}

/// Forward every client on all internal nodes, gather accuracies and
/// per-client gradients of the labeled nodes.
fn epoch_pass(
    ctxs: &[ClientCtx],
    params: &ModelParams,
    s_matrix: &Array2<f64>,
    g: &GlobalGraph,
    split: &LabelSplit,
    n_labeled_total: usize,
    with_grads: bool,
) -> Result<EpochEval> {
    let mut counts = [0usize; 3]; // train, val, test
    let mut correct = [0usize; 3];
    for role in &split.roles {
        counts[role_idx(*role)] += 1;
    }
    let mut grads = Vec::with_capacity(ctxs.len());
    let mut loss_sum = 0.0;
    for ctx in ctxs {
        let cache = forward_client(
            &ctx.view,
            ctx.abar.as_ref(),
            &ctx.local_abar,
            s_matrix,
            params,
            &ctx.view.internal_nodes,
        )?;
        for (k, &v) in ctx.view.internal_nodes.iter().enumerate() {
            let pred = argmax(cache.probs.row(k).as_slice().unwrap()) as u32;
            if g.labels[v as usize] == Some(pred) {
                correct[role_idx(split.roles[v as usize])] += 1;
            }
        }
        let labeled = ctx.view.labeled_nodes();
        if with_grads && !labeled.is_empty() {
            let cg = gradients_from_cache(
                &ctx.view,
                ctx.abar.as_ref(),
                &ctx.local_abar,
                s_matrix,
                params,
                &cache,
                &labeled,
            )?;
            loss_sum += cg.loss;
            grads.push(cg);
        }
    }
    Ok(EpochEval {
        loss_mean: loss_sum / n_labeled_total.max(1) as f64,
        train_acc: ratio(correct[0], counts[0]),
        val_acc: ratio(correct[1], counts[1]),
        test_acc: ratio(correct[2], counts[2]),
        grads,
    })
}

fn role_idx(role: SplitRole) -> usize {
    match role {
        SplitRole::Train => 0,
        SplitRole::Val => 1,
        SplitRole::Test => 2,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The shared server loop. The NSF matrix is trained when `trainable_nsf`
/// and updated with the previous epoch's relayed average gradient.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    ctxs: Vec<ClientCtx>,
    mut params: ModelParams,
    mut s_matrix: Array2<f64>,
    trainable_nsf: bool,
    g: &GlobalGraph,
    split: &LabelSplit,
    hp: &HyperParams,
    mut comm: CommReport,
) -> Result<TrainOutput> {
    let start = Instant::now();
    let n_labeled_total: usize = ctxs.iter().map(|c| c.view.labeled_nodes().len()).sum();
    if n_labeled_total == 0 && hp.epochs > 0 {
        return Err(Error::InvalidArgument("no labeled nodes anywhere".into()));
    }
    let k = ctxs.len() as u64;
    let theta = params.param_count() as u64;
    comm.online_scalars_per_epoch = if k > 1 { 2 * k * theta } else { 0 };
    if trainable_nsf && k > 1 {
        comm.online_scalars_per_epoch += 2 * k * (s_matrix.len() as u64);
    }
    comm.online_epochs = hp.epochs as u64;
    comm.online_scalars_total = comm.online_scalars_per_epoch * hp.epochs as u64;

    if hp.epochs == 0 {
        let eval = epoch_pass(
            &ctxs,
            &params,
            &s_matrix,
            g,
            split,
            n_labeled_total.max(1),
            false,
        )?;
        let report = TrainReport {
            epochs: Vec::new(),
            final_train_acc: eval.train_acc,
            final_val_acc: eval.val_acc,
            final_test_acc: eval.test_acc,
            best_val_epoch: 0,
            best_val_acc: eval.val_acc,
            best_val_test_acc: eval.test_acc,
            wall_time_s: start.elapsed().as_secs_f64(),
            comm,
        };
        return Ok(TrainOutput {
            report,
            params,
            nsf: s_matrix,
        });
    }

    let mut opt = OptState::new(hp.optimizer, hp.lr);
    let mut s_opt = OptState::new(hp.optimizer, hp.lr_s);
    let mut relay: Option<Array2<f64>> = None;
    let mut epochs = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        // clients first apply the relayed average NSF gradient of the
        // previous epoch (zero at epoch 0)
        if trainable_nsf && epoch > 0 {
            if let Some(relayed) = &relay {
                s_opt.begin_step();
                s_opt.step(
                    0,
                    s_matrix.as_slice_mut().unwrap(),
                    relayed.as_slice().unwrap(),
                    0.0,
                )?;
            }
        }
        let eval = epoch_pass(&ctxs, &params, &s_matrix, g, split, n_labeled_total, true)?;
        let agg = aggregate_gradients(&eval.grads, &params, n_labeled_total)?;
        update_params(&mut params, &agg, &mut opt, hp.weight_decay)?;
        if trainable_nsf {
            relay = agg.s_rows.clone();
        }
        epochs.push(EpochMetrics {
            epoch,
            loss: eval.loss_mean,
            train_acc: eval.train_acc,
            val_acc: eval.val_acc,
            test_acc: eval.test_acc,
        });
    }

    let report = TrainReport::from_epochs(epochs, comm, start.elapsed().as_secs_f64());
    Ok(TrainOutput {
        report,
        params,
        nsf: s_matrix,
    })
}

fn init_params(
    g: &GlobalGraph,
    hp: &HyperParams,
    d_s: usize,
    mode: ModelMode,
    seed: u64,
) -> Result<ModelParams> {
    let mut rng = child_rng(seed, "model-init", 0);
    let f_dims = HyperParams::chain(&hp.layers_f, g.d, g.c)?;
    let f = Mlp::init(&f_dims, &mut rng, hp.bias)?;
    let s = match mode {
        ModelMode::Generic | ModelMode::Hop2vecChain => {
            let s_dims = HyperParams::chain(&hp.layers_s, d_s, g.c)?;
            Some(Mlp::init(&s_dims, &mut rng, hp.bias)?)
        }
        ModelMode::Hop2vecFolded | ModelMode::FeatureOnly => None,
    };
    let params = ModelParams { f, s, mode };
    params.validate(d_s, g.c)?;
    Ok(params)
}

fn local_combined(views: &[ClientView], beta_feat: &BetaSchedule) -> Result<Vec<CsrMatrix>> {
    views
        .iter()
        .map(|v| combined_adjacency(&v.local_norm_adj, beta_feat))
        .collect()
}

/// Offline scalar count of sharing every client's NSF rows with the other
/// K-1 clients.
fn nsf_share_scalars(views: &[ClientView], d_s: usize) -> u64 {
    let k = views.len() as u64;
    if k <= 1 {
        return 0;
    }
    views
        .iter()
        .map(|v| (v.n_internal() as u64) * (d_s as u64) * (k - 1))
        .sum()
}

/// Federated training with fixed NSFs (one-hot degree or the degree plus
/// return-probability concatenation).
pub fn train_fedstruct(
    g: &GlobalGraph,
    views: &[ClientView],
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutput> {
    hp.validate()?;
    if hp.nsf == NsfMethod::Hop2vec {
        return Err(Error::Config(
            "train_fedstruct handles fixed NSFs; use train_fedstruct_hop2vec".into(),
        ));
    }
    let beta = hp.beta_struct()?;
    let acq = match hp.prune {
        Some(p) => acquire_partitions_pruned(views, &beta, p)?,
        None => acquire_partitions(views, &beta)?,
    };
    let nsf = match hp.nsf {
        NsfMethod::Deg => nsf_degree(views, hp.d_s)?,
        NsfMethod::Fedstar => nsf_fedstar(views, &acq, hp.d_s)?,
        NsfMethod::Hop2vec => unreachable!(),
    };
    let mut comm = acq.report.clone();
    comm.offline_scalars += nsf_share_scalars(views, nsf.d_s());

    let params = init_params(g, hp, nsf.d_s(), ModelMode::Generic, seed)?;
    let locals = local_combined(views, &hp.beta_feat())?;
    let ctxs: Vec<ClientCtx> = views
        .iter()
        .zip(acq.partitions)
        .zip(locals)
        .map(|((view, abar), local_abar)| ClientCtx {
            view: view.clone(),
            abar: Some(abar),
            local_abar,
        })
        .collect();
    run_epochs(ctxs, params, nsf.values, false, g, split, hp, comm)
}

/// Federated training with trainable NSFs co-optimized with the model.
pub fn train_fedstruct_hop2vec(
    g: &GlobalGraph,
    views: &[ClientView],
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutput> {
    hp.validate()?;
    if hp.nsf != NsfMethod::Hop2vec {
        return Err(Error::Config("hop2vec trainer needs nsf = hop2vec".into()));
    }
    let mode = match hp.mode {
        ModelMode::Hop2vecFolded | ModelMode::Hop2vecChain => hp.mode,
        _ => ModelMode::Hop2vecChain,
    };
    let d_s = if mode == ModelMode::Hop2vecFolded {
        g.c
    } else {
        hp.d_s
    };
    let beta = hp.beta_struct()?;
    let acq = match hp.prune {
        Some(p) => acquire_partitions_pruned(views, &beta, p)?,
        None => acquire_partitions(views, &beta)?,
    };
    let nsf = nsf_hop2vec_init(g.n, d_s, child_seed(seed, "nsf", 0))?;
    let mut comm = acq.report.clone();
    comm.offline_scalars += nsf_share_scalars(views, d_s);

    let params = init_params(g, hp, d_s, mode, seed)?;
    let locals = local_combined(views, &hp.beta_feat())?;
    let ctxs: Vec<ClientCtx> = views
        .iter()
        .zip(acq.partitions)
        .zip(locals)
        .map(|((view, abar), local_abar)| ClientCtx {
            view: view.clone(),
            abar: Some(abar),
            local_abar,
        })
        .collect();
    run_epochs(ctxs, params, nsf.values, true, g, split, hp, comm)
}

/// Build the single all-owning client of the centralized setting.
fn central_view(g: &GlobalGraph, split: &LabelSplit) -> Result<ClientView> {
    let p = crate::partition::Partition {
        k: 1,
        assignment: vec![0; g.n],
    };
    Ok(crate::partition::build_client_views(g, &p, split)?.remove(0))
}

/// Single-party decoupled-GCN training on the global graph. With
/// `with_structure` the structure path runs from the oracle combined matrix
/// (the K=1 reference for the federated trainers); without it this is the
/// plain feature-only baseline.
pub fn train_central_dgcn(
    g: &GlobalGraph,
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
    with_structure: bool,
) -> Result<TrainOutput> {
    hp.validate()?;
    let view = central_view(g, split)?;
    let local_abar = combined_adjacency(&view.local_norm_adj, &hp.beta_feat())?;
    if !with_structure {
        let params = init_params(g, hp, 0, ModelMode::FeatureOnly, seed)?;
        let ctxs = vec![ClientCtx {
            view,
            abar: None,
            local_abar,
        }];
        return run_epochs(
            ctxs,
            params,
            Array2::zeros((g.n, 0)),
            false,
            g,
            split,
            hp,
            CommReport::default(),
        );
    }
    // structure path from the oracle combined matrix over the global graph
    let beta = hp.beta_struct()?;
    let a_hat = crate::graph::normalized_self_loop_adjacency(g);
    let abar = CombinedAdjacencyPartition {
        client_id: 0,
        rows: combined_adjacency(&a_hat, &beta)?,
    };
    let (mode, d_s, nsf, trainable) = match hp.nsf {
        NsfMethod::Hop2vec => {
            let mode = match hp.mode {
                ModelMode::Hop2vecFolded => ModelMode::Hop2vecFolded,
                _ => ModelMode::Hop2vecChain,
            };
            let d_s = if mode == ModelMode::Hop2vecFolded {
                g.c
            } else {
                hp.d_s
            };
            let nsf = nsf_hop2vec_init(g.n, d_s, child_seed(seed, "nsf", 0))?;
            (mode, d_s, nsf.values, true)
        }
        NsfMethod::Deg => {
            let nsf = nsf_degree(std::slice::from_ref(&view), hp.d_s)?;
            (ModelMode::Generic, nsf.d_s(), nsf.values, false)
        }
        NsfMethod::Fedstar => {
            let acq = acquire_partitions(std::slice::from_ref(&view), &beta)?;
            let nsf = nsf_fedstar(std::slice::from_ref(&view), &acq, hp.d_s)?;
            (ModelMode::Generic, nsf.d_s(), nsf.values, false)
        }
    };
    let params = init_params(g, hp, d_s, mode, seed)?;
    let ctxs = vec![ClientCtx {
        view,
        abar: Some(abar),
        local_abar,
    }];
    run_epochs(
        ctxs,
        params,
        nsf,
        trainable,
        g,
        split,
        hp,
        CommReport::default(),
    )
}

/// Centralized MLP: no propagation at all.
pub fn train_central_mlp(
    g: &GlobalGraph,
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutput> {
    hp.validate()?;
    let view = central_view(g, split)?;
    let params = init_params(g, hp, 0, ModelMode::FeatureOnly, seed)?;
    let ctxs = vec![ClientCtx {
        local_abar: CsrMatrix::identity(view.n_internal()),
        view,
        abar: None,
    }];
    run_epochs(
        ctxs,
        params,
        Array2::zeros((g.n, 0)),
        false,
        g,
        split,
        hp,
        CommReport::default(),
    )
}

/// Federated MLP with exact full-batch gradients: clients share one model
/// and the propagation matrix is the identity.
pub fn train_fedsgd_mlp(
    g: &GlobalGraph,
    views: &[ClientView],
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutput> {
    hp.validate()?;
    let params = init_params(g, hp, 0, ModelMode::FeatureOnly, seed)?;
    let ctxs: Vec<ClientCtx> = views
        .iter()
        .map(|view| ClientCtx {
            local_abar: CsrMatrix::identity(view.n_internal()),
            view: view.clone(),
            abar: None,
        })
        .collect();
    run_epochs(
        ctxs,
        params,
        Array2::zeros((g.n, 0)),
        false,
        g,
        split,
        hp,
        CommReport::default(),
    )
}

/// Every client trains its own feature-path model on its own subgraph.
/// Reported accuracy aggregates each client's predictions on its own nodes,
/// at the client's own best-validation epoch, as a node-weighted mean.
pub fn train_local_dgcn(
    g: &GlobalGraph,
    views: &[ClientView],
    split: &LabelSplit,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutput> {
    hp.validate()?;
    let start = Instant::now();
    let beta_feat = hp.beta_feat();
    let mut n_by_role = [0usize; 3];
    for role in &split.roles {
        n_by_role[role_idx(*role)] += 1;
    }
    let mut per_epoch_correct = vec![[0usize; 3]; hp.epochs];
    let mut per_epoch_loss = vec![0.0f64; hp.epochs];
    let mut best_correct = [0usize; 3];
    let mut total_labeled = 0usize;

    for view in views {
        let labeled = view.labeled_nodes();
        if labeled.is_empty() {
            log::warn!(
                "local baseline: client {} has no labeled nodes, skipped",
                view.client_id
            );
            continue;
        }
        total_labeled += labeled.len();
        let local_abar = combined_adjacency(&view.local_norm_adj, &beta_feat)?;
        let mut params = init_params(
            g,
            hp,
            0,
            ModelMode::FeatureOnly,
            child_seed(seed, "local-model", view.client_id as u64),
        )?;
        let s_dummy = Array2::zeros((g.n, 0));
        let mut opt = OptState::new(hp.optimizer, hp.lr);
        let mut best: (f64, [usize; 3]) = (f64::NEG_INFINITY, [0, 0, 0]);
        for epoch in 0..hp.epochs {
            let cache = forward_client(
                view,
                None,
                &local_abar,
                &s_dummy,
                &params,
                &view.internal_nodes,
            )?;
            let mut correct = [0usize; 3];
            let mut client_counts = [0usize; 3];
            for (k, &v) in view.internal_nodes.iter().enumerate() {
                let role = role_idx(split.roles[v as usize]);
                client_counts[role] += 1;
                let pred = argmax(cache.probs.row(k).as_slice().unwrap()) as u32;
                if g.labels[v as usize] == Some(pred) {
                    correct[role] += 1;
                }
            }
            let cg = gradients_from_cache(
                view,
                None,
                &local_abar,
                &s_dummy,
                &params,
                &cache,
                &labeled,
            )?;
            per_epoch_loss[epoch] += cg.loss;
            for r in 0..3 {
                per_epoch_correct[epoch][r] += correct[r];
            }
            let val_acc = ratio(correct[1], client_counts[1]);
            if val_acc > best.0 {
                best = (val_acc, correct);
            }
            let agg = aggregate_gradients(std::slice::from_ref(&cg), &params, labeled.len())?;
            update_params(&mut params, &agg, &mut opt, hp.weight_decay)?;
        }
        for r in 0..3 {
            best_correct[r] += best.1[r];
        }
    }

    let epochs: Vec<EpochMetrics> = (0..hp.epochs)
        .map(|epoch| EpochMetrics {
            epoch,
            loss: per_epoch_loss[epoch] / total_labeled.max(1) as f64,
            train_acc: ratio(per_epoch_correct[epoch][0], n_by_role[0]),
            val_acc: ratio(per_epoch_correct[epoch][1], n_by_role[1]),
            test_acc: ratio(per_epoch_correct[epoch][2], n_by_role[2]),
        })
        .collect();
    let mut report =
        TrainReport::from_epochs(epochs, CommReport::default(), start.elapsed().as_secs_f64());
    // node-weighted aggregate at each client's own best-validation epoch
    report.best_val_acc = ratio(best_correct[1], n_by_role[1]);
    report.best_val_test_acc = ratio(best_correct[2], n_by_role[2]);
    report.best_val_epoch = 0;
    Ok(TrainOutput {
        report,
        params: init_params(g, hp, 0, ModelMode::FeatureOnly, seed)?,
        nsf: Array2::zeros((g.n, 0)),
    })
}

/// Model checkpoint: layer shapes plus row-major values, versioned.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ModelParams,
    pub nsf: Array2<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Config(format!("checkpoint write: {e}")))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: 0,
                msg: e.to_string(),
            })?;
        if ckpt.version != 1 {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::split_labels;
    use crate::partition::{build_client_views, partition_random, Partition};
    use ndarray::arr2;
    use rand::Rng;

    fn random_labeled_graph(seed: u64, n: usize, d: usize, c: usize) -> GlobalGraph {
        let mut rng = child_rng(seed, "fed-test-graph", 0);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                if rng.gen::<f64>() < 3.0 / n as f64 {
                    edges.push((u, v));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1));
        }
        let features = Array2::from_shape_fn((n, d), |_| rng.gen::<f64>() - 0.5);
        let labels = (0..n).map(|_| Some(rng.gen_range(0..c as u32))).collect();
        GlobalGraph::new("t", n, edges, features, labels, c).unwrap()
    }

    fn tiny_hp(c: usize) -> HyperParams {
        HyperParams {
            lr: 0.01,
            lr_s: 0.01,
            weight_decay: 1e-4,
            epochs: 4,
            l_feat: 2,
            l_struct: 3,
            d_s: 5,
            layers_f: vec![6, c],
            layers_s: vec![6, c],
            beta: None,
            prune: None,
            nsf: NsfMethod::Hop2vec,
            mode: ModelMode::Hop2vecChain,
            optimizer: OptKind::Adam,
            bias: true,
        }
    }

    #[test]
    fn apply_update_plain_sgd() {
        let mut x = vec![1.0, -2.0];
        apply_update(&mut x, &[0.5, 0.5], 0.1, 0.0).unwrap();
        assert_eq!(x, vec![0.95, -2.05]);
    }

    #[test]
    fn apply_update_weight_decay_scales_params() {
        let mut x = vec![2.0];
        apply_update(&mut x, &[0.0], 0.1, 0.5).unwrap();
        assert!((x[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() <= 1e-15);
    }

    #[test]
    fn apply_update_quadratic_iterate() {
        // minimize (x - 3)^2 / 2, gradient x - 3, from x = 0, lr 0.5
        let mut x = vec![0.0];
        for _ in 0..3 {
            let g = x[0] - 3.0;
            apply_update(&mut x, &[g], 0.5, 0.0).unwrap();
        }
        // iterates: 1.5, 2.25, 2.625
        assert!((x[0] - 2.625).abs() <= 1e-15);
    }

    #[test]
    fn apply_update_rejects_non_finite() {
        let mut x = vec![0.0];
        assert!(apply_update(&mut x, &[f64::NAN], 0.1, 0.0).is_err());
    }

    #[test]
    fn aggregate_matches_hand_average() {
        let g = random_labeled_graph(1, 8, 3, 2);
        let split = split_labels(&g, 0.8, 0.0, 1).unwrap();
        let p = partition_random(&g, 2, 1).unwrap();
        let views = build_client_views(&g, &p, &split).unwrap();
        let hp = tiny_hp(2);
        let params = init_params(&g, &hp, 5, ModelMode::Hop2vecChain, 3).unwrap();
        let s = nsf_hop2vec_init(g.n, 5, 3).unwrap().values;
        let beta = hp.beta_struct().unwrap();
        let acq = acquire_partitions(&views, &beta).unwrap();
        let locals = local_combined(&views, &hp.beta_feat()).unwrap();
        let mut grads = Vec::new();
        let mut n_lab = 0;
        for (i, view) in views.iter().enumerate() {
            if view.labeled_nodes().is_empty() {
                continue;
            }
            n_lab += view.labeled_nodes().len();
            grads.push(
                crate::model::local_loss_and_gradients(
                    view,
                    Some(&acq.partitions[i]),
                    &locals[i],
                    &s,
                    &params,
                )
                .unwrap(),
            );
        }
        let agg = aggregate_gradients(&grads, &params, n_lab).unwrap();
        // spot check one weight entry
        let want: f64 = grads.iter().map(|g| g.f.w[0][[0, 0]]).sum::<f64>() / n_lab as f64;
        assert!((agg.f.w[0][[0, 0]] - want).abs() <= 1e-15);
    }

    #[test]
    fn single_client_aggregate_divides_by_labeled() {
        let g = random_labeled_graph(2, 6, 3, 2);
        let split = split_labels(&g, 1.0, 0.0, 2).unwrap();
        let p = Partition {
            k: 1,
            assignment: vec![0; 6],
        };
        let views = build_client_views(&g, &p, &split).unwrap();
        let hp = tiny_hp(2);
        let params = init_params(&g, &hp, 5, ModelMode::Hop2vecChain, 3).unwrap();
        let s = nsf_hop2vec_init(g.n, 5, 3).unwrap().values;
        let beta = hp.beta_struct().unwrap();
        let acq = acquire_partitions(&views, &beta).unwrap();
        let locals = local_combined(&views, &hp.beta_feat()).unwrap();
        let cg = crate::model::local_loss_and_gradients(
            &views[0],
            Some(&acq.partitions[0]),
            &locals[0],
            &s,
            &params,
        )
        .unwrap();
        let agg = aggregate_gradients(std::slice::from_ref(&cg), &params, 6).unwrap();
        assert!((agg.f.w[0][[0, 0]] - cg.f.w[0][[0, 0]] / 6.0).abs() <= 1e-15);
    }

    #[test]
    fn zero_epochs_reports_initial_metrics_only() {
        let g = random_labeled_graph(3, 10, 3, 2);
        let split = split_labels(&g, 0.5, 0.2, 3).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 2, 3).unwrap(), &split).unwrap();
        let mut hp = tiny_hp(2);
        hp.epochs = 0;
        let out = train_fedstruct_hop2vec(&g, &views, &split, &hp, 0).unwrap();
        assert!(out.report.epochs.is_empty());
        assert!(out.report.final_test_acc >= 0.0);
        assert_eq!(out.report.comm.online_scalars_total, 0);
    }

    #[test]
    fn k1_fedstruct_matches_central_losses() {
        let g = random_labeled_graph(4, 14, 4, 3);
        let split = split_labels(&g, 0.5, 0.2, 4).unwrap();
        let p = Partition {
            k: 1,
            assignment: vec![0; 14],
        };
        let views = build_client_views(&g, &p, &split).unwrap();
        for nsf in [NsfMethod::Deg, NsfMethod::Hop2vec] {
            let mut hp = tiny_hp(3);
            hp.nsf = nsf;
            hp.d_s = if nsf == NsfMethod::Deg { 6 } else { 5 };
            let fed = match nsf {
                NsfMethod::Hop2vec => train_fedstruct_hop2vec(&g, &views, &split, &hp, 7).unwrap(),
                _ => train_fedstruct(&g, &views, &split, &hp, 7).unwrap(),
            };
            let central = train_central_dgcn(&g, &split, &hp, 7, true).unwrap();
            for (a, b) in fed.report.epochs.iter().zip(&central.report.epochs) {
                assert!(
                    (a.loss - b.loss).abs() <= 1e-12,
                    "nsf {nsf:?} epoch {}: {} vs {}",
                    a.epoch,
                    a.loss,
                    b.loss
                );
            }
        }
    }

    #[test]
    fn fedsgd_mlp_k1_equals_central_mlp() {
        let g = random_labeled_graph(5, 12, 3, 2);
        let split = split_labels(&g, 0.5, 0.2, 5).unwrap();
        let p = Partition {
            k: 1,
            assignment: vec![0; 12],
        };
        let views = build_client_views(&g, &p, &split).unwrap();
        let hp = tiny_hp(2);
        let fed = train_fedsgd_mlp(&g, &views, &split, &hp, 9).unwrap();
        let central = train_central_mlp(&g, &split, &hp, 9).unwrap();
        for (a, b) in fed.report.epochs.iter().zip(&central.report.epochs) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.test_acc, b.test_acc);
        }
    }

    #[test]
    fn lambda_s_zero_freezes_nsf() {
        let g = random_labeled_graph(6, 12, 3, 2);
        let split = split_labels(&g, 0.5, 0.2, 6).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 2, 6).unwrap(), &split).unwrap();
        let mut hp = tiny_hp(2);
        hp.lr_s = 1e-300; // effectively zero but passes validation
        let out = train_fedstruct_hop2vec(&g, &views, &split, &hp, 11).unwrap();
        let init = nsf_hop2vec_init(g.n, hp.d_s, child_seed(11, "nsf", 0)).unwrap();
        let max_shift = (&out.nsf - &init.values)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max_shift <= 1e-290);
    }

    #[test]
    fn determinism_same_seed_same_metrics() {
        let g = random_labeled_graph(7, 15, 3, 3);
        let split = split_labels(&g, 0.5, 0.2, 7).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 3, 7).unwrap(), &split).unwrap();
        let hp = tiny_hp(3);
        let mut a = train_fedstruct_hop2vec(&g, &views, &split, &hp, 13).unwrap();
        let mut b = train_fedstruct_hop2vec(&g, &views, &split, &hp, 13).unwrap();
        a.report.wall_time_s = 0.0;
        b.report.wall_time_s = 0.0;
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }

    #[test]
    fn federation_equals_centralized_one_step() {
        // one epoch of federated training must equal one centralized step on
        // the same global objective built from the same combined matrix
        let g = random_labeled_graph(8, 20, 3, 2);
        let split = split_labels(&g, 0.5, 0.2, 8).unwrap();
        for k in [2usize, 3] {
            let p = partition_random(&g, k, 8).unwrap();
            let views = build_client_views(&g, &p, &split).unwrap();
            let mut hp = tiny_hp(2);
            hp.epochs = 1;
            hp.optimizer = OptKind::Sgd;
            let out = train_fedstruct_hop2vec(&g, &views, &split, &hp, 17).unwrap();

            // test-side centralized gradient of the same objective
            let beta = hp.beta_struct().unwrap();
            let acq = acquire_partitions(&views, &beta).unwrap();
            let locals = local_combined(&views, &hp.beta_feat()).unwrap();
            let params = init_params(&g, &hp, hp.d_s, ModelMode::Hop2vecChain, 17).unwrap();
            let s = nsf_hop2vec_init(g.n, hp.d_s, child_seed(17, "nsf", 0)).unwrap();
            let mut n_lab = 0;
            let mut grads = Vec::new();
            for (i, view) in views.iter().enumerate() {
                if view.labeled_nodes().is_empty() {
                    continue;
                }
                n_lab += view.labeled_nodes().len();
                grads.push(
                    crate::model::local_loss_and_gradients(
                        view,
                        Some(&acq.partitions[i]),
                        &locals[i],
                        &s.values,
                        &params,
                    )
                    .unwrap(),
                );
            }
            let agg = aggregate_gradients(&grads, &params, n_lab).unwrap();
            let mut expect = params.clone();
            let mut opt = OptState::new(OptKind::Sgd, hp.lr);
            update_params(&mut expect, &agg, &mut opt, hp.weight_decay).unwrap();
            for (a, b) in out.params.f.layers.iter().zip(&expect.f.layers) {
                let diff = (&a.w - &b.w).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(diff <= 1e-12, "k={k} diff {diff}");
            }
        }
    }

    #[test]
    fn sgd_monotone_loss_at_small_lr() {
        let g = random_labeled_graph(9, 20, 4, 3);
        let split = split_labels(&g, 0.5, 0.2, 9).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 2, 9).unwrap(), &split).unwrap();
        let mut hp = tiny_hp(3);
        hp.optimizer = OptKind::Sgd;
        hp.lr = 1e-4;
        hp.lr_s = 1e-4;
        hp.weight_decay = 0.0;
        hp.epochs = 5;
        let out = train_fedstruct_hop2vec(&g, &views, &split, &hp, 19).unwrap();
        for w in out.report.epochs.windows(2) {
            assert!(
                w[1].loss <= w[0].loss + 1e-12,
                "loss increased: {} -> {}",
                w[0].loss,
                w[1].loss
            );
        }
    }

    #[test]
    fn evaluate_perfect_and_tiebreak() {
        let g = random_labeled_graph(10, 8, 3, 2);
        let split = split_labels(&g, 1.0, 0.0, 10).unwrap();
        let p = Partition {
            k: 1,
            assignment: vec![0; 8],
        };
        let views = build_client_views(&g, &p, &split).unwrap();
        let hp = tiny_hp(2);
        // zero model predicts uniformly; tie-break picks class 0 always
        let mut params = init_params(&g, &hp, 0, ModelMode::FeatureOnly, 0).unwrap();
        for l in &mut params.f.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let ctxs = vec![ClientCtx {
            local_abar: CsrMatrix::identity(8),
            view: views[0].clone(),
            abar: None,
        }];
        let nodes: Vec<u32> = (0..8).collect();
        let acc = evaluate(&params, &Array2::zeros((8, 0)), &ctxs, &nodes, &g.labels).unwrap();
        let class0 = g.labels.iter().filter(|l| **l == Some(0)).count();
        assert!((acc - class0 as f64 / 8.0).abs() <= 1e-12);
        // a perfect predictor scores 1: bake the labels into the bias
        let mut perfect = params.clone();
        perfect.f.layers.last_mut().unwrap().b.fill(0.0);
        // per-node bias is impossible; instead check via probs of an
        // oracle-free shortcut: use labels as one-hot logits through S
        let _ = perfect;
        let empty = evaluate(&params, &Array2::zeros((8, 0)), &ctxs, &[], &g.labels);
        assert!(empty.is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let g = random_labeled_graph(11, 8, 3, 2);
        let hp = tiny_hp(2);
        let params = init_params(&g, &hp, 5, ModelMode::Hop2vecChain, 1).unwrap();
        let ckpt = Checkpoint {
            version: 1,
            params,
            nsf: Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64),
        };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("model.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.nsf, ckpt.nsf);
        assert_eq!(
            back.params.f.layers[0].w,
            ckpt.params.f.layers[0].w
        );
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let mut opt = OptState::new(OptKind::Adam, 0.01);
        let mut x = vec![1.0, 1.0];
        opt.begin_step();
        opt.step(0, &mut x, &[0.3, -2.0], 0.0).unwrap();
        // first Adam step moves each coordinate by ~lr in the gradient sign
        assert!((x[0] - (1.0 - 0.01)).abs() <= 1e-6);
        assert!((x[1] - (1.0 + 0.01)).abs() <= 1e-6);
    }

    #[test]
    fn local_baseline_runs_and_reports() {
        let g = random_labeled_graph(12, 24, 4, 3);
        let split = split_labels(&g, 0.4, 0.2, 12).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 3, 12).unwrap(), &split).unwrap();
        let mut hp = tiny_hp(3);
        hp.epochs = 3;
        let out = train_local_dgcn(&g, &views, &split, &hp, 21).unwrap();
        assert_eq!(out.report.epochs.len(), 3);
        assert!(out.report.best_val_test_acc >= 0.0 && out.report.best_val_test_acc <= 1.0);
        assert_eq!(out.report.comm.blocks_sent, 0);
    }

    #[test]
    fn mlp_on_label_independent_features_is_near_chance() {
        // labels independent of features: accuracy ~ max class frequency
        // under the tie-broken argmax; just require below a loose bound
        let g = random_labeled_graph(13, 60, 4, 4);
        let split = split_labels(&g, 0.5, 0.2, 13).unwrap();
        let mut hp = tiny_hp(4);
        hp.epochs = 10;
        let out = train_central_mlp(&g, &split, &hp, 23).unwrap();
        assert!(
            out.report.best_val_test_acc <= 0.65,
            "acc {}",
            out.report.best_val_test_acc
        );
    }

    #[test]
    fn grad_check_through_trainer_one_sgd_step() {
        // finite differences of the mean loss against the first SGD step
        let g = random_labeled_graph(14, 10, 3, 2);
        let split = split_labels(&g, 0.6, 0.2, 14).unwrap();
        let views = build_client_views(&g, &partition_random(&g, 2, 14).unwrap(), &split).unwrap();
        let mut hp = tiny_hp(2);
        hp.optimizer = OptKind::Sgd;
        hp.weight_decay = 0.0;
        hp.epochs = 1;
        let out = train_fedstruct_hop2vec(&g, &views, &split, &hp, 29).unwrap();
        let params0 = init_params(&g, &hp, hp.d_s, ModelMode::Hop2vecChain, 29).unwrap();
        // implied gradient from the parameter delta
        let implied = (params0.f.layers[0].w[[0, 0]] - out.params.f.layers[0].w[[0, 0]]) / hp.lr;
        // finite differences of the global mean loss at params0
        let beta = hp.beta_struct().unwrap();
        let acq = acquire_partitions(&views, &beta).unwrap();
        let locals = local_combined(&views, &hp.beta_feat()).unwrap();
        let s = nsf_hop2vec_init(g.n, hp.d_s, child_seed(29, "nsf", 0)).unwrap();
        let n_lab: usize = views.iter().map(|v| v.labeled_nodes().len()).sum();
        let loss_at = |params: &ModelParams| -> f64 {
            let mut total = 0.0;
            for (i, view) in views.iter().enumerate() {
                if view.labeled_nodes().is_empty() {
                    continue;
                }
                total += crate::model::local_loss_and_gradients(
                    view,
                    Some(&acq.partitions[i]),
                    &locals[i],
                    &s.values,
                    params,
                )
                .unwrap()
                .loss;
            }
            total / n_lab as f64
        };
        let h = 1e-5;
        let mut p = params0.clone();
        p.f.layers[0].w[[0, 0]] += h;
        let lp = loss_at(&p);
        p.f.layers[0].w[[0, 0]] -= 2.0 * h;
        let lm = loss_at(&p);
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            (fd - implied).abs() <= 1e-5 * fd.abs().max(1.0),
            "fd {fd} vs implied {implied}"
        );
    }
}
