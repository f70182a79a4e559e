//! Experiment runner: configuration, multi-seed execution, and CSV/JSON
//! results emission.
//!
//! Configuration is a flat `key = value` text file mirroring the CLI flags;
//! explicit overrides win over file values. Every run is reproducible from
//! (config, seed): the split, the partition, and all initializations derive
//! child streams from the run seed.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fed::{
    train_central_dgcn, train_central_mlp, train_fedsgd_mlp, train_fedstruct,
    train_fedstruct_hop2vec, train_local_dgcn, HyperParams, OptKind, TrainOutput,
};
use crate::graph::{load_graph, split_labels, GlobalGraph};
use crate::model::ModelMode;
use crate::nsf::NsfMethod;
use crate::partition::{
    build_client_views, partition_kmeans, partition_louvain, partition_random, Partition,
};
use crate::rng::{child_seed, fnv1a64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fedstruct,
    CentralDgcn,
    LocalDgcn,
    CentralMlp,
    FedsgdMlp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Fedstruct => "fedstruct",
            Method::CentralDgcn => "central-dgcn",
            Method::LocalDgcn => "local-dgcn",
            Method::CentralMlp => "central-mlp",
            Method::FedsgdMlp => "fedsgd-mlp",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedstruct" => Ok(Method::Fedstruct),
            "central-dgcn" => Ok(Method::CentralDgcn),
            "local-dgcn" => Ok(Method::LocalDgcn),
            "central-mlp" => Ok(Method::CentralMlp),
            "fedsgd-mlp" => Ok(Method::FedsgdMlp),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partitioner {
    Random,
    Louvain,
    Kmeans,
}

impl std::fmt::Display for Partitioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Partitioner::Random => "random",
            Partitioner::Louvain => "louvain",
            Partitioner::Kmeans => "kmeans",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Partitioner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Partitioner::Random),
            "louvain" => Ok(Partitioner::Louvain),
            "kmeans" => Ok(Partitioner::Kmeans),
            other => Err(Error::Config(format!("unknown partitioner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub method: Method,
    pub partitioner: Partitioner,
    pub clients: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub seeds: Vec<u64>,
    pub hp: HyperParams,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Build from an optional config file plus `key = value` overrides, with
    /// overrides winning.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = file {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                    Error::parse(
                        path.display().to_string(),
                        lineno + 1,
                        "expected key = value",
                    )
                })?;
                kv.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        for (key, value) in overrides {
            kv.insert(key.clone(), value.clone());
        }
        Self::from_map(&kv)
    }

    fn from_map(kv: &BTreeMap<String, String>) -> Result<Self> {
        fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad value '{s}' for {key}")))
        }
        let get = |key: &str| kv.get(key).map(String::as_str);
        let dataset = get("dataset")
            .ok_or_else(|| Error::Config("missing 'dataset'".into()))?
            .into();
        let method: Method = get("method").unwrap_or("fedstruct").parse()?;
        let nsf: NsfMethod = get("nsf").unwrap_or("hop2vec").parse()?;
        let mode = match get("h2v-mode").unwrap_or("chain") {
            "chain" => ModelMode::Hop2vecChain,
            "folded" => ModelMode::Hop2vecFolded,
            other => return Err(Error::Config(format!("unknown h2v-mode '{other}'"))),
        };
        let partitioner: Partitioner = get("partition").unwrap_or("random").parse()?;
        let clients = parse(get("clients").unwrap_or("10"), "clients")?;
        let seeds: Vec<u64> = get("seeds")
            .unwrap_or("0,1,2,3,4,5,6,7,8,9")
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| parse(s.trim(), "seeds"))
            .collect::<Result<_>>()?;
        if seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        let parse_widths = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .filter(|t| !t.is_empty())
                .map(|t| parse(t.trim(), "layers"))
                .collect()
        };
        let beta = match get("beta") {
            None | Some("uniform") => None,
            Some(list) => Some(
                list.split(',')
                    .map(|t| parse::<f64>(t.trim(), "beta"))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let defaults = HyperParams::default();
        let hp = HyperParams {
            lr: parse(get("lr").unwrap_or("0.002"), "lr")?,
            lr_s: parse(get("lr-s").unwrap_or("0.002"), "lr-s")?,
            weight_decay: parse(get("weight-decay").unwrap_or("0.0005"), "weight-decay")?,
            epochs: parse(get("epochs").unwrap_or("40"), "epochs")?,
            l_feat: parse(get("L").unwrap_or("2"), "L")?,
            l_struct: parse(get("Ls").unwrap_or("10"), "Ls")?,
            d_s: parse(get("ds").unwrap_or("256"), "ds")?,
            layers_f: parse_widths(get("layers-f").unwrap_or("64"))?,
            layers_s: parse_widths(get("layers-s").unwrap_or("256"))?,
            beta,
            prune: match get("prune") {
                None | Some("off") => None,
                Some(p) => Some(parse(p, "prune")?),
            },
            nsf,
            mode,
            optimizer: match get("optimizer") {
                None => defaults.optimizer,
                Some(o) => o.parse::<OptKind>()?,
            },
            bias: parse(get("bias").unwrap_or("true"), "bias")?,
        };
        Ok(ExperimentConfig {
            dataset,
            method,
            partitioner,
            clients,
            train_ratio: parse(get("train-ratio").unwrap_or("0.1"), "train-ratio")?,
            val_ratio: parse(get("val-ratio").unwrap_or("0.1"), "val-ratio")?,
            seeds,
            hp,
            out_dir: get("out").map(PathBuf::from),
        })
    }

    /// Canonical `key = value` rendering; its hash ties results to configs.
    pub fn canonical(&self) -> String {
        let hp = &self.hp;
        let beta = match &hp.beta {
            None => "uniform".to_string(),
            Some(w) => w.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        };
        let widths =
            |w: &[usize]| w.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mode = match hp.mode {
            ModelMode::Hop2vecFolded => "folded",
            _ => "chain",
        };
        format!(
            "L = {}\nLs = {}\nbeta = {}\nbias = {}\nclients = {}\ndataset = {}\nds = {}\n\
             epochs = {}\nh2v-mode = {}\nlayers-f = {}\nlayers-s = {}\nlr = {}\nlr-s = {}\n\
             method = {}\nnsf = {}\noptimizer = {:?}\npartition = {}\nprune = {}\nseeds = {}\n\
             train-ratio = {}\nval-ratio = {}\nweight-decay = {}\n",
            hp.l_feat,
            hp.l_struct,
            beta,
            hp.bias,
            self.clients,
            self.dataset.display(),
            hp.d_s,
            hp.epochs,
            mode,
            widths(&hp.layers_f),
            widths(&hp.layers_s),
            hp.lr,
            hp.lr_s,
            self.method,
            hp.nsf,
            hp.optimizer,
            self.partitioner,
            hp.prune.map_or("off".into(), |p| p.to_string()),
            self.seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            self.train_ratio,
            self.val_ratio,
            hp.weight_decay,
        )
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }
}

pub fn make_partition(
    g: &GlobalGraph,
    partitioner: Partitioner,
    k: usize,
    seed: u64,
) -> Result<Partition> {
    match partitioner {
        Partitioner::Random => partition_random(g, k, seed),
        Partitioner::Louvain => partition_louvain(g, k, seed),
        Partitioner::Kmeans => partition_kmeans(g, k, seed),
    }
}

/// One seed's full pipeline: fresh split, partition, views, training.
pub fn run_single(g: &GlobalGraph, cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutput> {
    let split = split_labels(
        g,
        cfg.train_ratio,
        cfg.val_ratio,
        child_seed(seed, "split", 0),
    )?;
    match cfg.method {
        Method::CentralDgcn => train_central_dgcn(g, &split, &cfg.hp, seed, false),
        Method::CentralMlp => train_central_mlp(g, &split, &cfg.hp, seed),
        Method::Fedstruct | Method::LocalDgcn | Method::FedsgdMlp => {
            let partition = make_partition(
                g,
                cfg.partitioner,
                cfg.clients,
                child_seed(seed, "partition", 0),
            )?;
            let views = build_client_views(g, &partition, &split)?;
            let out = match cfg.method {
                Method::Fedstruct => match cfg.hp.nsf {
                    NsfMethod::Hop2vec => {
                        train_fedstruct_hop2vec(g, &views, &split, &cfg.hp, seed)
                    }
                    _ => train_fedstruct(g, &views, &split, &cfg.hp, seed),
                },
                Method::LocalDgcn => train_local_dgcn(g, &views, &split, &cfg.hp, seed),
                Method::FedsgdMlp => train_fedsgd_mlp(g, &views, &split, &cfg.hp, seed),
                _ => unreachable!(),
            }?;
            if let Some(dir) = seed_dir(cfg, seed) {
                partition.export_tsv(dir.join("partition.tsv"))?;
            }
            Ok(out)
        }
    }
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> Option<PathBuf> {
    let dir = cfg.out_dir.as_ref()?.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir).ok()?;
    Some(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_acc: f64,
    pub final_test_acc: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub method: String,
    pub nsf: String,
    pub partitioner: String,
    pub clients: usize,
    pub per_seed: Vec<SeedResult>,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_wall_s: f64,
    pub config_hash: String,
    /// True when at least one seed failed; failures are logged and skipped.
    pub partial: bool,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Run |seeds| independent trainings and summarize. Reported accuracy is the
/// test accuracy at the best-validation epoch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let g = load_graph(&cfg.dataset)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join("config.txt"), cfg.canonical()).map_err(|e| Error::io(dir, e))?;
    }
    let mut results: Vec<(u64, Result<TrainOutput>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_single(&g, cfg, seed)))
        .collect();
    results.sort_by_key(|(seed, _)| *seed);

    let mut per_seed = Vec::new();
    let mut partial = false;
    for (seed, res) in results {
        match res {
            Ok(out) => {
                if let Some(dir) = seed_dir(cfg, seed) {
                    write_seed_outputs(&dir, &out)?;
                }
                per_seed.push(SeedResult {
                    seed,
                    test_acc: out.report.best_val_test_acc,
                    final_test_acc: out.report.final_test_acc,
                    wall_time_s: out.report.wall_time_s,
                });
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                partial = true;
            }
        }
    }
    let accs: Vec<f64> = per_seed.iter().map(|r| r.test_acc).collect();
    let (mean_acc, std_acc) = mean_std(&accs);
    let mean_wall =
        per_seed.iter().map(|r| r.wall_time_s).sum::<f64>() / per_seed.len().max(1) as f64;
    let summary = ExperimentSummary {
        dataset: g.name.clone(),
        method: cfg.method.to_string(),
        nsf: cfg.hp.nsf.to_string(),
        partitioner: cfg.partitioner.to_string(),
        clients: cfg.clients,
        per_seed,
        mean_acc,
        std_acc,
        mean_wall_s: mean_wall,
        config_hash: cfg.config_hash(),
        partial,
    };
    if let Some(dir) = &cfg.out_dir {
        append_results_csv(&dir.join("results.csv"), &summary)?;
    }
    Ok(summary)
}

fn write_seed_outputs(dir: &Path, out: &TrainOutput) -> Result<()> {
    let hist_path = dir.join("history.jsonl");
    let mut hist = File::create(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    for epoch in &out.report.epochs {
        let line = serde_json::to_string(epoch)
            .map_err(|e| Error::Config(format!("history serialization: {e}")))?;
        writeln!(hist, "{line}").map_err(|e| Error::io(&hist_path, e))?;
    }
    let final_path = dir.join("final_metrics.json");
    let report_json = serde_json::to_string_pretty(&out.report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    fs::write(&final_path, report_json).map_err(|e| Error::io(&final_path, e))?;
    let comm_path = dir.join("comm_report.json");
    let comm_json = serde_json::to_string_pretty(&out.report.comm)
        .map_err(|e| Error::Config(format!("comm serialization: {e}")))?;
    fs::write(&comm_path, comm_json).map_err(|e| Error::io(&comm_path, e))?;
    Ok(())
}

pub const RESULTS_HEADER: &str =
    "dataset,method,nsf,partitioner,clients,seeds,mean_test_acc,std_test_acc,mean_wall_s,config_hash";

fn append_results_csv(path: &Path, summary: &ExperimentSummary) -> Result<()> {
    let new = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if new {
        writeln!(f, "{RESULTS_HEADER}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(
        f,
        "{},{},{},{},{},{},{:.4},{:.4},{:.3},{}",
        summary.dataset,
        summary.method,
        summary.nsf,
        summary.partitioner,
        summary.clients,
        summary.per_seed.len(),
        summary.mean_acc * 100.0,
        summary.std_acc * 100.0,
        summary.mean_wall_s,
        summary.config_hash,
    )
    .map_err(|e| Error::io(path, e))
}

/// One experiment per training ratio, validation fixed at 0.1.
pub fn run_label_ratio_sweep(
    cfg: &ExperimentConfig,
    ratios: &[f64],
) -> Result<Vec<(f64, ExperimentSummary)>> {
    if ratios.iter().any(|&r| r <= 0.0 || r >= 1.0) {
        return Err(Error::Config("sweep ratios must lie in (0, 1)".into()));
    }
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut sub = cfg.clone();
        sub.train_ratio = ratio;
        sub.val_ratio = 0.1;
        if let Some(dir) = &cfg.out_dir {
            sub.out_dir = Some(dir.join(format!("ratio_{ratio}")));
        }
        let summary = run_experiment(&sub)?;
        rows.push((ratio, summary));
    }
    if let Some(dir) = &cfg.out_dir {
        let path = dir.join("sweep.csv");
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "train_ratio,mean_test_acc,std_test_acc,config_hash")
            .map_err(|e| Error::io(&path, e))?;
        for (ratio, s) in &rows {
            writeln!(
                f,
                "{ratio},{:.4},{:.4},{}",
                s.mean_acc * 100.0,
                s.std_acc * 100.0,
                s.config_hash
            )
            .map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(rows)
}
