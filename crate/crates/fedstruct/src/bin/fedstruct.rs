//! Command-line front end for running experiments, label-ratio sweeps, and
//! partition exports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedstruct::graph::load_graph;
use fedstruct::rng::child_seed;
use fedstruct::xp::{
    make_partition, run_experiment, run_label_ratio_sweep, ExperimentConfig, Partitioner,
};

#[derive(Parser)]
#[command(name = "fedstruct", about = "Subgraph federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment and emit results.csv.
    Run(RunArgs),
    /// Run one experiment per training-label ratio (validation fixed at 0.1).
    Sweep(SweepArgs),
    /// Export a partition as partition.tsv for replay.
    PartitionExport(PartitionExportArgs),
}

/// Flags mirror the `key = value` config file entries; explicit flags
/// override file values.
#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (meta.json, nodes.tsv, edges.tsv).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// fedstruct | central-dgcn | local-dgcn | central-mlp | fedsgd-mlp
    #[arg(long)]
    method: Option<String>,
    /// deg | fedstar | hop2vec
    #[arg(long)]
    nsf: Option<String>,
    /// folded | chain
    #[arg(long = "h2v-mode")]
    h2v_mode: Option<String>,
    /// random | louvain | kmeans
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long = "train-ratio")]
    train_ratio: Option<f64>,
    #[arg(long = "val-ratio")]
    val_ratio: Option<f64>,
    /// Comma-separated run seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "lr-s")]
    lr_s: Option<f64>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    /// Feature MLP widths after the input layer, ending in the class count.
    #[arg(long = "layers-f")]
    layers_f: Option<String>,
    /// Structure MLP widths after the input layer, ending in the class count.
    #[arg(long = "layers-s")]
    layers_s: Option<String>,
    /// Feature-path propagation depth.
    #[arg(long = "L")]
    l_feat: Option<usize>,
    /// Structure-path propagation depth.
    #[arg(long = "Ls")]
    l_struct: Option<usize>,
    /// NSF dimension / one-hot degree cap.
    #[arg(long)]
    ds: Option<usize>,
    /// "uniform" or comma-separated hop weights.
    #[arg(long)]
    beta: Option<String>,
    /// Top-(p * n_i) block truncation; "off" disables.
    #[arg(long)]
    prune: Option<String>,
    /// sgd | adam
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    bias: Option<bool>,
    /// Output directory for results.csv and per-seed artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                kv.push((key.to_string(), v));
            }
        };
        push("dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        push("method", self.method.clone());
        push("nsf", self.nsf.clone());
        push("h2v-mode", self.h2v_mode.clone());
        push("partition", self.partition.clone());
        push("clients", self.clients.map(|v| v.to_string()));
        push("train-ratio", self.train_ratio.map(|v| v.to_string()));
        push("val-ratio", self.val_ratio.map(|v| v.to_string()));
        push("seeds", self.seeds.clone());
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("lr-s", self.lr_s.map(|v| v.to_string()));
        push("weight-decay", self.weight_decay.map(|v| v.to_string()));
        push("layers-f", self.layers_f.clone());
        push("layers-s", self.layers_s.clone());
        push("L", self.l_feat.map(|v| v.to_string()));
        push("Ls", self.l_struct.map(|v| v.to_string()));
        push("ds", self.ds.map(|v| v.to_string()));
        push("beta", self.beta.clone());
        push("prune", self.prune.clone());
        push("optimizer", self.optimizer.clone());
        push("bias", self.bias.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        kv
    }

    fn config(&self) -> fedstruct::Result<ExperimentConfig> {
        ExperimentConfig::from_sources(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated training-label ratios in (0, 1).
    #[arg(long)]
    ratios: String,
}

#[derive(Args)]
struct PartitionExportArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// random | louvain | kmeans
    #[arg(long, default_value = "random")]
    partition: String,
    #[arg(long)]
    clients: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output partition.tsv path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> fedstruct::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{} {} nsf={} partition={} K={}: test acc {:.2} ± {:.2} over {} seeds (wall {:.1}s/run){}",
                summary.dataset,
                summary.method,
                summary.nsf,
                summary.partitioner,
                summary.clients,
                summary.mean_acc * 100.0,
                summary.std_acc * 100.0,
                summary.per_seed.len(),
                summary.mean_wall_s,
                if summary.partial { " [partial]" } else { "" },
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let cfg = args.run.config()?;
            let ratios: Vec<f64> = args
                .ratios
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| fedstruct::Error::Config(format!("bad ratio '{t}'")))
                })
                .collect::<fedstruct::Result<_>>()?;
            let rows = run_label_ratio_sweep(&cfg, &ratios)?;
            for (ratio, s) in rows {
                println!(
                    "ratio {ratio}: test acc {:.2} ± {:.2}",
                    s.mean_acc * 100.0,
                    s.std_acc * 100.0
                );
            }
            Ok(())
        }
        Command::PartitionExport(args) => {
            let g = load_graph(&args.dataset)?;
            let partitioner: Partitioner = args.partition.parse()?;
            let p = make_partition(&g, partitioner, args.clients, child_seed(args.seed, "partition", 0))?;
            p.export_tsv(&args.out)?;
            println!(
                "wrote {} ({} nodes, {} clients)",
                args.out.display(),
                g.n,
                args.clients
            );
            Ok(())
        }
    }
}
