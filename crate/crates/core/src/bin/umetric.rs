//! Command-line interface: synthetic data generation, clustering,
//! metric training, embedding, and evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use umetric::aas::cluster;
use umetric::eval::{nmi, pairwise_prf, recall_at_k};
use umetric::graph::{
    build_knn_graph, stationary_distribution, DEFAULT_MAX_ITERS, DEFAULT_TELEPORT, DEFAULT_TOL,
};
use umetric::io;
use umetric::synth::gen_synthetic;
use umetric::train::{embed, train_opml, train_sopml, TrainConfig};
use umetric::{Error, FeatureMatrix, Result};

#[derive(Parser)]
#[command(name = "umetric", about = "Unsupervised linear metric learning", version)]
struct Cli {
    /// Worker threads; 1 (the default and only supported value)
    /// guarantees reproducible output.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic crescents+Gaussians benchmark (labeled CSV).
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a feature CSV and write pseudo-labels (one per line, −1 = noise).
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a metric end to end and write the model file.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the optimization trace (iter,objective,gradnorm,step).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Single full-batch solve instead of mini-batch epochs.
        #[arg(long)]
        full_batch: bool,
    },
    /// Project features through a trained model (writes an n×l CSV).
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels or embeddings against ground-truth labels.
    Eval {
        /// Predicted labels file, or an embeddings CSV for Recall@K.
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth labels file.
        #[arg(long)]
        labels: PathBuf,
        /// K values for Recall@K (repeatable; used with embeddings input).
        #[arg(short, long)]
        k: Vec<usize>,
        /// Exclude examples whose ground-truth label is −1 from scoring.
        #[arg(long)]
        ignore_noise: bool,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Feature CSV (comma-separated, no header).
    #[arg(long)]
    input: PathBuf,
    /// Treat the last CSV column as an integer label and strip it.
    #[arg(long)]
    labeled: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if cli.threads != 1 {
        log::warn!("--threads {} requested; running single-threaded", cli.threads);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_features(data: &DataArgs) -> Result<FeatureMatrix> {
    let (matrix, _) = io::read_dataset(&data.input, data.labeled)?;
    FeatureMatrix::new(matrix)
}

fn load_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => io::parse_config(p),
        None => Ok(TrainConfig::default()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { seed, out } => {
            let (data, labels) = gen_synthetic(seed);
            io::write_dataset(&out, &data, Some(&labels))?;
            println!("wrote {} rows to {}", data.nrows(), out.display());
            Ok(())
        }
        Command::Cluster { data, config, out } => {
            let cfg = load_config(&config)?;
            let x = load_features(&data)?;
            let k = cfg.aas.k_graph.min(x.n().saturating_sub(1)).max(1);
            let g = build_knn_graph(&x, k, cfg.aas.c)?;
            let omega =
                stationary_distribution(&g, DEFAULT_TELEPORT, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
            let assignment = cluster(&g, &omega, &cfg.aas)?;
            io::write_labels(&out, &assignment.labels)?;
            println!("n_clusters {}", assignment.n_clusters);
            Ok(())
        }
        Command::Train {
            data,
            config,
            out,
            trace,
            full_batch,
        } => {
            let cfg = load_config(&config)?;
            let x = load_features(&data)?;
            let model = if full_batch {
                train_opml(&x, &cfg)?
            } else {
                train_sopml(&x, &cfg)?
            };
            io::write_model(&out, &model.params)?;
            if let Some(trace_path) = trace {
                io::write_trace(&trace_path, &model.trace)?;
            }
            println!(
                "trained d={} l={} clusters={} final_objective={}",
                x.dim(),
                model.params.embedding_dim(),
                model.pseudo_labels.n_clusters,
                model.trace.last().map(|t| t.objective).unwrap_or(0.0)
            );
            Ok(())
        }
        Command::Embed { model, data, out } => {
            let params = io::read_model(&model)?;
            let x = load_features(&data)?;
            let emb = embed(&params, &x)?;
            io::write_dataset(&out, &emb, None)?;
            Ok(())
        }
        Command::Eval {
            input,
            labels,
            k,
            ignore_noise,
        } => {
            let truth = io::read_labels(&labels)?;
            match io::read_labels(&input) {
                Ok(pred) => {
                    let (pred, truth) = filter_noise(&pred, &truth, ignore_noise)?;
                    let nmi_v = nmi(&pred, &truth)?;
                    let (p, r, f) = pairwise_prf(&pred, &truth)?;
                    print!("nmi {nmi_v:.6}\nf_measure {f:.6}\nprecision {p:.6}\nrecall {r:.6}\n");
                    Ok(())
                }
                Err(_) => {
                    let (emb, _) = io::read_dataset(&input, false)?;
                    let ks = if k.is_empty() { vec![1] } else { k };
                    let (emb, truth) = filter_noise_rows(&emb, &truth, ignore_noise)?;
                    let report = recall_at_k(&emb, &truth, &ks)?;
                    for (k, v) in report {
                        println!("recall_at_{k} {v:.6}");
                    }
                    Ok(())
                }
            }
        }
    }
}

fn filter_noise(pred: &[i32], truth: &[i32], ignore: bool) -> Result<(Vec<i32>, Vec<i32>)> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if !ignore {
        return Ok((pred.to_vec(), truth.to_vec()));
    }
    let keep: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] >= 0).collect();
    Ok((
        keep.iter().map(|&i| pred[i]).collect(),
        keep.iter().map(|&i| truth[i]).collect(),
    ))
}

fn filter_noise_rows(
    emb: &DMatrix<f64>,
    truth: &[i32],
    ignore: bool,
) -> Result<(DMatrix<f64>, Vec<i32>)> {
    if emb.nrows() != truth.len() {
        return Err(Error::LengthMismatch(emb.nrows(), truth.len()));
    }
    if !ignore {
        return Ok((emb.clone(), truth.to_vec()));
    }
    let keep: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] >= 0).collect();
    let filtered = DMatrix::from_fn(keep.len(), emb.ncols(), |i, j| emb[(keep[i], j)]);
    Ok((filtered, keep.iter().map(|&i| truth[i]).collect()))
}
