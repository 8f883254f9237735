//! Command-line front end.
//!
//! Four subcommands: `synth` writes a Gaussian-mixture dataset, `run` trains
//! over several seeds and writes a report, `sweep` repeats `run` over a grid
//! of known-class ratios or over-provisioned cluster counts, and `eval` scores
//! a predicted label file against a reference.
//!
//! Reports go to `<out>.csv` (one row per seed or setting, then summary
//! rows), `<out>.history.csv` (per-round diagnostics, `run` only) and
//! `<out>.txt` (resolved flags and a readable summary).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::data::io::load_known_classes;
use crate::data::{
    gen_synthetic, load_features, load_labels, make_split, make_split_with_known, save_features,
    save_labels, FeatureMatrix, LabelVector, LabeledSampling,
};
use crate::metrics::{
    acc, ari, k_error, nmi_with, silhouette_with, NmiNormalization, Scores, SilhouetteVariant,
};
use crate::pipeline::{pretrain_stage, run_from_pretrained, RunConfig, Strategy, TrainHistory};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "DAC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "dac",
    version,
    about = "Deep aligned clustering for new-category discovery"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Gaussian-mixture dataset (`<out>.dacf` + `<out>.labels`).
    Synth(SynthArgs),
    /// Train over several seeds and write a report.
    Run(RunArgs),
    /// Score a predicted label file against a reference.
    Eval(EvalArgs),
    /// Repeat `run` over known-class ratios or over-provisioned cluster counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    /// Points per cluster.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    /// Radius of the sphere the cluster centers are drawn on.
    #[arg(long)]
    pub sep: f64,
    #[arg(long)]
    pub seed: u64,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    None,
    Reinit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    KnownRatio,
    Kprime,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Feature file (DACF).
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth label file, one class name per line.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub known_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub labeled_ratio: f64,
    /// Known-class names, one per line; overrides the random choice.
    #[arg(long)]
    pub known_classes: Option<PathBuf>,
    /// Sample the labeled set from the pooled known classes instead of per class.
    #[arg(long)]
    pub global_sampling: bool,
    /// First seed; runs use `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of seeds to average over.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    pub ablation: Ablation,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// k-means restarts per self-training round.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Estimate K on the input features instead of the pre-trained encodings.
    #[arg(long)]
    pub raw_estimate: bool,
    /// Normalize NMI by the geometric mean of the entropies.
    #[arg(long)]
    pub geometric_nmi: bool,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Cluster count; defaults to the number of classes in the label file.
    #[arg(long, conflicts_with = "kprime")]
    pub k: Option<usize>,
    /// Estimate K from an over-provisioned k-means with this many clusters.
    #[arg(long)]
    pub kprime: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, value_enum)]
    pub sweep: SweepKind,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Features for the silhouette column.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub geometric_nmi: bool,
    /// Silhouette against the nearest foreign sample instead of the nearest cluster mean.
    #[arg(long)]
    pub nearest_sample: bool,
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub scores: Scores,
    pub k: usize,
    pub estimated: bool,
    pub pretrain_accuracy: f64,
    pub history: TrainHistory,
}

/// How the cluster count is chosen for a batch of seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Estimate { k_prime: usize },
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => {
            print!("{}", cmd_eval(&a)?);
            Ok(())
        }
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    if n == 0 {
        bail!("{THREADS_ENV} must be at least 1");
    }
    // a second call in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let (x, y) = gen_synthetic(a.k, a.n, a.dim, a.sep, a.seed)?;
    let names: Vec<String> = (0..a.k).map(|i| format!("cluster_{i}")).collect();
    let feature_path = with_ext(&a.out, "dacf");
    let label_path = with_ext(&a.out, "labels");
    save_features(&x, &feature_path)
        .with_context(|| format!("writing {}", feature_path.display()))?;
    save_labels(&y, &names, &label_path)
        .with_context(|| format!("writing {}", label_path.display()))?;
    Ok(())
}

struct Dataset {
    features: FeatureMatrix,
    truth: LabelVector,
    names: Vec<String>,
    known: Option<Vec<usize>>,
}

fn load_dataset(exp: &ExperimentArgs) -> Result<Dataset> {
    let features = load_features(&exp.features)
        .with_context(|| format!("reading {}", exp.features.display()))?;
    let (truth, names) =
        load_labels(&exp.labels).with_context(|| format!("reading {}", exp.labels.display()))?;
    if truth.len() != features.rows() {
        bail!(
            "{} has {} rows but {} has {} labels",
            exp.features.display(),
            features.rows(),
            exp.labels.display(),
            truth.len()
        );
    }
    let known = match &exp.known_classes {
        Some(p) => Some(
            load_known_classes(p, &names).with_context(|| format!("reading {}", p.display()))?,
        ),
        None => None,
    };
    Ok(Dataset {
        features,
        truth,
        names,
        known,
    })
}

fn run_config(exp: &ExperimentArgs, choice: KChoice, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        max_rounds: exp.max_rounds,
        patience: exp.patience,
        seed,
        strategy: match exp.ablation {
            Ablation::None => Strategy::Align,
            Ablation::Reinit => Strategy::Reinitialize,
        },
        estimate_on_raw: exp.raw_estimate,
        kmeans_restarts: exp.restarts,
        ..RunConfig::default()
    };
    match choice {
        KChoice::Fixed(k) => cfg.k = Some(k),
        KChoice::Estimate { k_prime } => cfg.k_prime = Some(k_prime),
    }
    cfg.train.learning_rate = exp.lr;
    cfg.train.hidden_dim = exp.hidden;
    cfg.train.batch_size = exp.batch_size;
    cfg
}

/// Runs every seed of an experiment, in parallel, ordered by seed.
fn run_seeds(
    data: &Dataset,
    exp: &ExperimentArgs,
    known_ratio: f64,
    choice: KChoice,
) -> Result<Vec<SeedResult>> {
    if exp.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let sampling = if exp.global_sampling {
        LabeledSampling::Global
    } else {
        LabeledSampling::PerClass
    };
    let normalization = if exp.geometric_nmi {
        NmiNormalization::Geometric
    } else {
        NmiNormalization::Arithmetic
    };
    let seeds: Vec<u64> = (0..exp.seeds).map(|i| exp.seed + i).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let split = match &data.known {
                Some(known) => make_split_with_known(
                    data.features.clone(),
                    data.truth.clone(),
                    known.clone(),
                    exp.labeled_ratio,
                    sampling,
                    seed,
                ),
                None => make_split(
                    data.features.clone(),
                    data.truth.clone(),
                    known_ratio,
                    exp.labeled_ratio,
                    sampling,
                    seed,
                ),
            }?;
            let cfg = run_config(exp, choice, seed);
            let pre = pretrain_stage(&split, &cfg)?;
            let out =
                run_from_pretrained(&split, &pre, &cfg).with_context(|| format!("seed {seed}"))?;
            let pred = &out.clusters.assignments;
            let scores = Scores {
                nmi: nmi_with(&split.truth, pred, normalization)?,
                ari: ari(&split.truth, pred)?,
                acc: acc(&split.truth, pred)?,
            };
            Ok(SeedResult {
                seed,
                scores,
                k: out.k,
                estimated: out.k_estimate.is_some(),
                pretrain_accuracy: out.pretrain_accuracy,
                history: out.history,
            })
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn describe_flags(exp: &ExperimentArgs, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(s, "# {k} = {v}");
    };
    line("features", exp.features.display().to_string());
    line("labels", exp.labels.display().to_string());
    line("known-ratio", exp.known_ratio.to_string());
    line("labeled-ratio", exp.labeled_ratio.to_string());
    line(
        "known-classes",
        exp.known_classes
            .as_ref()
            .map_or("random".to_string(), |p| p.display().to_string()),
    );
    line(
        "sampling",
        if exp.global_sampling {
            "global"
        } else {
            "per-class"
        }
        .to_string(),
    );
    line("ablation", format!("{:?}", exp.ablation).to_lowercase());
    line("lr", exp.lr.to_string());
    line("hidden", exp.hidden.to_string());
    line("batch-size", exp.batch_size.to_string());
    line("max-rounds", exp.max_rounds.to_string());
    line("patience", exp.patience.to_string());
    line("restarts", exp.restarts.to_string());
    line("raw-estimate", exp.raw_estimate.to_string());
    line(
        "nmi",
        if exp.geometric_nmi {
            "geometric"
        } else {
            "arithmetic"
        }
        .to_string(),
    );
    for (k, v) in extra {
        line(k, v.clone());
    }
    let seeds: Vec<String> = (0..exp.seeds).map(|i| (exp.seed + i).to_string()).collect();
    line("seeds", seeds.join(" "));
    s
}

fn write_report(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let data = load_dataset(&a.exp)?;
    let true_k = data.names.len();
    let choice = match (a.k, a.kprime) {
        (_, Some(k_prime)) => KChoice::Estimate { k_prime },
        (Some(k), None) => KChoice::Fixed(k),
        (None, None) => KChoice::Fixed(true_k),
    };
    let results = run_seeds(&data, &a.exp, a.exp.known_ratio, choice)?;

    let extra = match choice {
        KChoice::Fixed(k) => vec![("k", k.to_string())],
        KChoice::Estimate { k_prime } => vec![("kprime", k_prime.to_string())],
    };
    let flags = describe_flags(&a.exp, &extra);

    let mut csv = flags.clone();
    csv.push_str("seed,nmi,ari,acc,k,k_error,rounds,best_round\n");
    for r in &results {
        let err = if r.estimated {
            format!("{:.2}", k_error(true_k, r.k)?)
        } else {
            String::new()
        };
        let _ = writeln!(
            csv,
            "{},{:.4},{:.4},{:.2},{},{},{},{}",
            r.seed,
            r.scores.nmi,
            r.scores.ari,
            r.scores.acc,
            r.k,
            err,
            r.history.rounds.len(),
            r.history.best_round
        );
    }
    let column = |f: fn(&SeedResult) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
    let nmi = column(|r| r.scores.nmi);
    let ari = column(|r| r.scores.ari);
    let accs = column(|r| r.scores.acc);
    let ks = column(|r| r.k as f64);
    let _ = writeln!(
        csv,
        "mean,{:.4},{:.4},{:.2},{:.2},,,",
        nmi.0, ari.0, accs.0, ks.0
    );
    let _ = writeln!(
        csv,
        "std,{:.4},{:.4},{:.2},{:.2},,,",
        nmi.1, ari.1, accs.1, ks.1
    );

    let mut hist = String::from(
        "seed,round,silhouette,kmeans_objective,label_change_fraction,alignment_cost,train_loss\n",
    );
    for r in &results {
        for rec in &r.history.rounds {
            let _ = writeln!(
                hist,
                "{},{},{:.6},{:.6},{:.6},{:.6},{}",
                r.seed,
                rec.round,
                rec.silhouette,
                rec.kmeans_objective,
                rec.label_change_fraction,
                rec.alignment_cost,
                rec.train_loss.map_or(String::new(), |l| format!("{l:.6}"))
            );
        }
    }

    let mut txt = flags;
    let _ = writeln!(txt, "\nclasses in label file: {true_k}");
    for r in &results {
        let _ = writeln!(
            txt,
            "seed {:>3}: NMI {:.4}  ARI {:.4}  ACC {:6.2}  K {:>3}  pretrain acc {:.2}  rounds {} (best {})",
            r.seed,
            r.scores.nmi,
            r.scores.ari,
            r.scores.acc,
            r.k,
            r.pretrain_accuracy,
            r.history.rounds.len(),
            r.history.best_round
        );
    }
    let _ = writeln!(
        txt,
        "mean: NMI {:.4} ± {:.4}  ARI {:.4} ± {:.4}  ACC {:.2} ± {:.2}  K {:.2} ± {:.2}",
        nmi.0, nmi.1, ari.0, ari.1, accs.0, accs.1, ks.0, ks.1
    );
    if matches!(choice, KChoice::Estimate { .. }) {
        let _ = writeln!(
            txt,
            "K error of the mean predicted K: {:.2}%",
            100.0 * (ks.0 - true_k as f64).abs() / true_k as f64
        );
    }

    write_report(&with_ext(&a.exp.out, "csv"), &csv)?;
    write_report(&with_ext(&a.exp.out, "history.csv"), &hist)?;
    write_report(&with_ext(&a.exp.out, "txt"), &txt)?;
    Ok(())
}

/// Settings of a sweep, as `(label, known_ratio, k choice)`.
pub fn sweep_settings(
    kind: SweepKind,
    known_ratio: f64,
    true_k: usize,
) -> Vec<(String, f64, KChoice)> {
    match kind {
        SweepKind::KnownRatio => [0.25, 0.5, 0.75]
            .into_iter()
            .map(|r| (r.to_string(), r, KChoice::Fixed(true_k)))
            .collect(),
        SweepKind::Kprime => (1..=4)
            .map(|m| {
                (
                    format!("{m}x"),
                    known_ratio,
                    KChoice::Estimate {
                        k_prime: m * true_k,
                    },
                )
            })
            .collect(),
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let data = load_dataset(&a.exp)?;
    let true_k = data.names.len();
    if a.exp.known_classes.is_some() && a.sweep == SweepKind::KnownRatio {
        bail!(
            "--known-classes fixes the known set; it cannot be combined with a known-ratio sweep"
        );
    }
    let sweep_name = match a.sweep {
        SweepKind::KnownRatio => "known-ratio",
        SweepKind::Kprime => "kprime",
    };
    let flags = describe_flags(&a.exp, &[("sweep", sweep_name.to_string())]);
    let mut csv = flags.clone();
    csv.push_str("setting,nmi,ari,acc,acc_std,k\n");
    let mut txt = flags;
    let _ = writeln!(txt, "\nclasses in label file: {true_k}");
    for (label, ratio, choice) in sweep_settings(a.sweep, a.exp.known_ratio, true_k) {
        let results = run_seeds(&data, &a.exp, ratio, choice)?;
        let col = |f: fn(&SeedResult) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
        let (nmi, ari, accs, ks) = (
            col(|r| r.scores.nmi),
            col(|r| r.scores.ari),
            col(|r| r.scores.acc),
            col(|r| r.k as f64),
        );
        let _ = writeln!(
            csv,
            "{label},{:.4},{:.4},{:.2},{:.2},{:.2}",
            nmi.0, ari.0, accs.0, accs.1, ks.0
        );
        let _ = writeln!(
            txt,
            "{sweep_name} {label:>5}: NMI {:.4}  ARI {:.4}  ACC {:.2} ± {:.2}  K {:.2}",
            nmi.0, ari.0, accs.0, accs.1, ks.0
        );
    }
    write_report(&with_ext(&a.exp.out, "csv"), &csv)?;
    write_report(&with_ext(&a.exp.out, "txt"), &txt)?;
    Ok(())
}

/// Returns the printed table: a header line then one value line.
pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let (truth, _) =
        load_labels(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let (pred, _) =
        load_labels(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
    let normalization = if a.geometric_nmi {
        NmiNormalization::Geometric
    } else {
        NmiNormalization::Arithmetic
    };
    let nmi = nmi_with(&truth, &pred, normalization)?;
    let ari = ari(&truth, &pred)?;
    let acc = acc(&truth, &pred)?;
    let mut header = format!("{:>8} {:>8} {:>8}", "NMI", "ARI", "ACC");
    let mut values = format!("{nmi:>8.4} {ari:>8.4} {acc:>8.2}");
    if let Some(path) = &a.features {
        let x = load_features(path).with_context(|| format!("reading {}", path.display()))?;
        let variant = if a.nearest_sample {
            SilhouetteVariant::NearestSample
        } else {
            SilhouetteVariant::MeanNearestCluster
        };
        let sc = silhouette_with(&x, &pred, variant)?;
        let _ = write!(header, " {:>8}", "SC");
        let _ = write!(values, " {sc:>8.4}");
    }
    Ok(format!("{header}\n{values}\n"))
}
