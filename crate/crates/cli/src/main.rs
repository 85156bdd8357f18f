mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ztree::data::{NaPolicy, TargetKind};
use ztree::harness::Method;
use ztree::stats::TestKind;
use ztree::synth::GeneratorMode;

#[derive(Parser)]
#[command(name = "ztree", version, about = "Subgroup-split decision trees gated by cross-validated z scores")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "ZTREE_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a tree at one threshold.
    Train(TrainArgs),
    /// Pick the threshold by 10-fold cross-validation and fit it.
    Tune(TuneArgs),
    /// Derive the tree for a higher threshold from a trained model.
    Prune(PruneArgs),
    /// Write per-row predictions.
    Predict(PredictArgs),
    /// Print AUROC (binary target) or RMSE (continuous target).
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run the resampling benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column role overrides, one `name: role` per line.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Target column.
    #[arg(long)]
    target: Option<String>,
    /// binary, continuous or time-to-event; inferred when omitted.
    #[arg(long)]
    target_kind: Option<TargetKind>,
    /// Event indicator column of a time-to-event target.
    #[arg(long)]
    event: Option<String>,
    /// Label of the positive class of a binary target.
    #[arg(long)]
    positive: Option<String>,
    /// 0/1 treatment column; switches to differential-effect tests.
    #[arg(long)]
    treatment: Option<String>,
    /// error, drop-rows or na-level.
    #[arg(long, default_value = "error")]
    na_policy: NaPolicy,
}

#[derive(Args)]
struct LearnArgs {
    /// Split test; defaults by target kind.
    #[arg(long)]
    test: Option<TestKind>,
    /// Atoms per candidate subgroup (1-3).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    search_depth: u8,
    /// Minimum rows on each side of a split.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    min_side: u64,
    /// Internal cross-validation folds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    /// Internal cross-validation repeats.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Ok(t),
        _ => Err(format!("`{s}` is not a finite threshold >= 0")),
    }
}

fn parse_size(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or(format!("`{s}` is not a positive size"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.trim().parse()
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Minimum cross-validated |z| to split a node.
    #[arg(long, default_value = "2.0", allow_negative_numbers = true, value_parser = parse_threshold)]
    threshold: f64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Comma-separated thresholds [default: 0.2,0.4,...,3.0].
    #[arg(long, value_delimiter = ',', value_parser = parse_threshold)]
    grid: Option<Vec<f64>>,
    /// External cross-validation folds.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    external_folds: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Tuning report CSV to write.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_negative_numbers = true, value_parser = parse_threshold)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Output of `predict` with an `actual` column.
    #[arg(long, conflicts_with_all = ["model", "data"], required_unless_present_all = ["model", "data"])]
    predictions: Option<PathBuf>,
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Continuous features x1..xk.
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Extra nominal features c1..cm with levels a, b, c.
    #[arg(long, default_value_t = 0)]
    nominal: usize,
    /// outcome-shift, treatment-interaction or null.
    #[arg(long, default_value = "null")]
    mode: GeneratorMode,
    /// binary or continuous.
    #[arg(long, default_value = "binary")]
    outcome: TargetKind,
    /// Planted subgroup, e.g. `x1>0.5` or `x1>0.5 & c1==b`.
    #[arg(long)]
    plant: Option<String>,
    /// SD units (continuous) or probability delta (binary, must keep the rate inside 0-1).
    #[arg(long, default_value_t = 1.0)]
    effect: f64,
    /// Positive rate outside the effect (binary).
    #[arg(long)]
    base_rate: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Comma-separated training sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,300,1000,3000", value_parser = parse_size)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    resamples: u64,
    /// Comma-separated subset of ztree,cart.
    #[arg(long, value_delimiter = ',', default_value = "ztree,cart", value_parser = parse_method)]
    methods: Vec<Method>,
    /// Comma-separated thresholds [default: 0.2,0.4,...,3.0].
    #[arg(long, value_delimiter = ',', value_parser = parse_threshold)]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    external_folds: u64,
    /// Model ln(1 + y) instead of y; RMSE is then on that scale.
    #[arg(long)]
    log_target: bool,
    /// Record wall time per fit (makes the report machine-dependent).
    #[arg(long)]
    timing: bool,
    /// Also write metric and depth panels as plain-text tables.
    #[arg(long)]
    figures: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
