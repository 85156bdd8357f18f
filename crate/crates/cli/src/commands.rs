use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ztree::data::{
    ingest_csv, read_feature_table, write_csv, ColumnRole, Dataset, FeatureSpec, SchemaOverrides, TargetKind,
};
use ztree::harness::{log_transform_target, run_benchmark, BenchmarkSpec};
use ztree::metrics::MetricKind;
use ztree::search::SearchDepth;
use ztree::synth::{continuous_features, generate, GeneratorMode, GeneratorSpec};
use ztree::tree::{leaf_prediction, TreeConfig, TreeModel};
use ztree::tuning::{default_grid, tune_threshold, ExternalCv};
use ztree::{learn_tree, ArtifactHeader, CvConfig};

use crate::{
    BenchArgs, Command, DataArgs, EvalArgs, LearnArgs, PredictArgs, PruneArgs, SynthArgs, TrainArgs, TuneArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Prune(a) => prune(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
    }
}

/// The invocation as recorded in artifact headers. `--threads` is left out
/// because it cannot change any output.
fn recorded_command() -> String {
    let mut out = vec!["ztree".to_string()];
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--threads" {
            args.next();
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        out.push(shell_quote(&a));
    }
    out.join(" ")
}

fn shell_quote(a: &str) -> String {
    let plain = |c: char| c.is_ascii_alphanumeric() || "-_./=,:+@%".contains(c);
    if !a.is_empty() && a.chars().all(plain) {
        a.to_string()
    } else {
        format!("'{}'", a.replace('\'', "'\\''"))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let mut ov = match &args.schema {
        Some(p) => SchemaOverrides::load(p).with_context(|| format!("reading schema {}", p.display()))?,
        None => SchemaOverrides::new(),
    };
    if let Some(t) = &args.target {
        ov.set_target(t, args.target_kind)?;
    }
    if args.event.is_some() || args.positive.is_some() || (args.target.is_none() && args.target_kind.is_some()) {
        let Some((name, ColumnRole::Target { kind, event, positive })) =
            ov.target().map(|(n, r)| (n.to_string(), r.clone()))
        else {
            bail!("--target-kind, --event and --positive need a target column (--target or a schema file)");
        };
        ov.set(
            &name,
            ColumnRole::Target {
                kind: args.target_kind.or(kind),
                event: args.event.clone().or(event),
                positive: args.positive.clone().or(positive),
            },
        )?;
    }
    if let Some(t) = &args.treatment {
        ov.set(t, ColumnRole::Treatment)?;
    }
    ingest_csv(&args.data, &ov, args.na_policy).with_context(|| format!("reading {}", args.data.display()))
}

fn tree_config(data: &Dataset, learn: &LearnArgs, threshold: f64) -> Result<TreeConfig> {
    let cfg = TreeConfig {
        threshold,
        search_depth: SearchDepth::new(learn.search_depth)?,
        min_side: learn.min_side as usize,
        cv: CvConfig { folds: learn.folds as usize, repeats: learn.repeats as usize, seed: learn.seed },
        ..TreeConfig::for_dataset(data, learn.test)?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn describe(model: &TreeModel) -> String {
    format!("{} nodes, {} leaves, depth {}", model.node_count(), model.leaf_count(), model.depth())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load(&a.data)?;
    let cfg = tree_config(&data, &a.learn, a.threshold)?;
    let mut model = learn_tree(&data, &cfg)?;
    model.header = Some(ArtifactHeader::new(recorded_command(), a.learn.seed));
    write(&a.out, &model.to_json())?;
    eprintln!("trained {}: {}", a.out.display(), describe(&model));
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let data = load(&a.data)?;
    let grid = a.grid.unwrap_or_else(default_grid);
    let base = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let cfg = tree_config(&data, &a.learn, base)?;
    let external = ExternalCv { folds: a.external_folds as usize, seed: a.learn.seed };
    let (mut model, report) = tune_threshold(&data, &cfg, &grid, &external)?;
    let header = ArtifactHeader::new(recorded_command(), a.learn.seed);
    model.header = Some(header.clone());
    write(&a.out, &model.to_json())?;
    write(&a.report, &report.to_csv(Some(&header)))?;
    eprintln!("chose threshold {} ({}): {}", report.chosen, report.metric_kind, describe(&model));
    Ok(())
}

fn read_model(path: &Path) -> Result<TreeModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TreeModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn prune(a: PruneArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let seed = model.header.as_ref().map_or(0, |h| h.seed);
    let mut pruned = model.derive_pruned(a.threshold)?;
    pruned.header = Some(ArtifactHeader::new(recorded_command(), seed));
    write(&a.out, &pruned.to_json())?;
    eprintln!("pruned to threshold {}: {}", a.threshold, describe(&pruned));
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let input = read_feature_table(&a.data, &model.schema).with_context(|| format!("reading {}", a.data.display()))?;
    let leaves = model.leaves(&input.table);
    let arms = input.treatment.as_deref();
    let with_effect = model.root.stats.arms.is_some();
    let seed = model.header.as_ref().map_or(0, |h| h.seed);
    let mut out = ArtifactHeader::new(recorded_command(), seed).comment_lines();
    writeln!(out, "# target-kind: {}", model.schema.target.kind)?;
    out.push_str("row,leaf,prediction");
    if input.target.is_some() {
        out.push_str(",actual");
    }
    if with_effect {
        out.push_str(",effect");
    }
    out.push('\n');
    for (r, leaf) in leaves.iter().enumerate() {
        let path = if leaf.path.is_empty() { "root" } else { &leaf.path };
        write!(out, "{r},{path},{}", leaf_prediction(leaf, arms.map(|t| t[r])))?;
        if let Some(t) = &input.target {
            write!(out, ",{}", t.values[r])?;
        }
        if with_effect {
            let effect = leaf.stats.arms.as_ref().and_then(|s| s.effect());
            write!(out, ",{}", effect.map(|e| e.to_string()).unwrap_or_default())?;
        }
        out.push('\n');
    }
    match &a.out {
        Some(p) => write(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn metric_for(kind: TargetKind) -> Result<MetricKind> {
    Ok(MetricKind::for_target(kind)?)
}

fn eval(a: EvalArgs) -> Result<()> {
    let (kind, predictions, actuals) = match (&a.predictions, &a.model, &a.data) {
        (Some(p), _, _) => read_predictions(p)?,
        (None, Some(m), Some(d)) => {
            let model = read_model(m)?;
            let input = read_feature_table(d, &model.schema).with_context(|| format!("reading {}", d.display()))?;
            let Some(target) = input.target else {
                bail!("{} has no `{}` column to score against", d.display(), model.schema.target.name);
            };
            let preds = model.predict(&input.table, input.treatment.as_deref());
            (model.schema.target.kind, preds, target.values)
        }
        _ => unreachable!("clap enforces --predictions or --model with --data"),
    };
    let metric = metric_for(kind)?;
    let value = metric.compute(&predictions, &actuals)?;
    println!("{metric}: {value}");
    Ok(())
}

fn read_predictions(path: &Path) -> Result<(TargetKind, Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kind = text
        .lines()
        .find_map(|l| l.strip_prefix("# target-kind:"))
        .context("predictions file has no `# target-kind` line")?
        .trim()
        .parse::<TargetKind>()
        .map_err(anyhow::Error::msg)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| format!("{} has no `{name}` column", path.display()))
    };
    let (pc, ac) = (col("prediction")?, col("actual")?);
    let (mut preds, mut actual) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c].parse().with_context(|| format!("{} row {}: `{}` is not a number", path.display(), i + 1, &rec[c]))
        };
        preds.push(num(pc)?);
        actual.push(num(ac)?);
    }
    Ok((kind, preds, actual))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut features = continuous_features(a.features);
    features.extend((1..=a.nominal).map(|j| FeatureSpec::nominal(format!("c{j}"), &["a", "b", "c"])));
    let planted = match (&a.plant, a.mode) {
        (Some(p), GeneratorMode::Null) => bail!("--plant `{p}` cannot be used with --mode null"),
        (Some(p), _) => Some(p.parse().with_context(|| format!("--plant `{p}`"))?),
        (None, GeneratorMode::Null) => None,
        (None, _) => bail!("--mode {:?} needs --plant", a.mode),
    };
    let spec = GeneratorSpec {
        n: a.n as usize,
        features,
        planted,
        effect_size: if a.mode == GeneratorMode::Null { 0.0 } else { a.effect },
        mode: a.mode,
        outcome: a.outcome,
        base_rate: a.base_rate.unwrap_or(if a.mode == GeneratorMode::Null { 0.5 } else { 0.3 }),
        noise_seed: a.seed,
    };
    let data = generate(&spec)?;
    let mut buf = ArtifactHeader::new(recorded_command(), a.seed).comment_lines().into_bytes();
    write_csv(&data, &mut buf)?;
    fs::write(&a.out, buf).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} rows to {}", data.n(), a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut data = load(&a.data)?;
    let mut notes = Vec::new();
    if a.log_target {
        data = log_transform_target(&data)?;
        notes.push("target modeled as ln(1 + y); RMSE is on that scale".to_string());
    }
    let grid = a.grid.unwrap_or_else(default_grid);
    let base = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let spec = BenchmarkSpec {
        sizes: a.sizes,
        resamples: a.resamples as usize,
        methods: a.methods,
        grid,
        external_folds: a.external_folds as usize,
        timing: a.timing,
        notes,
        ..BenchmarkSpec::new(tree_config(&data, &a.learn, base)?, a.learn.seed)
    };
    let report = run_benchmark(&data, &spec)?;
    let header = ArtifactHeader::new(recorded_command(), a.learn.seed);
    write(&a.out, &report.to_csv(Some(&header)))?;
    if let Some(p) = &a.figures {
        write(p, &format!("{}{}", header.comment_lines(), report.figure_tables()))?;
    }
    eprint!("{}", report.figure_tables());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::shell_quote;

    #[test]
    fn quoting_leaves_plain_words_alone() {
        assert_eq!(shell_quote("--grid=0.5,1"), "--grid=0.5,1");
        assert_eq!(shell_quote("x1>0.5 & c1==b"), "'x1>0.5 & c1==b'");
        assert_eq!(shell_quote("it's"), "'it'\\''s'");
        assert_eq!(shell_quote(""), "''");
    }
}
