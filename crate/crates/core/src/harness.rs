//! Resampling benchmark: repeated train/test splits of one source dataset,
//! the same splits fed to every method.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::ArtifactHeader;
use crate::cart::{default_depth_grid, learn_cart, tune_cart, DEFAULT_MIN_SAMPLES_SPLIT_GRID};
use crate::data::{Dataset, Target, TargetKind};
use crate::metrics::MetricKind;
use crate::rng;
use crate::tree::{TreeConfig, TreeError, TreeModel};
use crate::tuning::{default_grid, metric_kind, tune_threshold, ExternalCv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ztree,
    Cart,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ztree => "ztree",
            Method::Cart => "cart",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ztree" => Ok(Method::Ztree),
            "cart" => Ok(Method::Cart),
            _ => Err(format!("unknown method `{s}` (expected ztree or cart)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub sizes: Vec<usize>,
    pub resamples: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Base settings for the subgroup tree; the threshold is tuned.
    pub tree: TreeConfig,
    pub grid: Vec<f64>,
    pub external_folds: usize,
    /// Record wall time per fit. Off by default so reports are reproducible.
    pub timing: bool,
    /// Extra `#` lines for the report header.
    pub notes: Vec<String>,
}

impl BenchmarkSpec {
    pub fn new(tree: TreeConfig, seed: u64) -> Self {
        Self {
            sizes: vec![100, 300, 1000, 3000],
            resamples: 10,
            methods: vec![Method::Ztree, Method::Cart],
            seed,
            tree,
            grid: default_grid(),
            external_folds: 10,
            timing: false,
            notes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub size: usize,
    /// Resample index, or `None` for the per-(method, size) summary row.
    pub resample: Option<usize>,
    pub metric: Option<f64>,
    pub metric_ci95: Option<f64>,
    pub n_nodes: f64,
    pub depth: f64,
    pub depth_ci95: Option<f64>,
    pub split_id: Option<String>,
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub metric_kind: MetricKind,
    pub rows: Vec<BenchmarkRow>,
    pub notes: Vec<String>,
}

fn cell<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl BenchmarkReport {
    pub fn summary(&self, method: Method, size: usize) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method && r.size == size && r.resample.is_none())
    }

    pub fn to_csv(&self, header: Option<&ArtifactHeader>) -> String {
        let mut out = header.map(ArtifactHeader::comment_lines).unwrap_or_default();
        writeln!(out, "# metric: {} on held-out rows", self.metric_kind).unwrap();
        for note in &self.notes {
            writeln!(out, "# note: {note}").unwrap();
        }
        out.push_str("method,size,resample,metric,metric_ci95,n_nodes,depth,depth_ci95,split_id,wall_time_ms\n");
        for r in &self.rows {
            let resample = r.resample.map_or("mean".to_string(), |i| i.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.size,
                resample,
                cell(&r.metric),
                cell(&r.metric_ci95),
                r.n_nodes,
                r.depth,
                cell(&r.depth_ci95),
                cell(&r.split_id),
                cell(&r.wall_time_ms)
            )
            .unwrap();
        }
        out
    }

    /// Plain-text panels: held-out metric and tree depth by training size,
    /// one line per method, mean with 95% half-width.
    pub fn figure_tables(&self) -> String {
        let mut sizes: Vec<usize> = self.rows.iter().map(|r| r.size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut methods: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        methods.sort_unstable();
        methods.dedup();
        let mut out = String::new();
        type Pick = fn(&BenchmarkRow) -> (Option<f64>, Option<f64>);
        let panels: [(&str, Pick); 2] =
            [("metric", |r| (r.metric, r.metric_ci95)), ("depth", |r| (Some(r.depth), r.depth_ci95))];
        for (name, pick) in panels {
            let title = if name == "metric" { self.metric_kind.to_string() } else { name.to_string() };
            writeln!(out, "{title} by training size").unwrap();
            write!(out, "{:<8}", "method").unwrap();
            for s in &sizes {
                write!(out, "{:>20}", format!("n={s}")).unwrap();
            }
            out.push('\n');
            for &m in &methods {
                write!(out, "{:<8}", m.to_string()).unwrap();
                for &s in &sizes {
                    let text = match self.summary(m, s).map(pick) {
                        Some((Some(v), ci)) => format!("{v:.3} ± {:.3}", ci.unwrap_or(0.0)),
                        _ => "-".to_string(),
                    };
                    write!(out, "{text:>20}").unwrap();
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Fingerprint of a (train, test) index pair.
pub fn split_id(train: &[usize], test: &[usize]) -> String {
    let mut h = Sha256::new();
    for part in [train, test] {
        h.update((part.len() as u64).to_le_bytes());
        for &i in part {
            h.update((i as u64).to_le_bytes());
        }
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Training and held-out rows for one (size, resample) cell. Depends only
/// on the seed, the size, the resample index and the source row count.
pub fn resample_split(n: usize, size: usize, resample: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::stream(seed, &format!("bench:{size}"), resample as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..size].to_vec();
    let mut test = order[size..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Replaces a non-negative continuous target by ln(1 + y).
pub fn log_transform_target(data: &Dataset) -> Result<Dataset, TreeError> {
    let t = data.target();
    if t.kind() != TargetKind::Continuous {
        return Err(TreeError::InvalidConfig("log transform needs a continuous target".into()));
    }
    if let Some(v) = t.values.iter().find(|v| **v <= -1.0) {
        return Err(TreeError::InvalidConfig(format!("ln(1 + y) is undefined for y = {v}")));
    }
    let target = Target::new(t.spec.clone(), t.values.iter().map(|v| v.ln_1p()).collect(), None)?;
    let treatment = data.treatment_name().map(|n| (n.to_string(), data.treatment().unwrap().to_vec()));
    Ok(Dataset::new(data.table().clone(), target, treatment)?)
}

struct Fit {
    metric: Option<f64>,
    n_nodes: usize,
    depth: usize,
    wall_time_ms: f64,
}

fn fit(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    spec: &BenchmarkSpec,
    kind: MetricKind,
) -> Result<Fit, TreeError> {
    let start = Instant::now();
    let external = ExternalCv { folds: spec.external_folds, seed: spec.seed };
    let model: TreeModel = match method {
        Method::Ztree => tune_threshold(train, &spec.tree, &spec.grid, &external)?.0,
        Method::Cart => {
            let params = tune_cart(train, &default_depth_grid(), &DEFAULT_MIN_SAMPLES_SPLIT_GRID, &external)?;
            learn_cart(train, &params)?
        }
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1000.0;
    let preds = model.predict(test.table(), test.treatment());
    Ok(Fit {
        metric: kind.compute(&preds, &test.target().values).ok(),
        n_nodes: model.node_count(),
        depth: model.depth(),
        wall_time_ms,
    })
}

/// Mean and normal-approximation 95% half-width of the mean.
fn mean_ci(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, 1.96 * (var / k).sqrt())
}

pub fn run_benchmark(source: &Dataset, spec: &BenchmarkSpec) -> Result<BenchmarkReport, TreeError> {
    let kind = metric_kind(source)?;
    if spec.resamples == 0 || spec.sizes.is_empty() || spec.methods.is_empty() {
        return Err(TreeError::InvalidConfig("benchmark needs sizes, methods and at least one resample".into()));
    }
    if let Some(&s) = spec.sizes.iter().find(|&&s| s == 0 || s >= source.n()) {
        return Err(TreeError::InvalidConfig(format!("training size {s} leaves no held-out rows from {}", source.n())));
    }
    let cells: Vec<(usize, usize)> =
        spec.sizes.iter().flat_map(|&s| (0..spec.resamples).map(move |r| (s, r))).collect();
    // results[cell][method]
    let results: Vec<(String, Vec<Fit>)> = cells
        .par_iter()
        .map(|&(size, r)| {
            let (train_rows, test_rows) = resample_split(source.n(), size, r, spec.seed);
            let (train, test) = (source.subset(&train_rows), source.subset(&test_rows));
            let fits =
                spec.methods.iter().map(|&m| fit(m, &train, &test, spec, kind)).collect::<Result<Vec<_>, _>>()?;
            Ok((split_id(&train_rows, &test_rows), fits))
        })
        .collect::<Result<_, TreeError>>()?;

    let mut rows = Vec::new();
    let mut notes = spec.notes.clone();
    for (mi, &method) in spec.methods.iter().enumerate() {
        for &size in &spec.sizes {
            let mut metrics = Vec::new();
            let (mut nodes, mut depths) = (Vec::new(), Vec::new());
            for ((s, r), (id, fits)) in cells.iter().zip(&results) {
                if *s != size {
                    continue;
                }
                let f = &fits[mi];
                if f.metric.is_none() {
                    notes.push(format!("{method} size {size} resample {r}: metric undefined on the held-out rows"));
                }
                metrics.extend(f.metric);
                nodes.push(f.n_nodes as f64);
                depths.push(f.depth as f64);
                rows.push(BenchmarkRow {
                    method,
                    size,
                    resample: Some(*r),
                    metric: f.metric,
                    metric_ci95: None,
                    n_nodes: f.n_nodes as f64,
                    depth: f.depth as f64,
                    depth_ci95: None,
                    split_id: Some(id.clone()),
                    wall_time_ms: spec.timing.then_some(f.wall_time_ms),
                });
            }
            let (metric, metric_ci95) = if metrics.is_empty() {
                (None, None)
            } else {
                let (m, c) = mean_ci(&metrics);
                (Some(m), Some(c))
            };
            let (depth, depth_ci95) = mean_ci(&depths);
            rows.push(BenchmarkRow {
                method,
                size,
                resample: None,
                metric,
                metric_ci95,
                n_nodes: mean_ci(&nodes).0,
                depth,
                depth_ci95: Some(depth_ci95),
                split_id: None,
                wall_time_ms: None,
            });
        }
    }
    Ok(BenchmarkReport { metric_kind: kind, rows, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GeneratorMode, GeneratorSpec};

    fn source() -> Dataset {
        let spec = GeneratorSpec::planted(
            600,
            3,
            "x1>0.5".parse().unwrap(),
            GeneratorMode::OutcomeShift,
            TargetKind::Binary,
            0.4,
            1,
        );
        generate(&spec).unwrap()
    }

    fn spec(d: &Dataset) -> BenchmarkSpec {
        let mut s = BenchmarkSpec::new(TreeConfig::for_dataset(d, None).unwrap(), 42);
        s.sizes = vec![100];
        s.resamples = 2;
        s.methods = vec![Method::Ztree];
        s
    }

    #[test]
    fn row_accounting_and_determinism() {
        let d = source();
        let s = spec(&d);
        let a = run_benchmark(&d, &s).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.rows[2].resample, None);
        let csv = a.to_csv(Some(&ArtifactHeader::new("ztree bench", 42)));
        assert_eq!(csv, run_benchmark(&d, &s).unwrap().to_csv(Some(&ArtifactHeader::new("ztree bench", 42))));
        assert!(csv.contains("\nztree,100,mean,"));
        assert!(a.figure_tables().contains("n=100"));
    }

    #[test]
    fn methods_share_splits() {
        let d = source();
        let mut s = spec(&d);
        s.methods = vec![Method::Ztree, Method::Cart];
        let r = run_benchmark(&d, &s).unwrap();
        let ids = |m: Method| -> Vec<Option<String>> {
            r.rows.iter().filter(|x| x.method == m && x.resample.is_some()).map(|x| x.split_id.clone()).collect()
        };
        assert_eq!(ids(Method::Ztree), ids(Method::Cart));
        let (train, test) = resample_split(600, 100, 0, 42);
        assert_eq!(ids(Method::Cart)[0].as_deref(), Some(split_id(&train, &test).as_str()));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let (train, test) = resample_split(50, 20, 3, 1);
        assert_eq!(train.len(), 20);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_ne!(resample_split(50, 20, 4, 1), (train, test));
    }

    #[test]
    fn size_must_leave_test_rows() {
        let d = source();
        let mut s = spec(&d);
        s.sizes = vec![600];
        assert!(run_benchmark(&d, &s).is_err());
    }

    #[test]
    fn ci_uses_normal_approximation() {
        let (m, c) = mean_ci(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((c - 1.96 * (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
