//! Threshold selection by one external cross-validation.
//!
//! Each fold grows a single tree at the smallest grid threshold and derives
//! the rest of the family by pruning, so the grid costs one training per fold.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::ArtifactHeader;
use crate::cv::{assign_folds, strata};
use crate::data::{Dataset, TargetKind};
use crate::metrics::{MetricError, MetricKind};
use crate::rng;
use crate::stats::StatError;
use crate::tree::{learn_tree, TreeConfig, TreeError, TreeModel};

/// z thresholds 0.2, 0.4, ..., 3.0.
pub fn default_grid() -> Vec<f64> {
    (1..=15).map(|k| f64::from(k) / 5.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCv {
    pub folds: usize,
    pub seed: u64,
}

/// Train rows and held-out rows of one fold.
pub type FoldSplit = (Vec<usize>, Vec<usize>);

impl Default for ExternalCv {
    fn default() -> Self {
        Self { folds: 10, seed: 42 }
    }
}

impl ExternalCv {
    /// Fold of each row: stratified by class for binary targets, plain
    /// shuffled otherwise.
    pub fn assign(&self, data: &Dataset) -> Result<Vec<usize>, TreeError> {
        if self.folds < 2 || self.folds > data.n() {
            return Err(TreeError::InvalidConfig(format!("{} external folds for {} rows", self.folds, data.n())));
        }
        let mut rng = rng::stream(self.seed, "external-cv", 0);
        Ok(assign_folds(&strata(data, &data.all_rows(), false), self.folds, &mut rng))
    }

    /// (train rows, held-out rows) per fold.
    pub fn splits(&self, data: &Dataset) -> Result<Vec<FoldSplit>, TreeError> {
        let fold = self.assign(data)?;
        Ok((0..self.folds).map(|f| (0..data.n()).partition(|&r| fold[r] != f)).collect())
    }
}

pub(crate) fn metric_kind(data: &Dataset) -> Result<MetricKind, TreeError> {
    MetricKind::for_target(data.target().kind()).map_err(|e| match e {
        MetricError::Unsupported(TargetKind::TimeToEvent) => {
            StatError::Unsupported("tuning needs a binary or continuous target".into()).into()
        }
        other => TreeError::InvalidConfig(other.to_string()),
    })
}

pub(crate) fn pooled_metric(kind: MetricKind, predictions: &[f64], data: &Dataset) -> Result<f64, TreeError> {
    kind.compute(predictions, &data.target().values)
        .map_err(|e| TreeError::InvalidConfig(format!("pooled {kind}: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub grid: Vec<f64>,
    pub per_threshold_cv_metric: Vec<f64>,
    pub n_nodes_mean: Vec<f64>,
    pub depth_mean: Vec<f64>,
    pub chosen: f64,
    pub metric_kind: MetricKind,
    pub notes: Vec<String>,
}

impl TuningReport {
    pub fn to_csv(&self, header: Option<&ArtifactHeader>) -> String {
        let mut out = header.map(ArtifactHeader::comment_lines).unwrap_or_default();
        writeln!(out, "# metric: {} (pooled over held-out folds)", self.metric_kind).unwrap();
        writeln!(out, "# chosen: {}", self.chosen).unwrap();
        for note in &self.notes {
            writeln!(out, "# note: {note}").unwrap();
        }
        out.push_str("threshold,cv_metric,n_nodes_mean,depth_mean\n");
        for i in 0..self.grid.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.grid[i], self.per_threshold_cv_metric[i], self.n_nodes_mean[i], self.depth_mean[i]
            )
            .unwrap();
        }
        out
    }
}

/// Sorted, deduplicated grid; every value finite and non-negative.
fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>, TreeError> {
    if grid.is_empty() || grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(TreeError::InvalidConfig("threshold grid must be nonempty, finite and >= 0".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

pub fn tune_threshold(
    data: &Dataset,
    cfg: &TreeConfig,
    grid: &[f64],
    external: &ExternalCv,
) -> Result<(TreeModel, TuningReport), TreeError> {
    tune_threshold_with(data, cfg, grid, external, learn_tree)
}

/// [`tune_threshold`] with the base-tree learner supplied by the caller.
/// `train` runs once per fold and once more on the full data.
pub fn tune_threshold_with<F>(
    data: &Dataset,
    cfg: &TreeConfig,
    grid: &[f64],
    external: &ExternalCv,
    train: F,
) -> Result<(TreeModel, TuningReport), TreeError>
where
    F: Fn(&Dataset, &TreeConfig) -> Result<TreeModel, TreeError> + Sync,
{
    let grid = normalize_grid(grid)?;
    let kind = metric_kind(data)?;
    let base_cfg = cfg.clone().with_threshold(grid[0]);
    let splits = external.splits(data)?;
    let mut notes = Vec::new();
    if kind == MetricKind::Auroc {
        let y = &data.target().values;
        for (f, (_, held)) in splits.iter().enumerate() {
            let pos = held.iter().filter(|&&r| y[r] == 1.0).count();
            if pos == 0 || pos == held.len() {
                notes.push(format!("fold {f} holds out a single class; its rows are still pooled"));
            }
        }
    }

    // per fold: predictions on held-out rows, node counts and depths, per threshold
    type FoldOut = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>);
    let per_fold: Vec<FoldOut> = splits
        .par_iter()
        .map(|(train_rows, held)| {
            let base = train(&data.subset(train_rows), &base_cfg)?;
            let held_data = data.subset(held);
            let mut preds = Vec::with_capacity(grid.len());
            let (mut nodes, mut depths) = (Vec::new(), Vec::new());
            for &t in &grid {
                let m = base.derive_pruned(t)?;
                preds.push(m.predict(held_data.table(), held_data.treatment()));
                nodes.push(m.node_count());
                depths.push(m.depth());
            }
            Ok((preds, nodes, depths))
        })
        .collect::<Result<_, TreeError>>()?;

    let folds = splits.len() as f64;
    let mut metrics = Vec::with_capacity(grid.len());
    let (mut n_nodes_mean, mut depth_mean) = (Vec::new(), Vec::new());
    for i in 0..grid.len() {
        let mut pooled = vec![0.0; data.n()];
        for ((_, held), (preds, _, _)) in splits.iter().zip(&per_fold) {
            for (&r, &p) in held.iter().zip(&preds[i]) {
                pooled[r] = p;
            }
        }
        metrics.push(pooled_metric(kind, &pooled, data)?);
        n_nodes_mean.push(per_fold.iter().map(|f| f.1[i] as f64).sum::<f64>() / folds);
        depth_mean.push(per_fold.iter().map(|f| f.2[i] as f64).sum::<f64>() / folds);
    }

    // ascending grid: a later equal score wins, so ties go to the larger threshold
    let mut best = 0;
    for i in 1..grid.len() {
        if !kind.better(metrics[best], metrics[i]) {
            best = i;
        }
    }
    let chosen = grid[best];
    let model = train(data, &base_cfg)?.derive_pruned(chosen)?;
    Ok((
        model,
        TuningReport {
            grid,
            per_threshold_cv_metric: metrics,
            n_nodes_mean,
            depth_mean,
            chosen,
            metric_kind: kind,
            notes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Feature, FeatureSpec, FeatureTable, Target, TargetSpec};
    use rand::Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn dataset(n: usize, seed: u64, signal: bool) -> Dataset {
        let mut rng = rng::stream(seed, "tuning-test", 0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let p = if signal && v > 0.5 { 0.8 } else { 0.3 };
                f64::from(u8::from(rng.random_bool(p)))
            })
            .collect();
        let table = FeatureTable::new(vec![Feature::new(FeatureSpec::continuous("x"), Column::Numeric(x)).unwrap()], n)
            .unwrap();
        Dataset::new(table, Target::new(TargetSpec::binary("y"), y, None).unwrap(), None).unwrap()
    }

    #[test]
    fn grid_is_fifteen_steps() {
        let g = default_grid();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[2], 0.6);
        assert_eq!(g[14], 3.0);
    }

    #[test]
    fn one_training_per_fold_plus_final() {
        let d = dataset(400, 1, true);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        let calls = AtomicUsize::new(0);
        let (_, report) = tune_threshold_with(&d, &cfg, &default_grid(), &ExternalCv::default(), |d, c| {
            calls.fetch_add(1, Ordering::SeqCst);
            learn_tree(d, c)
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 10 + 1);
        assert_eq!(report.per_threshold_cv_metric.len(), 15);
        assert!(report.grid.contains(&report.chosen));
    }

    #[test]
    fn single_threshold_grid() {
        let d = dataset(300, 2, true);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        let (m, report) = tune_threshold(&d, &cfg, &[1.4], &ExternalCv::default()).unwrap();
        assert_eq!(report.chosen, 1.4);
        assert_eq!(m.threshold(), Some(1.4));
        assert_eq!(m, learn_tree(&d, &cfg.with_threshold(1.4)).unwrap());
    }

    #[test]
    fn report_csv_layout() {
        let d = dataset(300, 3, true);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        let (_, report) = tune_threshold(&d, &cfg, &default_grid(), &ExternalCv::default()).unwrap();
        let csv = report.to_csv(Some(&ArtifactHeader::new("ztree tune", 42)));
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "threshold,cv_metric,n_nodes_mean,depth_mean");
        assert_eq!(rows.len(), 16);
        assert!(rows[1].starts_with("0.2,"));
    }

    #[test]
    fn ties_go_to_larger_threshold() {
        // a constant target gives single leaves and equal metrics everywhere
        let mut d = dataset(200, 4, false);
        let y = vec![0.0; 200];
        let t = Target::new(TargetSpec::continuous("y"), y, None).unwrap();
        d = Dataset::new(d.table().clone(), t, None).unwrap();
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        let (_, report) = tune_threshold(&d, &cfg, &default_grid(), &ExternalCv::default()).unwrap();
        assert_eq!(report.chosen, 3.0);
    }
}
