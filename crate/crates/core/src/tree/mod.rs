//! Tree growth gated by cross-validated subgroup scores.
//!
//! A node splits only when its internal CV score reaches the threshold; the
//! split itself is the best subgroup retrained on all of the node's rows,
//! with the subgroup going left and the complement right. There is no
//! post-pruning. Because CV streams are keyed by node path, a tree grown at
//! a low threshold contains every tree for higher thresholds:
//! [`TreeModel::derive_pruned`] recovers them without retraining.

mod doc;
mod predict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactHeader;
use crate::cart::CartParams;
use crate::cv::{internal_cv_score, CvConfig, CvError, CvScore};
use crate::data::{DataError, Dataset, Schema, TargetKind};
use crate::search::{CandidateSpace, PartitionScorer, SearchDepth, SearchError, SubgroupCriterion};
use crate::stats::{select_test, StatError, TestKind};

pub use doc::FORMAT_VERSION;
pub use predict::{leaf_prediction, Instance};

/// Recursion stops at this depth regardless of scores.
pub const MAX_TREE_DEPTH: usize = 30;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("empty dataset")]
    Empty,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("threshold {requested} is below the trained threshold {trained}")]
    RefusedLowerThreshold { requested: f64, trained: f64 },
    #[error("model was not grown with a score threshold")]
    NotThresholdModel,
    #[error("model format: {0}")]
    Format(String),
    #[error("model format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: u64 },
    #[error("model has no schema fingerprint")]
    MissingFingerprint,
    #[error("model invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub threshold: f64,
    pub search_depth: SearchDepth,
    pub min_side: usize,
    pub test: TestKind,
    pub cv: CvConfig,
}

impl TreeConfig {
    /// Defaults: threshold 2.0, depth 1, `min_side` 10, 5-fold CV repeated
    /// 10 times, and the default test for the dataset's target.
    pub fn for_dataset(data: &Dataset, test: Option<TestKind>) -> Result<Self, TreeError> {
        Ok(Self {
            threshold: 2.0,
            search_depth: SearchDepth::ONE,
            min_side: 10,
            test: select_test(data.target().kind(), data.treatment().is_some(), test)?,
            cv: CvConfig::default(),
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(TreeError::InvalidConfig(format!("threshold must be finite and >= 0, got {}", self.threshold)));
        }
        if self.min_side == 0 {
            return Err(TreeError::InvalidConfig("min_side must be at least 1".into()));
        }
        self.cv.validate()?;
        Ok(())
    }

    fn min_node_size(&self) -> usize {
        (2 * self.min_side).max(self.cv.folds * self.min_side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "kebab-case")]
pub enum LearnerConfig {
    Ztree(TreeConfig),
    Cart(CartParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    BelowThreshold,
    TooSmall,
    DegenerateTarget,
    NoCandidates,
    NoSubgroup,
    DepthCap,
    MaxDepth,
    MinSamplesSplit,
    NoSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub treated_n: usize,
    pub treated_mean: Option<f64>,
    pub control_n: usize,
    pub control_mean: Option<f64>,
}

impl ArmSummary {
    pub fn effect(&self) -> Option<f64> {
        Some(self.treated_mean? - self.control_mean?)
    }
}

/// Outcome summary of the training rows that reached a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<ArmSummary>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl LeafStats {
    pub fn compute(data: &Dataset, rows: &[usize]) -> Self {
        let target = data.target();
        let y = &target.values;
        let n = rows.len();
        let mut stats =
            LeafStats { n, positive_fraction: None, mean: None, events: None, total_time: None, arms: None };
        match target.kind() {
            TargetKind::Binary => {
                stats.positive_fraction = Some(mean_of(rows.iter().map(|&r| y[r])).unwrap_or(0.0));
            }
            TargetKind::Continuous => {
                stats.mean = Some(mean_of(rows.iter().map(|&r| y[r])).unwrap_or(0.0));
            }
            TargetKind::TimeToEvent => {
                stats.events = Some(rows.iter().filter(|&&r| target.event(r)).count());
                stats.total_time = Some(rows.iter().map(|&r| y[r]).sum());
            }
        }
        if let (Some(trt), false) = (data.treatment(), target.kind() == TargetKind::TimeToEvent) {
            let arm = |a: u8| {
                let vals: Vec<f64> = rows.iter().filter(|&&r| trt[r] == a).map(|&r| y[r]).collect();
                (vals.len(), mean_of(vals.into_iter()))
            };
            let ((treated_n, treated_mean), (control_n, control_mean)) = (arm(1), arm(0));
            stats.arms = Some(ArmSummary { treated_n, treated_mean, control_n, control_mean });
        }
        stats
    }

    /// Positive fraction, mean, or events per unit time.
    pub fn value(&self) -> f64 {
        if let Some(p) = self.positive_fraction {
            return p;
        }
        if let Some(m) = self.mean {
            return m;
        }
        match (self.events, self.total_time) {
            (Some(e), Some(t)) if t > 0.0 => e as f64 / t,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub criterion: SubgroupCriterion,
    /// Training z of the chosen subgroup (impurity decrease for CART).
    pub score: f64,
    /// Subgroup.
    pub left: Box<TreeNode>,
    /// Complement.
    pub right: Box<TreeNode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Root-to-node string over `L`/`R`; empty at the root.
    pub path: String,
    pub cv_score: Option<CvScore>,
    pub split: Option<Split>,
    pub stats: LeafStats,
    pub stop: Option<StopReason>,
}

impl TreeNode {
    pub fn leaf(path: String, stats: LeafStats, stop: StopReason, cv_score: Option<CvScore>) -> Self {
        Self { path, cv_score, split: None, stats, stop: Some(stop) }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn n(&self) -> usize {
        self.stats.n
    }

    pub fn children(&self) -> Option<(&TreeNode, &TreeNode)> {
        self.split.as_ref().map(|s| (&*s.left, &*s.right))
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().map_or(0, |(l, r)| l.node_count() + r.node_count())
    }

    pub fn leaf_count(&self) -> usize {
        self.children().map_or(1, |(l, r)| l.leaf_count() + r.leaf_count())
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.children().map_or(0, |(l, r)| 1 + l.depth().max(r.depth()))
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TreeNode)) {
        f(self);
        if let Some((l, r)) = self.children() {
            l.walk(f);
            r.walk(f);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    pub header: Option<ArtifactHeader>,
    pub config: LearnerConfig,
    pub schema: Schema,
    pub root: TreeNode,
}

impl TreeModel {
    pub fn threshold(&self) -> Option<f64> {
        match &self.config {
            LearnerConfig::Ztree(c) => Some(c.threshold),
            LearnerConfig::Cart(_) => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// The tree that training at `new_threshold` would have produced: every
    /// node whose CV score falls below it becomes a leaf. No retraining.
    pub fn derive_pruned(&self, new_threshold: f64) -> Result<TreeModel, TreeError> {
        let LearnerConfig::Ztree(cfg) = &self.config else {
            return Err(TreeError::NotThresholdModel);
        };
        if !new_threshold.is_finite() || new_threshold < cfg.threshold {
            return Err(TreeError::RefusedLowerThreshold { requested: new_threshold, trained: cfg.threshold });
        }
        fn prune(node: &mut TreeNode, t: f64) {
            if node.cv_score.as_ref().is_some_and(|cv| cv.mean_score < t) {
                node.split = None;
                node.stop = Some(StopReason::BelowThreshold);
                return;
            }
            if let Some(split) = node.split.as_mut() {
                prune(&mut split.left, t);
                prune(&mut split.right, t);
            }
        }
        let mut out = self.clone();
        prune(&mut out.root, new_threshold);
        out.config = LearnerConfig::Ztree(TreeConfig { threshold: new_threshold, ..cfg.clone() });
        Ok(out)
    }
}

/// Grows a tree on every row of `data`.
pub fn learn_tree(data: &Dataset, cfg: &TreeConfig) -> Result<TreeModel, TreeError> {
    if data.n() == 0 {
        return Err(TreeError::Empty);
    }
    cfg.validate()?;
    select_test(data.target().kind(), data.treatment().is_some(), Some(cfg.test))?;
    let root = grow(data, data.all_rows(), String::new(), cfg)?;
    Ok(TreeModel { header: None, config: LearnerConfig::Ztree(cfg.clone()), schema: data.schema(), root })
}

fn grow(data: &Dataset, rows: Vec<usize>, path: String, cfg: &TreeConfig) -> Result<TreeNode, TreeError> {
    let stats = LeafStats::compute(data, &rows);
    let stop = |reason, cv| Ok(TreeNode::leaf(path.clone(), stats.clone(), reason, cv));
    if path.len() >= MAX_TREE_DEPTH {
        return stop(StopReason::DepthCap, None);
    }
    if rows.len() < cfg.min_node_size() {
        return stop(StopReason::TooSmall, None);
    }
    if data.is_target_degenerate(&rows) {
        return stop(StopReason::DegenerateTarget, None);
    }
    let space = CandidateSpace::build(data.table(), &rows);
    if !space.any_candidate(cfg.search_depth, cfg.min_side) {
        return stop(StopReason::NoCandidates, None);
    }
    let cv = internal_cv_score(data, &rows, cfg.test, cfg.search_depth, cfg.min_side, &cfg.cv, &path)?;
    if cv.mean_score < cfg.threshold {
        return stop(StopReason::BelowThreshold, Some(cv));
    }
    let scorer = PartitionScorer::new(data, &rows, cfg.test)?;
    let Some(model) = space.best(&scorer, cfg.search_depth, cfg.min_side) else {
        return stop(StopReason::NoSubgroup, Some(cv));
    };
    drop(space);
    let criterion = model.criterion.compile(data.table());
    let (inside, outside): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| criterion.matches(r));
    let (left, right) =
        rayon::join(|| grow(data, inside, format!("{path}L"), cfg), || grow(data, outside, format!("{path}R"), cfg));
    Ok(TreeNode {
        path,
        cv_score: Some(cv),
        split: Some(Split {
            criterion: model.criterion,
            score: model.train_score.value(),
            left: Box::new(left?),
            right: Box::new(right?),
        }),
        stats,
        stop: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Feature, FeatureSpec, FeatureTable, Target, TargetSpec};
    use crate::rng;
    use rand::Rng;

    pub(crate) fn planted(n: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(seed, "tree-test", 0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect();
        let table = FeatureTable::new(
            vec![
                Feature::new(FeatureSpec::continuous("x"), Column::Numeric(x)).unwrap(),
                Feature::new(FeatureSpec::continuous("z"), Column::Numeric(z)).unwrap(),
            ],
            n,
        )
        .unwrap();
        Dataset::new(table, Target::new(TargetSpec::binary("y"), y, None).unwrap(), None).unwrap()
    }

    #[test]
    fn unreachable_threshold_gives_one_leaf() {
        let d = planted(300, 1);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap().with_threshold(1e9);
        let m = learn_tree(&d, &cfg).unwrap();
        assert_eq!(m.node_count(), 1);
        assert_eq!(m.root.stop, Some(StopReason::BelowThreshold));
        let frac = d.target().values.iter().sum::<f64>() / 300.0;
        assert_eq!(m.root.stats.positive_fraction, Some(frac));
    }

    #[test]
    fn planted_split_recovers_signal() {
        let d = planted(500, 2);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        let m = learn_tree(&d, &cfg).unwrap();
        let split = m.root.split.as_ref().expect("root splits");
        let atom = &split.criterion.atoms()[0];
        assert_eq!(atom.feature, "x");
        match atom.form {
            crate::search::AtomForm::GreaterThan(c) => assert!(c.abs() < 0.1, "cutoff {c}"),
            _ => panic!("expected a cutoff atom"),
        }
        assert_eq!(split.left.n() + split.right.n(), 500);
        // the cutoff grid misses 0 by a little, so one more split may clean up
        assert!(m.depth() <= 3, "depth {}", m.depth());
        let preds = m.predict(d.table(), None);
        let correct = preds.iter().zip(&d.target().values).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
        assert!(correct >= 490, "{correct} of 500");
        assert!(m.root.cv_score.as_ref().unwrap().mean_score >= 2.0);
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let d = planted(200, 3);
        let rows: Vec<usize> = d.all_rows().into_iter().filter(|&r| d.target().values[r] == 0.0).collect();
        let d = d.subset(&rows);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap().with_threshold(0.0);
        let m = learn_tree(&d, &cfg).unwrap();
        assert_eq!(m.node_count(), 1);
        assert_eq!(m.root.stop, Some(StopReason::DegenerateTarget));
    }

    #[test]
    fn pruning_matches_direct_training() {
        let d = planted(400, 4);
        let base_cfg = TreeConfig::for_dataset(&d, None).unwrap().with_threshold(0.2);
        let base = learn_tree(&d, &base_cfg).unwrap();
        for t in [0.2, 0.6, 1.0, 2.0, 3.0, 50.0] {
            let direct = learn_tree(&d, &base_cfg.clone().with_threshold(t)).unwrap();
            assert_eq!(base.derive_pruned(t).unwrap(), direct, "threshold {t}");
        }
        assert_eq!(base.derive_pruned(1e9).unwrap().node_count(), 1);
        assert!(matches!(base.derive_pruned(0.1), Err(TreeError::RefusedLowerThreshold { .. })));
    }

    #[test]
    fn rejects_bad_configs() {
        let d = planted(100, 5);
        let cfg = TreeConfig::for_dataset(&d, None).unwrap();
        assert!(learn_tree(&d, &cfg.clone().with_threshold(-1.0)).is_err());
        assert!(learn_tree(&d, &TreeConfig { test: TestKind::LogRank, ..cfg.clone() }).is_err());
        assert!(matches!(learn_tree(&d.subset(&[]), &cfg), Err(TreeError::Empty)));
    }
}
