//! Greedy impurity-based tree used as a comparison baseline.
//!
//! Gini impurity for binary targets and squared error for continuous ones.
//! Numeric features split at midpoints between adjacent distinct values,
//! nominal features one level against the rest. Splits are written as the
//! same criteria the subgroup tree uses, so both share the model format.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, TargetKind};
use crate::search::{Atom, SubgroupCriterion};
use crate::stats::StatError;
use crate::tree::{LeafStats, LearnerConfig, Split, StopReason, TreeError, TreeModel, TreeNode};
use crate::tuning::{metric_kind, pooled_metric, ExternalCv};

/// A later candidate must beat the current best by more than this, so
/// rounding noise does not reorder ties.
const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl CartParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 || self.max_depth > crate::tree::MAX_TREE_DEPTH {
            return Err(TreeError::InvalidConfig(format!(
                "max_depth must be between 1 and {}",
                crate::tree::MAX_TREE_DEPTH
            )));
        }
        if self.min_samples_split < 2 {
            return Err(TreeError::InvalidConfig("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }
}

impl Default for CartParams {
    fn default() -> Self {
        Self { max_depth: 5, min_samples_split: 2 }
    }
}

/// Count-weighted impurity of a node summarised by (n, sum, sum of squares).
/// For 0/1 outcomes sum equals sum of squares and this is n times Gini.
fn impurity(kind: TargetKind, n: f64, sum: f64, sumsq: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    match kind {
        TargetKind::Binary => {
            let p = sum / n;
            n * 2.0 * p * (1.0 - p)
        }
        _ => (sumsq - sum * sum / n).max(0.0),
    }
}

struct Best {
    gain: f64,
    atom: Atom,
}

/// Zero-gain splits are allowed, so an impure node with any valid split
/// keeps splitting until depth or size limits stop it.
fn consider(best: &mut Option<Best>, gain: f64, atom: impl FnOnce() -> Atom) {
    if best.as_ref().is_none_or(|b| gain > b.gain + GAIN_TOLERANCE) {
        *best = Some(Best { gain, atom: atom() });
    }
}

fn best_split(data: &Dataset, rows: &[usize]) -> Option<Best> {
    let kind = data.target().kind();
    let y = &data.target().values;
    let n = rows.len() as f64;
    let (sum, sumsq) = rows.iter().fold((0.0, 0.0), |(s, q), &r| (s + y[r], q + y[r] * y[r]));
    let parent = impurity(kind, n, sum, sumsq);
    let mut best = None;
    for feature in data.features() {
        match &feature.column {
            Column::Numeric(x) => {
                let mut order = rows.to_vec();
                order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
                // prefix over the low side; the split puts the high side in the subgroup
                let (mut ls, mut lq) = (0.0, 0.0);
                for i in 0..order.len() - 1 {
                    let r = order[i];
                    ls += y[r];
                    lq += y[r] * y[r];
                    let (lo, hi) = (x[r], x[order[i + 1]]);
                    if lo == hi {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let gain = parent - impurity(kind, nl, ls, lq) - impurity(kind, n - nl, sum - ls, sumsq - lq);
                    consider(&mut best, gain, || {
                        let mid = lo + (hi - lo) / 2.0;
                        Atom::greater_than(feature.name(), if mid < hi { mid } else { lo })
                    });
                }
            }
            Column::Levels(codes) => {
                let k = feature.spec.levels.len();
                let mut stats = vec![(0usize, 0.0, 0.0); k];
                for &r in rows {
                    let s = &mut stats[codes[r] as usize];
                    s.0 += 1;
                    s.1 += y[r];
                    s.2 += y[r] * y[r];
                }
                for (level, &(c, s, q)) in stats.iter().enumerate() {
                    if c == 0 || c == rows.len() {
                        continue;
                    }
                    let c = c as f64;
                    let gain = parent - impurity(kind, c, s, q) - impurity(kind, n - c, sum - s, sumsq - q);
                    consider(&mut best, gain, || Atom::equals(feature.name(), feature.spec.levels[level].clone()));
                }
            }
        }
    }
    best
}

fn grow(data: &Dataset, rows: Vec<usize>, path: String, params: &CartParams) -> TreeNode {
    let stats = LeafStats::compute(data, &rows);
    let leaf = |reason| TreeNode::leaf(path.clone(), stats.clone(), reason, None);
    if path.len() >= params.max_depth {
        return leaf(StopReason::MaxDepth);
    }
    if rows.len() < params.min_samples_split {
        return leaf(StopReason::MinSamplesSplit);
    }
    let y = &data.target().values;
    if rows.iter().all(|&r| y[r] == y[rows[0]]) {
        return leaf(StopReason::DegenerateTarget);
    }
    let Some(best) = best_split(data, &rows) else {
        return leaf(StopReason::NoSplit);
    };
    let criterion = SubgroupCriterion::single(best.atom);
    let compiled = criterion.compile(data.table());
    let (inside, outside): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| compiled.matches(r));
    let (left, right) = rayon::join(
        || grow(data, inside, format!("{path}L"), params),
        || grow(data, outside, format!("{path}R"), params),
    );
    TreeNode {
        path,
        cv_score: None,
        split: Some(Split { criterion, score: best.gain, left: Box::new(left), right: Box::new(right) }),
        stats,
        stop: None,
    }
}

pub fn learn_cart(data: &Dataset, params: &CartParams) -> Result<TreeModel, TreeError> {
    if data.n() == 0 {
        return Err(TreeError::Empty);
    }
    if data.target().kind() == TargetKind::TimeToEvent {
        return Err(StatError::Unsupported("the impurity baseline needs a binary or continuous target".into()).into());
    }
    params.validate()?;
    Ok(TreeModel {
        header: None,
        config: LearnerConfig::Cart(*params),
        schema: data.schema(),
        root: grow(data, data.all_rows(), String::new(), params),
    })
}

/// The tree `learn_cart` would grow with a smaller `max_depth`. Growth is
/// greedy and top-down, so cutting a deeper tree gives the same result.
pub fn truncate_depth(model: &TreeModel, max_depth: usize) -> Result<TreeModel, TreeError> {
    let LearnerConfig::Cart(params) = &model.config else {
        return Err(TreeError::InvalidConfig("depth truncation applies to impurity trees".into()));
    };
    if max_depth < 1 || max_depth > params.max_depth {
        return Err(TreeError::InvalidConfig(format!(
            "depth must be between 1 and the grown depth {}",
            params.max_depth
        )));
    }
    fn cut(node: &mut TreeNode, depth: usize) {
        if node.path.len() >= depth {
            node.split = None;
            node.stop = Some(StopReason::MaxDepth);
        } else if let Some(s) = node.split.as_mut() {
            cut(&mut s.left, depth);
            cut(&mut s.right, depth);
        }
    }
    let mut out = model.clone();
    cut(&mut out.root, max_depth);
    out.config = LearnerConfig::Cart(CartParams { max_depth, ..*params });
    Ok(out)
}

pub fn default_depth_grid() -> Vec<usize> {
    (1..=12).collect()
}

pub const DEFAULT_MIN_SAMPLES_SPLIT_GRID: [usize; 5] = [2, 5, 10, 20, 50];

/// Grid search over (max_depth, min_samples_split) by external CV with
/// pooled held-out predictions. Ties go to the smaller depth, then the
/// larger `min_samples_split`. One tree per fold and `min_samples_split`
/// value is grown to the deepest grid depth and truncated for the rest.
pub fn tune_cart(
    data: &Dataset,
    depth_grid: &[usize],
    mss_grid: &[usize],
    external: &ExternalCv,
) -> Result<CartParams, TreeError> {
    let (mut depths, mut splits_grid) = (depth_grid.to_vec(), mss_grid.to_vec());
    depths.sort_unstable();
    depths.dedup();
    splits_grid.sort_unstable();
    splits_grid.dedup();
    let (Some(&deepest), false) = (depths.last(), splits_grid.is_empty()) else {
        return Err(TreeError::InvalidConfig("CART grids must be nonempty".into()));
    };
    for &mss in &splits_grid {
        CartParams { max_depth: deepest, min_samples_split: mss }.validate()?;
    }
    CartParams { max_depth: depths[0], min_samples_split: 2 }.validate()?;
    let kind = metric_kind(data)?;
    let folds = external.splits(data)?;
    // per fold: predictions indexed [mss][depth]
    let per_fold: Vec<Vec<Vec<Vec<f64>>>> = folds
        .par_iter()
        .map(|(train, held)| {
            let train = data.subset(train);
            let held = data.subset(held);
            splits_grid
                .iter()
                .map(|&mss| {
                    let params = CartParams { max_depth: deepest, min_samples_split: mss };
                    let deep = learn_cart(&train, &params)?;
                    depths
                        .iter()
                        .map(|&d| Ok(truncate_depth(&deep, d)?.predict(held.table(), held.treatment())))
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_, TreeError>>()?;
    let mut best: Option<(f64, CartParams)> = None;
    for (di, &max_depth) in depths.iter().enumerate() {
        for (si, &min_samples_split) in splits_grid.iter().enumerate().rev() {
            let mut pooled = vec![0.0; data.n()];
            for ((_, held), preds) in folds.iter().zip(&per_fold) {
                for (&r, &p) in held.iter().zip(&preds[si][di]) {
                    pooled[r] = p;
                }
            }
            let metric = pooled_metric(kind, &pooled, data)?;
            if best.as_ref().is_none_or(|(b, _)| kind.better(metric, *b)) {
                best = Some((metric, CartParams { max_depth, min_samples_split }));
            }
        }
    }
    Ok(best.expect("grids are nonempty").1)
}
