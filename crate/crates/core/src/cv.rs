//! Internal cross-validation: the split score of a node.
//!
//! Each repeat assigns every row of the node to one validation fold, trains
//! the best subgroup on the other folds, and records which held-out rows fall
//! into the learned subgroup. One test over the pooled held-out memberships
//! gives that repeat's |z|; the node score is the mean over repeats.

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, TargetKind};
use crate::rng;
use crate::search::{train_best_subgroup, PartitionScorer, SearchDepth, SearchError};
use crate::stats::{StatError, TestKind};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CvError {
    #[error("{n} rows cannot fill {folds} folds of at least {min_side}")]
    TooSmall { n: usize, folds: usize, min_side: usize },
    #[error("invalid cross-validation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stat(#[from] StatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, repeats: 10, seed: 42 }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), CvError> {
        if self.folds < 2 {
            return Err(CvError::InvalidConfig("folds must be at least 2".into()));
        }
        if self.repeats < 1 {
            return Err(CvError::InvalidConfig("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    #[serde(rename = "mean")]
    pub mean_score: f64,
    pub per_repeat: Vec<f64>,
}

impl CvScore {
    pub fn from_repeats(per_repeat: Vec<f64>) -> Self {
        let mean_score = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
        Self { mean_score, per_repeat }
    }
}

/// Fold index for each position. Positions are shuffled within each stratum
/// and dealt round-robin, so fold sizes differ by at most one.
pub(crate) fn assign_folds<R: rand::Rng>(strata: &[u8], folds: usize, rng: &mut R) -> Vec<usize> {
    let n_strata = strata.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut order: Vec<usize> = Vec::with_capacity(strata.len());
    for s in 0..n_strata {
        let mut members: Vec<usize> = (0..strata.len()).filter(|&i| strata[i] as usize == s).collect();
        members.shuffle(rng);
        order.extend(members);
    }
    let mut fold = vec![0; strata.len()];
    for (k, &i) in order.iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

/// Stratum of each row: the class of a binary target, combined with the
/// treatment arm when there is one.
pub(crate) fn strata(data: &Dataset, rows: &[usize], by_treatment: bool) -> Vec<u8> {
    let y = &data.target().values;
    let binary = data.target().kind() == TargetKind::Binary;
    let trt = if by_treatment { data.treatment() } else { None };
    rows.iter()
        .map(|&r| {
            let class = if binary { y[r] as u8 } else { 0 };
            match trt {
                Some(t) => class * 2 + t[r],
                None => class,
            }
        })
        .collect()
}

/// Cross-validated |z| of the best-subgroup search on `rows`.
///
/// `node_path` keys the random stream, so a node's score depends only on the
/// seed, its path and its rows.
pub fn internal_cv_score(
    data: &Dataset,
    rows: &[usize],
    test: TestKind,
    depth: SearchDepth,
    min_side: usize,
    cfg: &CvConfig,
    node_path: &str,
) -> Result<CvScore, CvError> {
    cfg.validate()?;
    let m = rows.len();
    if m < cfg.folds * min_side.max(1) {
        return Err(CvError::TooSmall { n: m, folds: cfg.folds, min_side });
    }
    let scorer = PartitionScorer::new(data, rows, test)?;
    let strata = strata(data, rows, true);
    let key = format!("cv:{node_path}");
    let per_repeat: Vec<f64> = (0..cfg.repeats)
        .into_par_iter()
        .map(|repeat| {
            let mut rng = rng::stream(cfg.seed, &key, repeat as u64);
            let fold = assign_folds(&strata, cfg.folds, &mut rng);
            repeat_score(data, rows, &fold, cfg.folds, test, depth, min_side, &scorer)
        })
        .collect::<Result<_, _>>()?;
    Ok(CvScore::from_repeats(per_repeat))
}

#[allow(clippy::too_many_arguments)]
fn repeat_score(
    data: &Dataset,
    rows: &[usize],
    fold: &[usize],
    folds: usize,
    test: TestKind,
    depth: SearchDepth,
    min_side: usize,
    scorer: &PartitionScorer,
) -> Result<f64, CvError> {
    let m = rows.len();
    let mut members = FixedBitSet::with_capacity(m);
    for f in 0..folds {
        let train: Vec<usize> = (0..m).filter(|&i| fold[i] != f).map(|i| rows[i]).collect();
        let model = match train_best_subgroup(data, &train, test, depth, min_side) {
            Ok(model) => model,
            Err(SearchError::NoSubgroup) => return Ok(0.0),
            Err(SearchError::Stat(e)) => return Err(e.into()),
            Err(e) => unreachable!("search on validated inputs failed: {e}"),
        };
        let criterion = model.criterion.compile(data.table());
        for i in (0..m).filter(|&i| fold[i] == f) {
            if criterion.matches(rows[i]) {
                members.insert(i);
            }
        }
    }
    let inside = members.count_ones(..);
    if inside < min_side.max(1) || m - inside < min_side.max(1) {
        return Ok(0.0);
    }
    Ok(scorer.score(&members).map_or(0.0, |z| z.magnitude()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Feature, FeatureSpec, FeatureTable, Target, TargetSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn planted(n: usize, seed: u64, signal: bool) -> Dataset {
        let mut rng = rng::stream(seed, "test-data", 0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = if signal {
            x.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect()
        } else {
            (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect()
        };
        let table = FeatureTable::new(
            vec![
                Feature::new(FeatureSpec::continuous("x"), Column::Numeric(x)).unwrap(),
                Feature::new(FeatureSpec::continuous("noise"), Column::Numeric(noise)).unwrap(),
            ],
            n,
        )
        .unwrap();
        Dataset::new(table, Target::new(TargetSpec::binary("y"), y, None).unwrap(), None).unwrap()
    }

    fn score(d: &Dataset, seed: u64, path: &str) -> CvScore {
        let cfg = CvConfig { seed, ..CvConfig::default() };
        internal_cv_score(d, &d.all_rows(), TestKind::TwoProportionZ, SearchDepth::ONE, 10, &cfg, path).unwrap()
    }

    #[test]
    fn constant_target_scores_zero() {
        let d = planted(200, 1, true);
        let rows: Vec<usize> = d.all_rows().into_iter().filter(|&r| d.target().values[r] == 1.0).collect();
        let cfg = CvConfig::default();
        let s = internal_cv_score(&d, &rows, TestKind::TwoProportionZ, SearchDepth::ONE, 10, &cfg, "").unwrap();
        assert_eq!(s.mean_score, 0.0);
        assert_eq!(s.per_repeat, vec![0.0; 10]);
    }

    #[test]
    fn planted_signal_scores_high() {
        let s = score(&planted(500, 3, true), 42, "");
        assert!(s.mean_score > 3.0, "{}", s.mean_score);
        // a near-perfect split of 500 rows: every repeat lands far above 3
        assert!(s.per_repeat.iter().all(|&z| z > 10.0), "{:?}", s.per_repeat);
    }

    #[test]
    fn noise_scores_low() {
        let mut scores: Vec<f64> =
            (0..20).map(|seed| score(&planted(500, 100 + seed, false), seed, "").mean_score).collect();
        scores.sort_by(f64::total_cmp);
        let median = (scores[9] + scores[10]) / 2.0;
        assert!(median < 1.0, "median {median}, scores {scores:?}");
    }

    #[test]
    fn deterministic_and_keyed_by_path() {
        let d = planted(300, 5, false);
        assert_eq!(score(&d, 7, "LR"), score(&d, 7, "LR"));
        assert_ne!(score(&d, 7, "LR").per_repeat, score(&d, 7, "LL").per_repeat);
    }

    #[test]
    fn too_small_is_an_error() {
        let d = planted(40, 1, true);
        let r = internal_cv_score(
            &d,
            &d.all_rows(),
            TestKind::TwoProportionZ,
            SearchDepth::ONE,
            10,
            &CvConfig::default(),
            "",
        );
        assert_eq!(r, Err(CvError::TooSmall { n: 40, folds: 5, min_side: 10 }));
        let bad = CvConfig { folds: 1, ..CvConfig::default() };
        assert!(matches!(
            internal_cv_score(&d, &d.all_rows(), TestKind::TwoProportionZ, SearchDepth::ONE, 1, &bad, ""),
            Err(CvError::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn folds_cover_rows_evenly(strata in prop::collection::vec(0u8..4, 1..200), folds in 2usize..11, seed in any::<u64>()) {
            let mut rng = rng::stream(seed, "folds", 0);
            let fold = assign_folds(&strata, folds, &mut rng);
            prop_assert_eq!(fold.len(), strata.len());
            let mut sizes = vec![0usize; folds];
            for &f in &fold {
                prop_assert!(f < folds);
                sizes[f] += 1;
            }
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
