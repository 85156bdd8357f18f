use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TargetKind;
use crate::stats::PooledRanks;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric is undefined: {0}")]
    Undefined(&'static str),
    #[error("{predictions} predictions for {actuals} actual values")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("no values to score")]
    Empty,
    #[error("no metric for {0} targets")]
    Unsupported(TargetKind),
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `labels` are 0/1.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::Undefined("labels contain a single class"));
    }
    let ranks = PooledRanks::new(scores).ranks;
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), actuals.len())?;
    let sse: f64 = predictions.iter().zip(actuals).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

fn check_lengths(predictions: usize, actuals: usize) -> Result<(), MetricError> {
    if predictions != actuals {
        return Err(MetricError::LengthMismatch { predictions, actuals });
    }
    if predictions == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Auroc,
    Rmse,
}

impl MetricKind {
    pub fn for_target(kind: TargetKind) -> Result<Self, MetricError> {
        match kind {
            TargetKind::Binary => Ok(MetricKind::Auroc),
            TargetKind::Continuous => Ok(MetricKind::Rmse),
            TargetKind::TimeToEvent => Err(MetricError::Unsupported(kind)),
        }
    }

    pub fn compute(self, predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricError> {
        match self {
            MetricKind::Auroc => auroc(predictions, actuals),
            MetricKind::Rmse => rmse(predictions, actuals),
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Auroc => a > b,
            MetricKind::Rmse => a < b,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Auroc => "auroc",
            MetricKind::Rmse => "rmse",
        })
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auroc" => Ok(MetricKind::Auroc),
            "rmse" => Ok(MetricKind::Rmse),
            _ => Err(format!("unknown metric `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_count(scores: &[f64], labels: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1.0 && lj == 0.0 {
                    pairs += 1.0;
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[1.0, 1.0]), Err(MetricError::Undefined("labels contain a single class")));
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[3.0], &[1.0]).unwrap(), 2.0);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch { .. })));
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_counting(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..50)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 2.0).collect();
            let labels: Vec<f64> = data.iter().map(|(_, l)| f64::from(u8::from(*l))).collect();
            prop_assume!(labels.contains(&0.0) && labels.contains(&1.0));
            let got = auroc(&scores, &labels).unwrap();
            prop_assert!((got - pair_count(&scores, &labels)).abs() < 1e-12);
            // strictly increasing transform
            let shifted: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            prop_assert_eq!(auroc(&shifted, &labels).unwrap(), got);
        }

        #[test]
        fn auroc_complement(scores in prop::collection::hash_set(0u32..1000, 2..40), seed in any::<u64>()) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let labels: Vec<f64> = (0..scores.len()).map(|i| f64::from(((seed >> (i % 64)) & 1) as u8)).collect();
            prop_assume!(labels.contains(&0.0) && labels.contains(&1.0));
            let flipped: Vec<f64> = labels.iter().map(|l| 1.0 - l).collect();
            let sum = auroc(&scores, &labels).unwrap() + auroc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rmse_symmetric(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..30)) {
            let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert_eq!(rmse(&p, &a).unwrap(), rmse(&a, &p).unwrap());
        }
    }
}
