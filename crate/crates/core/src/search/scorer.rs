use fixedbitset::FixedBitSet;

use crate::data::Dataset;
use crate::stats::{
    differential_effect_z, logrank_sorted, mann_whitney_from_rank_sum, select_test, two_proportion_z,
    welch_from_moments, ArmStats, BinarySample, Moments, OutcomeKind, PooledRanks, StatError, TestKind,
    TreatmentGroupSample, ZScore,
};

/// Scores subgroup-versus-complement partitions of a fixed set of rows.
///
/// Positions in the membership bitset index into the `rows` slice the scorer
/// was built from. Anything that does not depend on the partition (ranks,
/// time order, class bits) is computed once here.
pub(crate) enum PartitionScorer {
    Binary { positives: FixedBitSet, total_pos: usize, m: usize },
    Welch { y: Vec<f64> },
    MannWhitney { ranks: Vec<f64>, tie_term: f64, m: usize },
    LogRank { order: Vec<usize>, time: Vec<f64>, event: Vec<bool> },
    DiffBinary { treated: FixedBitSet, positives: FixedBitSet, treated_pos: FixedBitSet, m: usize },
    DiffContinuous { y: Vec<f64>, treated: Vec<bool> },
}

fn bits(m: usize, pred: impl Fn(usize) -> bool) -> FixedBitSet {
    let mut b = FixedBitSet::with_capacity(m);
    (0..m).filter(|&i| pred(i)).for_each(|i| b.insert(i));
    b
}

impl PartitionScorer {
    pub fn new(data: &Dataset, rows: &[usize], test: TestKind) -> Result<Self, StatError> {
        select_test(data.target().kind(), data.treatment().is_some(), Some(test))?;
        let m = rows.len();
        let y: Vec<f64> = rows.iter().map(|&r| data.target().values[r]).collect();
        Ok(match test {
            TestKind::TwoProportionZ => {
                let positives = bits(m, |i| y[i] == 1.0);
                PartitionScorer::Binary { total_pos: positives.count_ones(..), positives, m }
            }
            TestKind::WelchT => PartitionScorer::Welch { y },
            TestKind::MannWhitneyU => {
                let r = PooledRanks::new(&y);
                PartitionScorer::MannWhitney { ranks: r.ranks, tie_term: r.tie_term, m }
            }
            TestKind::LogRank => {
                let event: Vec<bool> = rows.iter().map(|&r| data.target().event(r)).collect();
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
                PartitionScorer::LogRank { order, time: y, event }
            }
            TestKind::DiffEffectBinary => {
                let trt = data.treatment().expect("checked by select_test");
                let treated = bits(m, |i| trt[rows[i]] == 1);
                let positives = bits(m, |i| y[i] == 1.0);
                let mut treated_pos = treated.clone();
                treated_pos.intersect_with(&positives);
                PartitionScorer::DiffBinary { treated, positives, treated_pos, m }
            }
            TestKind::DiffEffectContinuous => {
                let trt = data.treatment().expect("checked by select_test");
                PartitionScorer::DiffContinuous { y, treated: rows.iter().map(|&r| trt[r] == 1).collect() }
            }
        })
    }

    pub fn score(&self, members: &FixedBitSet) -> Result<ZScore, StatError> {
        match self {
            PartitionScorer::Binary { positives, total_pos, m } => {
                let na = members.count_ones(..);
                let pa = members.intersection_count(positives);
                two_proportion_z(
                    BinarySample::new(pa as u64, na as u64),
                    BinarySample::new((total_pos - pa) as u64, (m - na) as u64),
                )
            }
            PartitionScorer::Welch { y } => {
                let (mut a, mut b) = (Moments::default(), Moments::default());
                for (i, &v) in y.iter().enumerate() {
                    if members.contains(i) {
                        a.push(v);
                    } else {
                        b.push(v);
                    }
                }
                welch_from_moments(&a, &b)
            }
            PartitionScorer::MannWhitney { ranks, tie_term, m } => {
                let na = members.count_ones(..);
                let rank_sum: f64 = members.ones().map(|i| ranks[i]).sum();
                mann_whitney_from_rank_sum(rank_sum, na, m - na, *tie_term)
            }
            PartitionScorer::LogRank { order, time, event } => {
                let na = members.count_ones(..);
                logrank_sorted(order.iter().map(|&i| (time[i], event[i], members.contains(i))), na, order.len() - na)
            }
            PartitionScorer::DiffBinary { treated, positives, treated_pos, m } => {
                let n_sub = members.count_ones(..);
                let sub_t = members.intersection_count(treated);
                let sub_t_pos = members.intersection_count(treated_pos);
                let sub_pos = members.intersection_count(positives);
                let all_t = treated.count_ones(..);
                let all_t_pos = treated_pos.count_ones(..);
                let all_pos = positives.count_ones(..);
                let arms = |n_t: usize, pos_t: usize, n_c: usize, pos_c: usize| TreatmentGroupSample {
                    treated: ArmStats::from_counts(pos_t as u64, n_t as u64),
                    control: ArmStats::from_counts(pos_c as u64, n_c as u64),
                };
                let sub = arms(sub_t, sub_t_pos, n_sub - sub_t, sub_pos - sub_t_pos);
                let comp = arms(
                    all_t - sub_t,
                    all_t_pos - sub_t_pos,
                    (m - n_sub) - (all_t - sub_t),
                    (all_pos - all_t_pos) - (sub_pos - sub_t_pos),
                );
                differential_effect_z(sub, comp, OutcomeKind::Binary)
            }
            PartitionScorer::DiffContinuous { y, treated } => {
                // [sub treated, sub control, comp treated, comp control]
                let mut arms = [Moments::default(); 4];
                for (i, &v) in y.iter().enumerate() {
                    let slot = if members.contains(i) { 0 } else { 2 } + usize::from(!treated[i]);
                    arms[slot].push(v);
                }
                let group = |t: &Moments, c: &Moments| TreatmentGroupSample {
                    treated: ArmStats::from_moments(t),
                    control: ArmStats::from_moments(c),
                };
                differential_effect_z(group(&arms[0], &arms[1]), group(&arms[2], &arms[3]), OutcomeKind::Continuous)
            }
        }
    }
}
