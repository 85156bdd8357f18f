//! Two-sample tests reported on a common signed z scale.
//!
//! Every statistic is oriented so that a positive value means the first
//! group (the subgroup) has the larger outcome, and swapping the groups
//! negates it exactly. Zero-variance inputs are errors, never infinities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TargetKind;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum StatError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
    #[error("insufficient sample: {0}")]
    InsufficientSample(&'static str),
    #[error("test {test} does not fit a {target} target {treatment}")]
    Incompatible { test: TestKind, target: TargetKind, treatment: &'static str },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown test `{0}`")]
    UnknownTest(String),
}

/// A finite, signed test statistic on the standard-normal scale.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ZScore(f64);

impl ZScore {
    pub fn new(value: f64) -> Result<Self, StatError> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(StatError::DegenerateSample("non-finite statistic"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn magnitude(self) -> f64 {
        self.0.abs()
    }

    /// -1, 0 or +1.
    pub fn direction(self) -> i8 {
        if self.0 > 0.0 {
            1
        } else if self.0 < 0.0 {
            -1
        } else {
            0
        }
    }
}

impl fmt::Display for ZScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinarySample {
    pub successes: u64,
    pub n: u64,
}

impl BinarySample {
    pub fn new(successes: u64, n: u64) -> Self {
        assert!(successes <= n, "successes exceed sample size");
        Self { successes, n }
    }
}

/// Pooled-variance two-proportion z-test.
pub fn two_proportion_z(a: BinarySample, b: BinarySample) -> Result<ZScore, StatError> {
    if a.n == 0 || b.n == 0 {
        return Err(StatError::InsufficientSample("empty group"));
    }
    let (na, nb) = (a.n as f64, b.n as f64);
    let pooled = (a.successes + b.successes) as f64 / (na + nb);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(StatError::DegenerateSample("pooled proportion is 0 or 1"));
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    ZScore::new((a.successes as f64 / na - b.successes as f64 / nb) / se)
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut m = Self::default();
        values.iter().for_each(|&x| m.push(x));
        m
    }

    /// Sample variance (n - 1 denominator); zero for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }
}

/// Welch's unequal-variance t statistic, used directly as the z-scale score.
pub fn welch_t_z(a: &[f64], b: &[f64]) -> Result<ZScore, StatError> {
    welch_from_moments(&Moments::from_slice(a), &Moments::from_slice(b))
}

pub(crate) fn welch_from_moments(a: &Moments, b: &Moments) -> Result<ZScore, StatError> {
    if a.n < 2 || b.n < 2 {
        return Err(StatError::InsufficientSample("welch t needs two values per group"));
    }
    let se2 = a.variance() / a.n as f64 + b.variance() / b.n as f64;
    if se2 <= 0.0 {
        return Err(StatError::DegenerateSample("both groups have zero variance"));
    }
    ZScore::new((a.mean - b.mean) / se2.sqrt())
}

/// Midranks of a pooled sample plus the tie term `sum(t^3 - t)`.
#[derive(Clone, Debug)]
pub(crate) struct PooledRanks {
    pub ranks: Vec<f64>,
    pub tie_term: f64,
}

impl PooledRanks {
    pub fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut ranks = vec![0.0; values.len()];
        let mut tie_term = 0.0;
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && values[order[end]] == values[order[start]] {
                end += 1;
            }
            // 1-based ranks start+1 ..= end share their average
            let mid = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                ranks[i] = mid;
            }
            let t = (end - start) as f64;
            tie_term += t * t * t - t;
            start = end;
        }
        Self { ranks, tie_term }
    }
}

pub(crate) fn mann_whitney_from_rank_sum(
    rank_sum_a: f64,
    na: usize,
    nb: usize,
    tie_term: f64,
) -> Result<ZScore, StatError> {
    if na == 0 || nb == 0 || na + nb < 4 {
        return Err(StatError::InsufficientSample("mann-whitney needs four values and two groups"));
    }
    let (fa, fb) = (na as f64, nb as f64);
    let n = fa + fb;
    let u = rank_sum_a - fa * (fa + 1.0) / 2.0;
    let var = fa * fb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Err(StatError::DegenerateSample("all values tied"));
    }
    ZScore::new((u - fa * fb / 2.0) / var.sqrt())
}

/// Mann-Whitney U of the first sample, from pooled midranks.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = PooledRanks::new(&pooled);
    let fa = a.len() as f64;
    ranks.ranks[..a.len()].iter().sum::<f64>() - fa * (fa + 1.0) / 2.0
}

/// Normal approximation to Mann-Whitney U with tie-corrected variance and no
/// continuity correction.
pub fn mann_whitney_z(a: &[f64], b: &[f64]) -> Result<ZScore, StatError> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = PooledRanks::new(&pooled);
    let rank_sum: f64 = ranks.ranks[..a.len()].iter().sum();
    mann_whitney_from_rank_sum(rank_sum, a.len(), b.len(), ranks.tie_term)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalObs {
    pub time: f64,
    /// `false` means censored.
    pub event: bool,
}

/// Log-rank statistic `(O_a - E_a) / sqrt(V)` over distinct event times.
pub fn logrank_z(a: &[SurvivalObs], b: &[SurvivalObs]) -> Result<ZScore, StatError> {
    let mut pooled: Vec<(f64, bool, bool)> =
        a.iter().map(|o| (o.time, o.event, true)).chain(b.iter().map(|o| (o.time, o.event, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    logrank_sorted(pooled.into_iter(), a.len(), b.len())
}

/// `sorted` yields `(time, event, in_a)` in ascending time.
pub(crate) fn logrank_sorted<I>(sorted: I, na: usize, nb: usize) -> Result<ZScore, StatError>
where
    I: Iterator<Item = (f64, bool, bool)>,
{
    if na == 0 || nb == 0 {
        return Err(StatError::InsufficientSample("empty group"));
    }
    let mut risk_a = na as f64;
    let mut risk_b = nb as f64;
    let mut o_minus_e = 0.0;
    let mut var = 0.0;
    let mut any_event = false;
    let mut it = sorted.peekable();
    while let Some((t, event, in_a)) = it.next() {
        let (mut da, mut db, mut leave_a, mut leave_b) = (0.0, 0.0, 0.0, 0.0);
        let mut tally = |event: bool, in_a: bool| {
            match (event, in_a) {
                (true, true) => da += 1.0,
                (true, false) => db += 1.0,
                _ => {}
            }
            if in_a {
                leave_a += 1.0;
            } else {
                leave_b += 1.0;
            }
        };
        tally(event, in_a);
        while let Some(&(t2, e2, a2)) = it.peek() {
            if t2 != t {
                break;
            }
            tally(e2, a2);
            it.next();
        }
        let d = da + db;
        if d > 0.0 {
            any_event = true;
            let n = risk_a + risk_b;
            // O_a - E_a at this time, written so swapping groups negates it exactly
            o_minus_e += (da * risk_b - db * risk_a) / n;
            if n > 1.0 {
                var += d * (risk_a * risk_b) * (n - d) / (n * n * (n - 1.0));
            }
        }
        risk_a -= leave_a;
        risk_b -= leave_b;
    }
    if !any_event {
        return Err(StatError::DegenerateSample("no events"));
    }
    if var <= 0.0 {
        return Err(StatError::DegenerateSample("zero log-rank variance"));
    }
    ZScore::new(o_minus_e / var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// Size, mean and variance of one treatment arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmStats {
    pub n: u64,
    pub mean: f64,
    /// Sample variance for continuous arms, plug-in `p(1-p)` for binary arms.
    pub var: f64,
}

impl ArmStats {
    pub fn from_values(values: &[f64]) -> Self {
        Self::from_moments(&Moments::from_slice(values))
    }

    pub(crate) fn from_moments(m: &Moments) -> Self {
        Self { n: m.n, mean: m.mean, var: m.variance() }
    }

    pub fn from_counts(successes: u64, n: u64) -> Self {
        let p = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
        Self { n, mean: p, var: p * (1.0 - p) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreatmentGroupSample {
    pub treated: ArmStats,
    pub control: ArmStats,
}

impl TreatmentGroupSample {
    pub fn effect(&self) -> f64 {
        self.treated.mean - self.control.mean
    }

    fn effect_variance(&self) -> f64 {
        self.treated.var / self.treated.n as f64 + self.control.var / self.control.n as f64
    }
}

/// Difference of treatment effects between subgroup and complement over the
/// standard error of that difference.
pub fn differential_effect_z(
    sub: TreatmentGroupSample,
    comp: TreatmentGroupSample,
    outcome: OutcomeKind,
) -> Result<ZScore, StatError> {
    let min_n = match outcome {
        OutcomeKind::Binary => 1,
        OutcomeKind::Continuous => 2,
    };
    let arms = [sub.treated, sub.control, comp.treated, comp.control];
    if arms.iter().any(|a| a.n < min_n) {
        return Err(StatError::InsufficientSample("treatment arm too small"));
    }
    let var = sub.effect_variance() + comp.effect_variance();
    if var <= 0.0 {
        return Err(StatError::DegenerateSample("zero standard error of the difference"));
    }
    ZScore::new((sub.effect() - comp.effect()) / var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    TwoProportionZ,
    WelchT,
    MannWhitneyU,
    LogRank,
    DiffEffectBinary,
    DiffEffectContinuous,
}

impl TestKind {
    pub const ALL: [TestKind; 6] = [
        TestKind::TwoProportionZ,
        TestKind::WelchT,
        TestKind::MannWhitneyU,
        TestKind::LogRank,
        TestKind::DiffEffectBinary,
        TestKind::DiffEffectContinuous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::TwoProportionZ => "two-proportion-z",
            TestKind::WelchT => "welch-t",
            TestKind::MannWhitneyU => "mann-whitney-u",
            TestKind::LogRank => "log-rank",
            TestKind::DiffEffectBinary => "diff-effect-binary",
            TestKind::DiffEffectContinuous => "diff-effect-continuous",
        }
    }

    pub fn needs_treatment(self) -> bool {
        matches!(self, TestKind::DiffEffectBinary | TestKind::DiffEffectContinuous)
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            TestKind::TwoProportionZ | TestKind::DiffEffectBinary => TargetKind::Binary,
            TestKind::WelchT | TestKind::MannWhitneyU | TestKind::DiffEffectContinuous => TargetKind::Continuous,
            TestKind::LogRank => TargetKind::TimeToEvent,
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = StatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| StatError::UnknownTest(s.to_string()))
    }
}

/// Picks the split test for a target, honoring an explicit choice when it fits.
pub fn select_test(
    target: TargetKind,
    has_treatment: bool,
    user_choice: Option<TestKind>,
) -> Result<TestKind, StatError> {
    if target == TargetKind::TimeToEvent && has_treatment {
        return Err(StatError::Unsupported("differential treatment effects on time-to-event targets".into()));
    }
    match user_choice {
        Some(test) => {
            if test.target_kind() == target && test.needs_treatment() == has_treatment {
                Ok(test)
            } else {
                Err(StatError::Incompatible {
                    test,
                    target,
                    treatment: if has_treatment { "with treatment" } else { "without treatment" },
                })
            }
        }
        None => Ok(match (target, has_treatment) {
            (TargetKind::Binary, false) => TestKind::TwoProportionZ,
            (TargetKind::Continuous, false) => TestKind::MannWhitneyU,
            (TargetKind::TimeToEvent, _) => TestKind::LogRank,
            (TargetKind::Binary, true) => TestKind::DiffEffectBinary,
            (TargetKind::Continuous, true) => TestKind::DiffEffectContinuous,
        }),
    }
}
