//! Synthetic datasets with a known subgroup.
//!
//! Features are drawn independently: continuous uniform on (0, 1), nominal
//! and ordinal uniform over their levels. The outcome is `y` and the
//! treatment flag, when there is one, is `trt`.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    Column, DataError, Dataset, Feature, FeatureKind, FeatureSpec, FeatureTable, Target, TargetKind, TargetSpec,
};
use crate::rng;
use crate::search::{AtomForm, SubgroupCriterion};

pub const TARGET_NAME: &str = "y";
pub const TREATMENT_NAME: &str = "trt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorMode {
    /// The outcome mean (or positive probability) moves by the effect size
    /// inside the planted subgroup.
    OutcomeShift,
    /// Half the rows are treated; treatment moves the outcome by the effect
    /// size inside the subgroup and not at all outside it.
    TreatmentInteraction,
    /// Outcome independent of every feature.
    Null,
}

impl FromStr for GeneratorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outcome-shift" => Ok(GeneratorMode::OutcomeShift),
            "treatment-interaction" => Ok(GeneratorMode::TreatmentInteraction),
            "null" => Ok(GeneratorMode::Null),
            _ => Err(format!("unknown mode `{s}` (expected outcome-shift, treatment-interaction or null)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub features: Vec<FeatureSpec>,
    pub planted: Option<SubgroupCriterion>,
    /// Standard deviations for continuous outcomes, probability delta for
    /// binary ones.
    pub effect_size: f64,
    pub mode: GeneratorMode,
    pub outcome: TargetKind,
    /// Positive probability outside the effect, for binary outcomes.
    pub base_rate: f64,
    pub noise_seed: u64,
}

impl GeneratorSpec {
    /// `k` continuous features `x1..xk` with no plant.
    pub fn null(n: usize, k: usize, outcome: TargetKind, noise_seed: u64) -> Self {
        Self {
            n,
            features: continuous_features(k),
            planted: None,
            effect_size: 0.0,
            mode: GeneratorMode::Null,
            outcome,
            base_rate: 0.5,
            noise_seed,
        }
    }

    /// `k` continuous features with `planted` as the true subgroup.
    pub fn planted(
        n: usize,
        k: usize,
        planted: SubgroupCriterion,
        mode: GeneratorMode,
        outcome: TargetKind,
        effect_size: f64,
        noise_seed: u64,
    ) -> Self {
        Self {
            n,
            features: continuous_features(k),
            planted: Some(planted),
            effect_size,
            mode,
            outcome,
            base_rate: 0.3,
            noise_seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.n == 0 {
            return bad("generator needs n >= 1".into());
        }
        if self.outcome == TargetKind::TimeToEvent {
            return bad("generator outcomes are binary or continuous".into());
        }
        for f in &self.features {
            f.validate()?;
        }
        if self.mode == GeneratorMode::Null {
            if self.planted.is_some() {
                return bad("null mode takes no planted subgroup".into());
            }
        } else {
            let Some(planted) = &self.planted else {
                return bad("a planted subgroup is required unless the mode is null".into());
            };
            if !(self.effect_size.is_finite() && self.effect_size > 0.0) {
                return bad("effect size must be positive".into());
            }
            for atom in planted.atoms() {
                let Some(spec) = self.features.iter().find(|f| f.name == atom.feature) else {
                    return bad(format!("planted atom `{atom}` names an unknown feature"));
                };
                let fits = match &atom.form {
                    AtomForm::GreaterThan(_) => spec.kind.is_numeric(),
                    AtomForm::Equals(level) => spec.kind == FeatureKind::Nominal && spec.level_index(level).is_some(),
                };
                if !fits {
                    return bad(format!("planted atom `{atom}` does not fit feature `{}`", spec.name));
                }
            }
        }
        if self.outcome == TargetKind::Binary {
            let top = self.base_rate + if self.mode == GeneratorMode::Null { 0.0 } else { self.effect_size };
            if !(self.base_rate > 0.0 && top < 1.0) {
                return bad(format!(
                    "binary rates must stay inside (0, 1); base {} plus effect reaches {top}",
                    self.base_rate
                ));
            }
        }
        Ok(())
    }
}

pub fn continuous_features(k: usize) -> Vec<FeatureSpec> {
    (1..=k).map(|j| FeatureSpec::continuous(format!("x{j}"))).collect()
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let n = spec.n;
    let features = spec
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let mut rng = rng::stream(spec.noise_seed, "synth:feature", j as u64);
            let column = match f.kind {
                FeatureKind::Continuous => Column::Numeric((0..n).map(|_| rng.random::<f64>()).collect()),
                FeatureKind::Ordinal => {
                    let k = f.levels.len() as u32;
                    Column::Numeric((0..n).map(|_| f64::from(rng.random_range(0..k))).collect())
                }
                FeatureKind::Nominal => {
                    let k = f.levels.len() as u32;
                    Column::Levels((0..n).map(|_| rng.random_range(0..k)).collect())
                }
            };
            Feature::new(f.clone(), column)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = FeatureTable::new(features, n)?;
    let member: Vec<bool> = match &spec.planted {
        Some(c) => {
            let c = c.compile(&table);
            (0..n).map(|r| c.matches(r)).collect()
        }
        None => vec![false; n],
    };
    let treatment: Option<Vec<u8>> = (spec.mode == GeneratorMode::TreatmentInteraction).then(|| {
        let mut rng = rng::stream(spec.noise_seed, "synth:treatment", 0);
        (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect()
    });
    let shift = |r: usize| -> f64 {
        let on = match spec.mode {
            GeneratorMode::Null => false,
            GeneratorMode::OutcomeShift => member[r],
            GeneratorMode::TreatmentInteraction => member[r] && treatment.as_ref().is_some_and(|t| t[r] == 1),
        };
        if on {
            spec.effect_size
        } else {
            0.0
        }
    };
    let mut rng = rng::stream(spec.noise_seed, "synth:outcome", 0);
    let (target_spec, y): (TargetSpec, Vec<f64>) = match spec.outcome {
        TargetKind::Binary => (
            TargetSpec::binary(TARGET_NAME),
            (0..n).map(|r| f64::from(u8::from(rng.random_bool(spec.base_rate + shift(r))))).collect(),
        ),
        _ => (
            TargetSpec::continuous(TARGET_NAME),
            (0..n).map(|r| rng.sample::<f64, _>(StandardNormal) + shift(r)).collect(),
        ),
    };
    Dataset::new(table, Target::new(target_spec, y, None)?, treatment.map(|t| (TREATMENT_NAME.to_string(), t)))
}
