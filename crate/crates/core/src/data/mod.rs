//! Typed in-memory datasets.
//!
//! A [`Dataset`] is a [`FeatureTable`] plus a [`Target`] and an optional
//! binary treatment column. Continuous and ordinal features are stored as
//! numbers (ordinal features as their level index), nominal features as level
//! indices into the feature's level list.

mod cutoffs;
mod ingest;
mod schema;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cutoffs::{compute_cutoffs, CutoffSet, MAX_CUTOFFS};
pub use ingest::{
    ingest_csv, ingest_reader, is_missing, read_feature_table, read_feature_table_from, schema_text, write_csv,
    FeatureInput, NaPolicy,
};
pub use schema::{ColumnRole, SchemaOverrides};

/// Reserved level assigned to missing nominal cells under [`NaPolicy::NaLevel`].
pub const NA_LEVEL: &str = "__NA__";

/// Level index used for a nominal cell that has no level (prediction inputs only).
pub const NO_LEVEL: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("no target column given")]
    NoTarget,
    #[error("binary target `{name}` has {count} observed values")]
    BinaryTargetLevels { name: String, count: usize },
    #[error("missing value in column `{column}` at data row {row}")]
    MissingValue { column: String, row: usize },
    #[error("column `{column}`, data row {row}: {message}")]
    BadValue { column: String, row: usize, message: String },
    #[error("all rows were dropped by the missing-value policy")]
    AllRowsDropped,
    #[error("schema: {0}")]
    Schema(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Continuous,
    Nominal,
    Ordinal,
}

impl FeatureKind {
    /// Continuous and ordinal features are split with `>` atoms.
    pub fn is_numeric(self) -> bool {
        !matches!(self, FeatureKind::Nominal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Continuous, levels: Vec::new() }
    }

    pub fn nominal(name: impl Into<String>, levels: &[&str]) -> Self {
        Self { name: name.into(), kind: FeatureKind::Nominal, levels: levels.iter().map(|s| s.to_string()).collect() }
    }

    pub fn ordinal(name: impl Into<String>, levels: &[&str]) -> Self {
        Self { name: name.into(), kind: FeatureKind::Ordinal, levels: levels.iter().map(|s| s.to_string()).collect() }
    }

    pub fn level_index(&self, level: &str) -> Option<u32> {
        self.levels.iter().position(|l| l == level).map(|i| i as u32)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        match self.kind {
            FeatureKind::Continuous if !self.levels.is_empty() => {
                Err(DataError::Invalid(format!("continuous feature `{}` lists levels", self.name)))
            }
            FeatureKind::Nominal | FeatureKind::Ordinal => {
                if self.levels.is_empty() {
                    return Err(DataError::Invalid(format!("feature `{}` has no levels", self.name)));
                }
                let distinct: HashSet<&String> = self.levels.iter().collect();
                if distinct.len() != self.levels.len() {
                    return Err(DataError::Invalid(format!("feature `{}` repeats a level", self.name)));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    /// Continuous values, or ordinal level indices stored as `f64`.
    Numeric(Vec<f64>),
    /// Nominal level indices; [`NO_LEVEL`] marks an absent level.
    Levels(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Levels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Levels(v) => Column::Levels(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub spec: FeatureSpec,
    pub column: Column,
}

impl Feature {
    pub fn new(spec: FeatureSpec, column: Column) -> Result<Self, DataError> {
        spec.validate()?;
        match (&column, spec.kind) {
            (Column::Numeric(values), FeatureKind::Continuous) => {
                let _ = values;
            }
            (Column::Numeric(values), FeatureKind::Ordinal) => {
                let k = spec.levels.len() as f64;
                if let Some(bad) = values.iter().find(|v| !(v.is_nan() || (v.fract() == 0.0 && **v >= 0.0 && **v < k)))
                {
                    return Err(DataError::Invalid(format!(
                        "ordinal feature `{}` has code {bad} outside its {} levels",
                        spec.name,
                        spec.levels.len()
                    )));
                }
            }
            (Column::Levels(values), FeatureKind::Nominal) => {
                let k = spec.levels.len() as u32;
                if values.iter().any(|&v| v != NO_LEVEL && v >= k) {
                    return Err(DataError::Invalid(format!(
                        "nominal feature `{}` has a level index out of range",
                        spec.name
                    )));
                }
            }
            _ => {
                return Err(DataError::Invalid(format!(
                    "feature `{}` column storage does not match kind {:?}",
                    spec.name, spec.kind
                )))
            }
        }
        Ok(Self { spec, column })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> FeatureKind {
        self.spec.kind
    }

    pub fn numeric(&self) -> Option<&[f64]> {
        match &self.column {
            Column::Numeric(v) => Some(v),
            Column::Levels(_) => None,
        }
    }

    pub fn levels(&self) -> Option<&[u32]> {
        match &self.column {
            Column::Levels(v) => Some(v),
            Column::Numeric(_) => None,
        }
    }
}

/// Feature columns of equal length with unique names.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    features: Vec<Feature>,
    n: usize,
}

impl FeatureTable {
    pub fn new(features: Vec<Feature>, n: usize) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name().to_string()) {
                return Err(DataError::DuplicateColumn(f.name().to_string()));
            }
            if f.column.len() != n {
                return Err(DataError::Invalid(format!(
                    "feature `{}` has {} values, expected {n}",
                    f.name(),
                    f.column.len()
                )));
            }
        }
        Ok(Self { features, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<(usize, &Feature)> {
        self.features.iter().enumerate().find(|(_, f)| f.name() == name)
    }

    pub fn specs(&self) -> Vec<FeatureSpec> {
        self.features.iter().map(|f| f.spec.clone()).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            features: self
                .features
                .iter()
                .map(|f| Feature { spec: f.spec.clone(), column: f.column.subset(rows) })
                .collect(),
            n: rows.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Binary,
    Continuous,
    TimeToEvent,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Binary => "binary",
            TargetKind::Continuous => "continuous",
            TargetKind::TimeToEvent => "time-to-event",
        })
    }
}

impl std::str::FromStr for TargetKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(TargetKind::Binary),
            "continuous" => Ok(TargetKind::Continuous),
            "time-to-event" | "survival" => Ok(TargetKind::TimeToEvent),
            other => Err(DataError::Schema(format!("unknown target kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub kind: TargetKind,
    /// Event indicator column, time-to-event targets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_indicator_name: Option<String>,
    /// Raw labels `[negative, positive]` of a binary target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<[String; 2]>,
}

impl TargetSpec {
    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: TargetKind::Binary,
            event_indicator_name: None,
            labels: Some(["0".into(), "1".into()]),
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: TargetKind::Continuous, event_indicator_name: None, labels: None }
    }

    pub fn time_to_event(name: impl Into<String>, event: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: TargetKind::TimeToEvent,
            event_indicator_name: Some(event.into()),
            labels: None,
        }
    }
}

/// Outcome column. Binary targets hold 0.0/1.0; time-to-event targets hold
/// times in `values` and the event indicator in `events`.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub spec: TargetSpec,
    pub values: Vec<f64>,
    pub events: Option<Vec<u8>>,
}

impl Target {
    pub fn new(spec: TargetSpec, values: Vec<f64>, events: Option<Vec<u8>>) -> Result<Self, DataError> {
        let name = &spec.name;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!("target `{name}` has non-finite values")));
        }
        match spec.kind {
            TargetKind::Binary => {
                if values.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(DataError::Invalid(format!("binary target `{name}` must be coded 0/1")));
                }
                if events.is_some() {
                    return Err(DataError::Invalid(format!("target `{name}` is not time-to-event")));
                }
            }
            TargetKind::Continuous => {
                if events.is_some() {
                    return Err(DataError::Invalid(format!("target `{name}` is not time-to-event")));
                }
            }
            TargetKind::TimeToEvent => {
                let ev = events.as_ref().ok_or_else(|| {
                    DataError::Invalid(format!("time-to-event target `{name}` lacks event indicators"))
                })?;
                if ev.len() != values.len() || ev.iter().any(|&e| e > 1) {
                    return Err(DataError::Invalid(format!(
                        "event indicator of `{name}` must be 0/1 with one entry per row"
                    )));
                }
                if values.iter().any(|&t| t < 0.0) {
                    return Err(DataError::Invalid(format!("negative time in `{name}`")));
                }
            }
        }
        Ok(Self { spec, values, events })
    }

    pub fn kind(&self) -> TargetKind {
        self.spec.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn event(&self, row: usize) -> bool {
        self.events.as_ref().is_some_and(|e| e[row] == 1)
    }

    fn subset(&self, rows: &[usize]) -> Target {
        Target {
            spec: self.spec.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            events: self.events.as_ref().map(|e| rows.iter().map(|&r| e[r]).collect()),
        }
    }
}

/// Column types of a dataset, stored alongside trained models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
}

impl Schema {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    table: FeatureTable,
    target: Target,
    treatment: Option<(String, Vec<u8>)>,
}

impl Dataset {
    pub fn new(table: FeatureTable, target: Target, treatment: Option<(String, Vec<u8>)>) -> Result<Self, DataError> {
        let n = table.n();
        if target.len() != n {
            return Err(DataError::Invalid(format!("target has {} values, features have {n}", target.len())));
        }
        let mut names: HashSet<&str> = table.features().iter().map(|f| f.name()).collect();
        if !names.insert(&target.spec.name) {
            return Err(DataError::DuplicateColumn(target.spec.name.clone()));
        }
        if let Some(ev) = &target.spec.event_indicator_name {
            if !names.insert(ev) {
                return Err(DataError::DuplicateColumn(ev.clone()));
            }
        }
        if let Some((name, trt)) = &treatment {
            if !names.insert(name) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
            if trt.len() != n {
                return Err(DataError::Invalid(format!("treatment `{name}` length mismatch")));
            }
            if trt.iter().any(|&t| t > 1) {
                return Err(DataError::Invalid(format!("treatment `{name}` must be 0/1")));
            }
            if n > 0 && !(trt.contains(&0) && trt.contains(&1)) {
                return Err(DataError::Invalid(format!("treatment `{name}` must contain both 0 and 1")));
            }
        }
        if table.features().iter().any(|f| {
            f.numeric().is_some_and(|v| v.iter().any(|x| !x.is_finite()))
                || f.levels().is_some_and(|v| v.contains(&NO_LEVEL))
        }) {
            return Err(DataError::Invalid("training features contain missing values".into()));
        }
        Ok(Self { table, target, treatment })
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    pub fn table(&self) -> &FeatureTable {
        &self.table
    }

    pub fn features(&self) -> &[Feature] {
        self.table.features()
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn treatment(&self) -> Option<&[u8]> {
        self.treatment.as_ref().map(|(_, t)| t.as_slice())
    }

    pub fn treatment_name(&self) -> Option<&str> {
        self.treatment.as_ref().map(|(n, _)| n.as_str())
    }

    pub fn schema(&self) -> Schema {
        Schema {
            features: self.table.specs(),
            target: self.target.spec.clone(),
            treatment: self.treatment_name().map(str::to_string),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            table: self.table.subset(rows),
            target: self.target.subset(rows),
            treatment: self.treatment.as_ref().map(|(n, t)| (n.clone(), rows.iter().map(|&r| t[r]).collect())),
        }
    }

    /// True when the rows carry no usable outcome contrast: a constant outcome,
    /// no events, or (with a treatment column) an empty arm.
    pub fn is_target_degenerate(&self, rows: &[usize]) -> bool {
        let Some(&first) = rows.first() else {
            return true;
        };
        if let Some(trt) = self.treatment() {
            let treated = rows.iter().filter(|&&r| trt[r] == 1).count();
            if treated == 0 || treated == rows.len() {
                return true;
            }
        }
        match self.target.kind() {
            TargetKind::TimeToEvent => !rows.iter().any(|&r| self.target.event(r)),
            _ => {
                let y0 = self.target.values[first];
                rows.iter().all(|&r| self.target.values[r] == y0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Feature::new(FeatureSpec::continuous("x"), Column::Numeric(vec![1.0, 2.0, 3.0])).unwrap();
        let c = Feature::new(FeatureSpec::nominal("c", &["a", "b"]), Column::Levels(vec![0, 1, 1])).unwrap();
        let table = FeatureTable::new(vec![x, c], 3).unwrap();
        let target = Target::new(TargetSpec::binary("y"), vec![0.0, 1.0, 1.0], None).unwrap();
        Dataset::new(table, target, None).unwrap()
    }

    #[test]
    fn subset_keeps_schema() {
        let d = tiny();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.n(), 2);
        assert_eq!(s.schema(), d.schema());
        assert_eq!(s.target().values, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_name_clash_with_target() {
        let x = Feature::new(FeatureSpec::continuous("y"), Column::Numeric(vec![1.0])).unwrap();
        let table = FeatureTable::new(vec![x], 1).unwrap();
        let target = Target::new(TargetSpec::continuous("y"), vec![1.0], None).unwrap();
        assert!(matches!(Dataset::new(table, target, None), Err(DataError::DuplicateColumn(_))));
    }

    #[test]
    fn treatment_needs_both_arms() {
        let x = Feature::new(FeatureSpec::continuous("x"), Column::Numeric(vec![1.0, 2.0])).unwrap();
        let table = FeatureTable::new(vec![x], 2).unwrap();
        let target = Target::new(TargetSpec::continuous("y"), vec![1.0, 2.0], None).unwrap();
        let err = Dataset::new(table, target, Some(("trt".into(), vec![1, 1]))).unwrap_err();
        assert!(err.to_string().contains("both 0 and 1"));
    }

    #[test]
    fn degenerate_targets() {
        let d = tiny();
        assert!(d.is_target_degenerate(&[1, 2]));
        assert!(!d.is_target_degenerate(&[0, 1]));
    }

    #[test]
    fn fingerprint_tracks_schema() {
        let d = tiny();
        let mut other = d.schema();
        assert_eq!(other.fingerprint(), d.schema().fingerprint());
        other.features[1].levels.push("z".into());
        assert_ne!(other.fingerprint(), d.schema().fingerprint());
    }

    #[test]
    fn ordinal_codes_checked() {
        let spec = FeatureSpec::ordinal("o", &["lo", "hi"]);
        assert!(Feature::new(spec.clone(), Column::Numeric(vec![0.0, 1.0])).is_ok());
        assert!(Feature::new(spec, Column::Numeric(vec![2.0])).is_err());
    }
}
