use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{
    Column, ColumnRole, DataError, Dataset, Feature, FeatureKind, FeatureSpec, FeatureTable, Schema, SchemaOverrides,
    Target, TargetKind, TargetSpec, NA_LEVEL, NO_LEVEL,
};

/// What to do with missing cells (empty, `NA`, or `?`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NaPolicy {
    #[default]
    Error,
    DropRows,
    /// Missing nominal cells become the `__NA__` level; rows missing any
    /// other used cell are dropped.
    NaLevel,
}

impl FromStr for NaPolicy {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(NaPolicy::Error),
            "drop-rows" => Ok(NaPolicy::DropRows),
            "na-level" => Ok(NaPolicy::NaLevel),
            other => Err(DataError::Schema(format!("unknown missing-value policy `{other}`"))),
        }
    }
}

impl fmt::Display for NaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NaPolicy::Error => "error",
            NaPolicy::DropRows => "drop-rows",
            NaPolicy::NaLevel => "na-level",
        })
    }
}

pub fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "?")
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    fn read<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut seen = BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(DataError::DuplicateColumn(h.clone()));
            }
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    fn index(&self, name: &str) -> Result<usize, DataError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

fn parse_finite(cell: &str, column: &str, row: usize) -> Result<f64, DataError> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::BadValue {
            column: column.to_string(),
            row: row + 1,
            message: format!("`{cell}` is not a finite number"),
        }),
    }
}

fn parse_flag(cell: &str, column: &str, row: usize) -> Result<u8, DataError> {
    match cell.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(DataError::BadValue {
            column: column.to_string(),
            row: row + 1,
            message: format!("`{cell}` is not 0 or 1"),
        }),
    }
}

pub fn ingest_csv(path: &Path, overrides: &SchemaOverrides, na: NaPolicy) -> Result<Dataset, DataError> {
    ingest_reader(open(path)?, overrides, na)
}

/// Reads a training dataset. Column types are inferred (all cells numeric
/// means continuous, otherwise nominal) unless `overrides` says otherwise.
pub fn ingest_reader<R: Read>(reader: R, overrides: &SchemaOverrides, na: NaPolicy) -> Result<Dataset, DataError> {
    let raw = RawTable::read(reader)?;
    for (name, _) in overrides.columns() {
        raw.index(name)?;
    }
    let (target_name, target_role) = overrides.target().ok_or(DataError::NoTarget)?;
    let ColumnRole::Target { kind: declared_kind, event: event_name, positive } = target_role else {
        unreachable!("target() only returns target roles")
    };
    let target_col = raw.index(target_name)?;
    let event_col = event_name.as_deref().map(|e| raw.index(e)).transpose()?;
    let treatment = overrides.treatment().map(|t| Ok::<_, DataError>((t, raw.index(t)?))).transpose()?;

    // Feature columns in header order with their kinds.
    let mut feature_cols: Vec<(usize, FeatureKind)> = Vec::new();
    for (col, name) in raw.headers.iter().enumerate() {
        if col == target_col || Some(col) == event_col || treatment.is_some_and(|(_, c)| c == col) {
            continue;
        }
        if matches!(overrides.role(name), Some(ColumnRole::Ignore)) {
            continue;
        }
        let kind = match overrides.feature_kind(name) {
            Some(k) => k,
            None => {
                let numeric = (0..raw.rows.len())
                    .map(|r| raw.cell(r, col))
                    .filter(|c| !is_missing(c))
                    .all(|c| c.parse::<f64>().is_ok_and(f64::is_finite));
                if numeric {
                    FeatureKind::Continuous
                } else {
                    FeatureKind::Nominal
                }
            }
        };
        feature_cols.push((col, kind));
    }

    let mut used: Vec<(usize, bool)> = feature_cols.iter().map(|&(c, k)| (c, k == FeatureKind::Nominal)).collect();
    used.push((target_col, false));
    if let Some(c) = event_col {
        used.push((c, false));
    }
    if let Some((_, c)) = treatment {
        used.push((c, false));
    }

    let mut kept = Vec::with_capacity(raw.rows.len());
    'rows: for r in 0..raw.rows.len() {
        for &(c, nominal) in &used {
            if is_missing(raw.cell(r, c)) {
                match na {
                    NaPolicy::Error => {
                        return Err(DataError::MissingValue { column: raw.headers[c].clone(), row: r + 1 })
                    }
                    NaPolicy::NaLevel if nominal => {}
                    _ => continue 'rows,
                }
            }
        }
        kept.push(r);
    }
    if kept.is_empty() {
        return Err(DataError::AllRowsDropped);
    }

    let mut features = Vec::with_capacity(feature_cols.len());
    for &(col, kind) in &feature_cols {
        let name = &raw.headers[col];
        let cells = kept.iter().map(|&r| (r, raw.cell(r, col)));
        let feature = match kind {
            FeatureKind::Continuous => {
                let values = cells.map(|(r, c)| parse_finite(c, name, r)).collect::<Result<Vec<_>, _>>()?;
                Feature::new(FeatureSpec::continuous(name.clone()), Column::Numeric(values))?
            }
            FeatureKind::Ordinal => {
                let Some(ColumnRole::Ordinal(levels)) = overrides.role(name) else {
                    unreachable!("ordinal kind only comes from an override")
                };
                let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let values = cells
                    .map(|(r, c)| {
                        index.get(c).map(|&i| i as f64).ok_or_else(|| DataError::BadValue {
                            column: name.clone(),
                            row: r + 1,
                            message: format!("`{c}` is not a declared ordinal level"),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let spec = FeatureSpec { name: name.clone(), kind, levels: levels.clone() };
                Feature::new(spec, Column::Numeric(values))?
            }
            FeatureKind::Nominal => {
                let cells: Vec<(usize, &str)> = cells.collect();
                let mut levels: Vec<String> = match overrides.role(name) {
                    Some(ColumnRole::Nominal(Some(levels))) => levels.clone(),
                    _ => cells
                        .iter()
                        .filter(|(_, c)| !is_missing(c))
                        .map(|(_, c)| c.to_string())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect(),
                };
                if cells.iter().any(|(_, c)| is_missing(c)) && !levels.iter().any(|l| l == NA_LEVEL) {
                    levels.push(NA_LEVEL.to_string());
                }
                let index: HashMap<&str, u32> =
                    levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
                let values = cells
                    .iter()
                    .map(|&(r, c)| {
                        let key = if is_missing(c) { NA_LEVEL } else { c };
                        index.get(key).copied().ok_or_else(|| DataError::BadValue {
                            column: name.clone(),
                            row: r + 1,
                            message: format!("`{c}` is not a declared level"),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let spec = FeatureSpec { name: name.clone(), kind, levels };
                Feature::new(spec, Column::Levels(values))?
            }
        };
        features.push(feature);
    }
    let table = FeatureTable::new(features, kept.len())?;

    let target_cells: Vec<(usize, &str)> = kept.iter().map(|&r| (r, raw.cell(r, target_col))).collect();
    let kind = match declared_kind {
        Some(k) => *k,
        None => {
            let distinct: BTreeSet<&str> = target_cells.iter().map(|(_, c)| *c).collect();
            if distinct.len() == 2 {
                TargetKind::Binary
            } else if target_cells.iter().all(|(_, c)| c.parse::<f64>().is_ok_and(f64::is_finite)) {
                TargetKind::Continuous
            } else {
                return Err(DataError::Schema(format!("cannot infer the kind of target `{target_name}`; declare it")));
            }
        }
    };
    let target = match kind {
        TargetKind::Binary => {
            let distinct: BTreeSet<&str> = target_cells.iter().map(|(_, c)| *c).collect();
            if distinct.len() != 2 {
                return Err(DataError::BinaryTargetLevels { name: target_name.to_string(), count: distinct.len() });
            }
            let mut it = distinct.into_iter();
            let (lo, hi) = (it.next().unwrap(), it.next().unwrap());
            let (neg, pos) = match positive.as_deref() {
                None => (lo, hi),
                Some(p) if p == hi => (lo, hi),
                Some(p) if p == lo => (hi, lo),
                Some(p) => {
                    return Err(DataError::Schema(format!("positive label `{p}` is not observed in `{target_name}`")))
                }
            };
            let values = target_cells.iter().map(|(_, c)| if *c == pos { 1.0 } else { 0.0 }).collect();
            let spec = TargetSpec {
                name: target_name.to_string(),
                kind,
                event_indicator_name: None,
                labels: Some([neg.to_string(), pos.to_string()]),
            };
            Target::new(spec, values, None)?
        }
        TargetKind::Continuous => {
            let values =
                target_cells.iter().map(|&(r, c)| parse_finite(c, target_name, r)).collect::<Result<Vec<_>, _>>()?;
            Target::new(TargetSpec::continuous(target_name), values, None)?
        }
        TargetKind::TimeToEvent => {
            let (Some(event_name), Some(event_col)) = (event_name, event_col) else {
                return Err(DataError::Schema(format!("time-to-event target `{target_name}` needs an event column")));
            };
            let values =
                target_cells.iter().map(|&(r, c)| parse_finite(c, target_name, r)).collect::<Result<Vec<_>, _>>()?;
            if let Some((i, _)) = values.iter().enumerate().find(|(_, t)| **t < 0.0) {
                return Err(DataError::BadValue {
                    column: target_name.to_string(),
                    row: kept[i] + 1,
                    message: "negative time".into(),
                });
            }
            let events = kept
                .iter()
                .map(|&r| parse_flag(raw.cell(r, event_col), event_name, r))
                .collect::<Result<Vec<_>, _>>()?;
            Target::new(TargetSpec::time_to_event(target_name, event_name.clone()), values, Some(events))?
        }
    };

    let treatment = match treatment {
        Some((name, col)) => {
            let flags = kept.iter().map(|&r| parse_flag(raw.cell(r, col), name, r)).collect::<Result<Vec<_>, _>>()?;
            Some((name.to_string(), flags))
        }
        None => None,
    };
    Dataset::new(table, target, treatment)
}

/// Features (and, when present, target and treatment) read against a
/// trained model's schema. Missing numeric cells become NaN and missing or
/// unseen nominal levels never match an equality test.
#[derive(Clone, Debug)]
pub struct FeatureInput {
    pub table: FeatureTable,
    pub target: Option<Target>,
    pub treatment: Option<Vec<u8>>,
}

pub fn read_feature_table(path: &Path, schema: &Schema) -> Result<FeatureInput, DataError> {
    read_feature_table_from(open(path)?, schema)
}

pub fn read_feature_table_from<R: Read>(reader: R, schema: &Schema) -> Result<FeatureInput, DataError> {
    let raw = RawTable::read(reader)?;
    let n = raw.rows.len();
    let mut features = Vec::with_capacity(schema.features.len());
    for spec in &schema.features {
        let col = raw.headers.iter().position(|h| *h == spec.name);
        let cell = |r: usize| col.map_or("", |c| raw.cell(r, c));
        let feature = match spec.kind {
            FeatureKind::Continuous => {
                let values = (0..n)
                    .map(|r| {
                        let c = cell(r);
                        if is_missing(c) {
                            Ok(f64::NAN)
                        } else {
                            parse_finite(c, &spec.name, r)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Feature::new(spec.clone(), Column::Numeric(values))?
            }
            FeatureKind::Ordinal => {
                let values = (0..n)
                    .map(|r| {
                        let c = cell(r);
                        if is_missing(c) {
                            return Ok(f64::NAN);
                        }
                        spec.level_index(c).map(f64::from).ok_or_else(|| DataError::BadValue {
                            column: spec.name.clone(),
                            row: r + 1,
                            message: format!("`{c}` is not a declared ordinal level"),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Feature::new(spec.clone(), Column::Numeric(values))?
            }
            FeatureKind::Nominal => {
                let mut spec = spec.clone();
                let na_index = spec.level_index(NA_LEVEL).unwrap_or(NO_LEVEL);
                let mut values = Vec::with_capacity(n);
                for r in 0..n {
                    let c = cell(r);
                    if is_missing(c) {
                        values.push(na_index);
                        continue;
                    }
                    let idx = match spec.level_index(c) {
                        Some(i) => i,
                        None => {
                            spec.levels.push(c.to_string());
                            (spec.levels.len() - 1) as u32
                        }
                    };
                    values.push(idx);
                }
                Feature::new(spec, Column::Levels(values))?
            }
        };
        features.push(feature);
    }
    let table = FeatureTable::new(features, n)?;

    let target = match raw.headers.iter().position(|h| *h == schema.target.name) {
        None => None,
        Some(col) => {
            let spec = &schema.target;
            let name = &spec.name;
            let cell = |r: usize| -> Result<&str, DataError> {
                let c = raw.cell(r, col);
                if is_missing(c) {
                    Err(DataError::MissingValue { column: name.clone(), row: r + 1 })
                } else {
                    Ok(c)
                }
            };
            let values = (0..n)
                .map(|r| {
                    let c = cell(r)?;
                    match spec.kind {
                        TargetKind::Binary => {
                            let labels = spec.labels.clone().unwrap_or(["0".into(), "1".into()]);
                            if c == labels[1] {
                                Ok(1.0)
                            } else if c == labels[0] {
                                Ok(0.0)
                            } else {
                                Err(DataError::BadValue {
                                    column: name.clone(),
                                    row: r + 1,
                                    message: format!("`{c}` is not a known label"),
                                })
                            }
                        }
                        _ => parse_finite(c, name, r),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let events = match (&spec.kind, &spec.event_indicator_name) {
                (TargetKind::TimeToEvent, Some(ev)) => {
                    let ec = raw.index(ev)?;
                    Some((0..n).map(|r| parse_flag(raw.cell(r, ec), ev, r)).collect::<Result<Vec<_>, _>>()?)
                }
                _ => None,
            };
            Some(Target::new(spec.clone(), values, events)?)
        }
    };

    let treatment = match schema.treatment.as_deref().and_then(|t| raw.index(t).ok().map(|c| (t, c))) {
        Some((name, col)) => {
            Some((0..n).map(|r| parse_flag(raw.cell(r, col), name, r)).collect::<Result<Vec<_>, _>>()?)
        }
        None => None,
    };
    Ok(FeatureInput { table, target, treatment })
}

/// Writes `dataset` as CSV; reading it back with [`schema_text`] overrides
/// reproduces the dataset exactly.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let target = dataset.target();
    let mut header: Vec<&str> = dataset.features().iter().map(|f| f.name()).collect();
    header.push(&target.spec.name);
    if let Some(ev) = &target.spec.event_indicator_name {
        header.push(ev);
    }
    if let Some(t) = dataset.treatment_name() {
        header.push(t);
    }
    w.write_record(&header)?;
    let labels = target.spec.labels.clone().unwrap_or(["0".into(), "1".into()]);
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..dataset.n() {
        record.clear();
        for f in dataset.features() {
            record.push(match (&f.column, f.kind()) {
                (Column::Numeric(v), FeatureKind::Ordinal) => f.spec.levels[v[r] as usize].clone(),
                (Column::Numeric(v), _) => v[r].to_string(),
                (Column::Levels(v), _) => f.spec.levels[v[r] as usize].clone(),
            });
        }
        record.push(match target.kind() {
            TargetKind::Binary => labels[target.values[r] as usize].clone(),
            _ => target.values[r].to_string(),
        });
        if let Some(ev) = &target.events {
            record.push(ev[r].to_string());
        }
        if let Some(t) = dataset.treatment() {
            record.push(t[r].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| DataError::Io { path: "<csv output>".into(), source })?;
    Ok(())
}

/// Override text that pins every column of `schema` exactly.
pub fn schema_text(schema: &Schema) -> String {
    let mut out = String::new();
    for f in &schema.features {
        let role = match f.kind {
            FeatureKind::Continuous => "continuous".to_string(),
            FeatureKind::Nominal => format!("nominal:{}", f.levels.join(",")),
            FeatureKind::Ordinal => format!("ordinal:{}", f.levels.join("<")),
        };
        out.push_str(&format!("{}: {role}\n", f.name));
    }
    let t = &schema.target;
    let role = match t.kind {
        TargetKind::Binary => match &t.labels {
            Some([_, pos]) => format!("target:binary:{pos}"),
            None => "target:binary".to_string(),
        },
        TargetKind::Continuous => "target:continuous".to_string(),
        TargetKind::TimeToEvent => {
            format!("target:time-to-event:{}", t.event_indicator_name.as_deref().unwrap_or_default())
        }
    };
    out.push_str(&format!("{}: {role}\n", t.name));
    if let Some(trt) = &schema.treatment {
        out.push_str(&format!("{trt}: treatment\n"));
    }
    out
}
