use std::collections::BTreeMap;
use std::path::Path;

use super::{DataError, FeatureKind, TargetKind};

/// How one CSV column is read.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnRole {
    Continuous,
    /// Optional explicit level list; inferred levels are sorted otherwise.
    Nominal(Option<Vec<String>>),
    /// Levels in ascending order.
    Ordinal(Vec<String>),
    Target {
        kind: Option<TargetKind>,
        event: Option<String>,
        positive: Option<String>,
    },
    Treatment,
    Ignore,
}

/// Per-column overrides of the inferred schema.
///
/// Text form, one column per line (`#` starts a comment):
///
/// ```text
/// age: continuous
/// color: nominal
/// grade: ordinal:low<mid<high
/// income: target:binary:>50K
/// time: target:time-to-event:status
/// arm: treatment
/// row_id: ignore
/// ```
///
/// `nominal:a,b,c` fixes the level order of a nominal column.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SchemaOverrides {
    roles: BTreeMap<String, ColumnRole>,
}

impl SchemaOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut out = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, spec) = line
                .split_once(':')
                .ok_or_else(|| DataError::Schema(format!("line {}: expected `column: role`", lineno + 1)))?;
            let role = parse_role(spec.trim()).map_err(|m| DataError::Schema(format!("line {}: {m}", lineno + 1)))?;
            out.set(name.trim(), role)?;
        }
        Ok(out)
    }

    /// Sets a role; a second target or treatment column is an error.
    pub fn set(&mut self, column: &str, role: ColumnRole) -> Result<(), DataError> {
        let clash = |pred: fn(&ColumnRole) -> bool| self.roles.iter().any(|(name, r)| name != column && pred(r));
        if matches!(role, ColumnRole::Target { .. }) && clash(|r| matches!(r, ColumnRole::Target { .. })) {
            return Err(DataError::Schema(format!("second target column `{column}`")));
        }
        if matches!(role, ColumnRole::Treatment) && clash(|r| matches!(r, ColumnRole::Treatment)) {
            return Err(DataError::Schema(format!("second treatment column `{column}`")));
        }
        self.roles.insert(column.to_string(), role);
        Ok(())
    }

    /// Marks `column` as the target, keeping any kind already declared for it.
    pub fn set_target(&mut self, column: &str, kind: Option<TargetKind>) -> Result<(), DataError> {
        let (mut event, mut positive, mut declared) = (None, None, None);
        if let Some(ColumnRole::Target { kind: k, event: e, positive: p }) = self.roles.get(column) {
            declared = *k;
            event = e.clone();
            positive = p.clone();
        }
        let stale: Vec<String> = self
            .roles
            .iter()
            .filter(|(n, r)| n.as_str() != column && matches!(r, ColumnRole::Target { .. }))
            .map(|(n, _)| n.clone())
            .collect();
        for n in stale {
            self.roles.remove(&n);
        }
        self.set(column, ColumnRole::Target { kind: kind.or(declared), event, positive })
    }

    pub fn role(&self, column: &str) -> Option<&ColumnRole> {
        self.roles.get(column)
    }

    pub fn target(&self) -> Option<(&str, &ColumnRole)> {
        self.roles.iter().find(|(_, r)| matches!(r, ColumnRole::Target { .. })).map(|(n, r)| (n.as_str(), r))
    }

    pub fn treatment(&self) -> Option<&str> {
        self.roles.iter().find(|(_, r)| matches!(r, ColumnRole::Treatment)).map(|(n, _)| n.as_str())
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &ColumnRole)> {
        self.roles.iter().map(|(n, r)| (n.as_str(), r))
    }

    /// The feature kind forced for `column`, if any.
    pub fn feature_kind(&self, column: &str) -> Option<FeatureKind> {
        match self.roles.get(column)? {
            ColumnRole::Continuous => Some(FeatureKind::Continuous),
            ColumnRole::Nominal(_) => Some(FeatureKind::Nominal),
            ColumnRole::Ordinal(_) => Some(FeatureKind::Ordinal),
            _ => None,
        }
    }
}

fn parse_role(spec: &str) -> Result<ColumnRole, String> {
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h.trim(), Some(r.trim())),
        None => (spec, None),
    };
    match (head, rest) {
        ("continuous", None) => Ok(ColumnRole::Continuous),
        ("nominal", None) => Ok(ColumnRole::Nominal(None)),
        ("nominal", Some(levels)) => {
            let levels: Vec<String> = levels.split(',').map(|l| l.trim().to_string()).collect();
            if levels.iter().any(String::is_empty) {
                return Err("empty nominal level".into());
            }
            Ok(ColumnRole::Nominal(Some(levels)))
        }
        ("ordinal", Some(levels)) => {
            let levels: Vec<String> = levels.split('<').map(|l| l.trim().to_string()).collect();
            if levels.iter().any(String::is_empty) {
                return Err("empty ordinal level".into());
            }
            Ok(ColumnRole::Ordinal(levels))
        }
        ("ordinal", None) => Err("ordinal columns need a level order, e.g. `ordinal:lo<mid<hi`".into()),
        ("target", None) => Ok(ColumnRole::Target { kind: None, event: None, positive: None }),
        ("target", Some(rest)) => {
            let (kind, arg) = match rest.split_once(':') {
                Some((k, a)) => (k.trim(), Some(a.trim().to_string())),
                None => (rest, None),
            };
            let kind: TargetKind = kind.parse().map_err(|e: DataError| e.to_string())?;
            match kind {
                TargetKind::TimeToEvent => {
                    let event = arg.ok_or("time-to-event targets need `target:time-to-event:<event column>`")?;
                    Ok(ColumnRole::Target { kind: Some(kind), event: Some(event), positive: None })
                }
                TargetKind::Binary => Ok(ColumnRole::Target { kind: Some(kind), event: None, positive: arg }),
                TargetKind::Continuous if arg.is_none() => {
                    Ok(ColumnRole::Target { kind: Some(kind), event: None, positive: None })
                }
                TargetKind::Continuous => Err("continuous targets take no argument".into()),
            }
        }
        ("treatment", None) => Ok(ColumnRole::Treatment),
        ("ignore", None) => Ok(ColumnRole::Ignore),
        _ => Err(format!("unknown column role `{spec}`")),
    }
}
