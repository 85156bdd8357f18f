//! Subgroup criteria and the exhaustive best-subgroup search.
//!
//! A criterion is a conjunction of one to three atoms over distinct features:
//! `feature>cutoff` for continuous and ordinal features (ordinal cutoffs are
//! level indices) and `feature==level` for nominal features. Candidates are
//! enumerated in a fixed order (atom count, then feature declaration order,
//! then ascending cutoff or level order) and the first candidate with the
//! largest |z| wins.

pub(crate) mod scorer;

use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{compute_cutoffs, Column, Dataset, FeatureTable};
use crate::stats::{StatError, TestKind, ZScore};
pub(crate) use scorer::PartitionScorer;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("no usable subgroup")]
    NoSubgroup,
    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),
    #[error("search depth must be 1, 2 or 3, got {0}")]
    InvalidDepth(u8),
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Maximum number of atoms in a candidate criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SearchDepth(u8);

impl SearchDepth {
    pub const ONE: SearchDepth = SearchDepth(1);

    pub fn new(depth: u8) -> Result<Self, SearchError> {
        if (1..=3).contains(&depth) {
            Ok(Self(depth))
        } else {
            Err(SearchError::InvalidDepth(depth))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl Default for SearchDepth {
    fn default() -> Self {
        Self::ONE
    }
}

impl TryFrom<u8> for SearchDepth {
    type Error = SearchError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<SearchDepth> for u8 {
    fn from(d: SearchDepth) -> u8 {
        d.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AtomForm {
    GreaterThan(f64),
    Equals(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub feature: String,
    pub form: AtomForm,
}

impl Atom {
    pub fn greater_than(feature: impl Into<String>, cutoff: f64) -> Self {
        Self { feature: feature.into(), form: AtomForm::GreaterThan(cutoff) }
    }

    pub fn equals(feature: impl Into<String>, level: impl Into<String>) -> Self {
        Self { feature: feature.into(), form: AtomForm::Equals(level.into()) }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            AtomForm::GreaterThan(c) => write!(f, "{}>{}", self.feature, c),
            AtomForm::Equals(level) => write!(f, "{}=={}", self.feature, level),
        }
    }
}

impl FromStr for Atom {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SearchError::InvalidCriterion(format!("cannot parse atom `{s}`"));
        if let Some((feature, level)) = s.split_once("==") {
            if feature.is_empty() || level.is_empty() {
                return Err(bad());
            }
            return Ok(Atom::equals(feature, level));
        }
        let (feature, cutoff) = s.rsplit_once('>').ok_or_else(bad)?;
        let cutoff: f64 = cutoff.parse().map_err(|_| bad())?;
        if feature.is_empty() || !cutoff.is_finite() {
            return Err(bad());
        }
        Ok(Atom::greater_than(feature, cutoff))
    }
}

/// Conjunction of 1-3 atoms on distinct features.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupCriterion {
    atoms: Vec<Atom>,
}

impl SubgroupCriterion {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, SearchError> {
        if atoms.is_empty() || atoms.len() > 3 {
            return Err(SearchError::InvalidCriterion(format!("{} atoms; expected 1 to 3", atoms.len())));
        }
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|b| b.feature == a.feature) {
                return Err(SearchError::InvalidCriterion(format!("feature `{}` appears twice", a.feature)));
            }
        }
        Ok(Self { atoms })
    }

    pub fn single(atom: Atom) -> Self {
        Self { atoms: vec![atom] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn compile<'a>(&self, table: &'a FeatureTable) -> CompiledCriterion<'a> {
        CompiledCriterion { atoms: self.atoms.iter().map(|a| CompiledAtom::new(a, table)).collect() }
    }
}

impl fmt::Display for SubgroupCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for SubgroupCriterion {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let atoms = s.split(" & ").map(|a| a.trim().parse()).collect::<Result<Vec<Atom>, _>>()?;
        Self::new(atoms)
    }
}

enum CompiledAtom<'a> {
    Greater(&'a [f64], f64),
    Equals(&'a [u32], u32),
    Never,
}

impl<'a> CompiledAtom<'a> {
    fn new(atom: &Atom, table: &'a FeatureTable) -> Self {
        let Some((_, feature)) = table.feature(&atom.feature) else {
            return CompiledAtom::Never;
        };
        match (&atom.form, &feature.column) {
            (AtomForm::GreaterThan(c), Column::Numeric(values)) => CompiledAtom::Greater(values, *c),
            (AtomForm::Equals(level), Column::Levels(values)) => match feature.spec.level_index(level) {
                Some(idx) => CompiledAtom::Equals(values, idx),
                None => CompiledAtom::Never,
            },
            _ => CompiledAtom::Never,
        }
    }

    fn matches(&self, row: usize) -> bool {
        match self {
            // NaN (missing) compares false
            CompiledAtom::Greater(values, c) => values[row] > *c,
            CompiledAtom::Equals(values, idx) => values[row] == *idx,
            CompiledAtom::Never => false,
        }
    }
}

/// A criterion resolved against one table. Unknown features, unseen levels
/// and missing values make the atom false.
pub struct CompiledCriterion<'a> {
    atoms: Vec<CompiledAtom<'a>>,
}

impl CompiledCriterion<'_> {
    pub fn matches(&self, row: usize) -> bool {
        self.atoms.iter().all(|a| a.matches(row))
    }
}

/// Best criterion found on training data with its (signed) score.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupModel {
    pub criterion: SubgroupCriterion,
    pub train_score: ZScore,
}

/// Subgroup membership of every row of `table`.
pub fn apply_model(criterion: &SubgroupCriterion, table: &FeatureTable) -> Vec<bool> {
    let c = criterion.compile(table);
    (0..table.n()).map(|r| c.matches(r)).collect()
}

struct AtomGroup {
    atoms: Vec<(Atom, FixedBitSet)>,
}

/// All atoms available on a set of rows, grouped by feature, with their
/// membership bitsets over row positions.
pub(crate) struct CandidateSpace {
    groups: Vec<AtomGroup>,
    m: usize,
}

impl CandidateSpace {
    pub fn build(table: &FeatureTable, rows: &[usize]) -> Self {
        let m = rows.len();
        let mut groups = Vec::new();
        for feature in table.features() {
            let mut atoms = Vec::new();
            match &feature.column {
                Column::Numeric(values) => {
                    let local: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
                    for cut in compute_cutoffs(&local) {
                        let mut bits = FixedBitSet::with_capacity(m);
                        for (i, v) in local.iter().enumerate() {
                            if *v > cut {
                                bits.insert(i);
                            }
                        }
                        atoms.push((Atom::greater_than(feature.name(), cut), bits));
                    }
                }
                Column::Levels(values) => {
                    for (idx, level) in feature.spec.levels.iter().enumerate() {
                        let mut bits = FixedBitSet::with_capacity(m);
                        for (i, &r) in rows.iter().enumerate() {
                            if values[r] == idx as u32 {
                                bits.insert(i);
                            }
                        }
                        atoms.push((Atom::equals(feature.name(), level.clone()), bits));
                    }
                }
            }
            if !atoms.is_empty() {
                groups.push(AtomGroup { atoms });
            }
        }
        Self { groups, m }
    }

    fn combos(&self, k: usize) -> Vec<Vec<usize>> {
        let g = self.groups.len();
        let mut out = Vec::new();
        match k {
            1 => (0..g).for_each(|a| out.push(vec![a])),
            2 => {
                for a in 0..g {
                    for b in a + 1..g {
                        out.push(vec![a, b]);
                    }
                }
            }
            3 => {
                for a in 0..g {
                    for b in a + 1..g {
                        for c in b + 1..g {
                            out.push(vec![a, b, c]);
                        }
                    }
                }
            }
            _ => unreachable!("search depth is at most 3"),
        }
        out
    }

    /// Calls `f(atom indices, membership)` for every atom combination of the
    /// feature groups in `combo`, in enumeration order. Stops when `f`
    /// returns false; returns whether it ran to completion.
    fn visit(&self, combo: &[usize], f: &mut dyn FnMut(&[usize], &FixedBitSet) -> bool) -> bool {
        let group = |i: usize| &self.groups[combo[i]].atoms;
        match combo.len() {
            1 => {
                for (a, (_, bits)) in group(0).iter().enumerate() {
                    if !f(&[a], bits) {
                        return false;
                    }
                }
            }
            2 => {
                let mut buf = FixedBitSet::with_capacity(self.m);
                for (a, (_, ba)) in group(0).iter().enumerate() {
                    for (b, (_, bb)) in group(1).iter().enumerate() {
                        buf.clone_from(ba);
                        buf.intersect_with(bb);
                        if !f(&[a, b], &buf) {
                            return false;
                        }
                    }
                }
            }
            3 => {
                let mut ab = FixedBitSet::with_capacity(self.m);
                let mut buf = FixedBitSet::with_capacity(self.m);
                for (a, (_, ba)) in group(0).iter().enumerate() {
                    for (b, (_, bb)) in group(1).iter().enumerate() {
                        ab.clone_from(ba);
                        ab.intersect_with(bb);
                        for (c, (_, bc)) in group(2).iter().enumerate() {
                            buf.clone_from(&ab);
                            buf.intersect_with(bc);
                            if !f(&[a, b, c], &buf) {
                                return false;
                            }
                        }
                    }
                }
            }
            _ => unreachable!("search depth is at most 3"),
        }
        true
    }

    fn criterion(&self, combo: &[usize], atoms: &[usize]) -> SubgroupCriterion {
        SubgroupCriterion { atoms: combo.iter().zip(atoms).map(|(&g, &a)| self.groups[g].atoms[a].0.clone()).collect() }
    }

    fn fits(&self, members: &FixedBitSet, min_side: usize) -> bool {
        let k = members.count_ones(..);
        k >= min_side && self.m - k >= min_side
    }

    pub fn any_candidate(&self, depth: SearchDepth, min_side: usize) -> bool {
        (1..=depth.get())
            .any(|k| self.combos(k).iter().any(|combo| !self.visit(combo, &mut |_, bits| !self.fits(bits, min_side))))
    }

    pub fn criteria(&self, depth: SearchDepth, min_side: usize) -> Vec<SubgroupCriterion> {
        let mut out = Vec::new();
        for k in 1..=depth.get() {
            for combo in self.combos(k) {
                self.visit(&combo, &mut |atoms, bits| {
                    if self.fits(bits, min_side) {
                        out.push(self.criterion(&combo, atoms));
                    }
                    true
                });
            }
        }
        out
    }

    pub fn best(&self, scorer: &PartitionScorer, depth: SearchDepth, min_side: usize) -> Option<SubgroupModel> {
        struct Hit {
            magnitude: f64,
            z: ZScore,
            atoms: Vec<usize>,
        }
        let mut best: Option<(Hit, Vec<usize>)> = None;
        for k in 1..=depth.get() {
            let combos = self.combos(k);
            let hits: Vec<Option<Hit>> = combos
                .par_iter()
                .map(|combo| {
                    let mut local: Option<Hit> = None;
                    self.visit(combo, &mut |atoms, bits| {
                        if !self.fits(bits, min_side) {
                            return true;
                        }
                        if let Ok(z) = scorer.score(bits) {
                            let magnitude = z.magnitude();
                            if local.as_ref().is_none_or(|h| magnitude > h.magnitude) {
                                local = Some(Hit { magnitude, z, atoms: atoms.to_vec() });
                            }
                        }
                        true
                    });
                    local
                })
                .collect();
            for (hit, combo) in hits.into_iter().zip(combos) {
                let Some(hit) = hit else { continue };
                if best.as_ref().is_none_or(|(b, _)| hit.magnitude > b.magnitude) {
                    best = Some((hit, combo));
                }
            }
        }
        best.map(|(hit, combo)| SubgroupModel { criterion: self.criterion(&combo, &hit.atoms), train_score: hit.z })
    }
}

/// Every candidate criterion on `rows` in enumeration order, keeping those
/// with at least `min_side` rows on each side.
pub fn enumerate_criteria(
    data: &Dataset,
    rows: &[usize],
    depth: SearchDepth,
    min_side: usize,
) -> Vec<SubgroupCriterion> {
    CandidateSpace::build(data.table(), rows).criteria(depth, min_side)
}

/// The candidate with the largest |z| on `rows`; degenerate candidates are
/// skipped and ties go to the earlier candidate.
pub fn train_best_subgroup(
    data: &Dataset,
    rows: &[usize],
    test: TestKind,
    depth: SearchDepth,
    min_side: usize,
) -> Result<SubgroupModel, SearchError> {
    let scorer = PartitionScorer::new(data, rows, test)?;
    CandidateSpace::build(data.table(), rows).best(&scorer, depth, min_side).ok_or(SearchError::NoSubgroup)
}
