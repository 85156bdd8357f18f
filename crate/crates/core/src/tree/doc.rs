//! JSON model files.
//!
//! Field order is fixed and floats are written in shortest round-trip form,
//! so reading a model and writing it again reproduces the same bytes.

use serde::{Deserialize, Serialize};

use super::{LeafStats, LearnerConfig, Split, StopReason, TreeError, TreeModel, TreeNode};
use crate::artifact::ArtifactHeader;
use crate::cv::CvScore;
use crate::data::{FeatureKind, Schema};
use crate::search::{AtomForm, SubgroupCriterion};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    header: Option<ArtifactHeader>,
    format_version: u64,
    config: LearnerConfig,
    #[serde(default)]
    schema_fingerprint: Option<String>,
    schema: Schema,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    path: String,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cv_score: Option<CvScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    criterion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split_score: Option<f64>,
    leaf_stats: LeafStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop: Option<StopReason>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeDoc>,
}

impl NodeDoc {
    fn from_node(node: &TreeNode) -> Self {
        let (criterion, split_score, children) = match &node.split {
            None => (None, None, Vec::new()),
            Some(s) => (
                Some(s.criterion.to_string()),
                Some(s.score),
                vec![NodeDoc::from_node(&s.left), NodeDoc::from_node(&s.right)],
            ),
        };
        NodeDoc {
            path: node.path.clone(),
            n: node.stats.n,
            cv_score: node.cv_score.clone(),
            criterion,
            split_score,
            leaf_stats: node.stats.clone(),
            stop: node.stop,
            children,
        }
    }
}

fn invariant(msg: String) -> TreeError {
    TreeError::Invariant(msg)
}

struct Checker<'a> {
    schema: &'a Schema,
    config: &'a LearnerConfig,
}

impl Checker<'_> {
    fn node(&self, doc: NodeDoc, expected_path: &str) -> Result<TreeNode, TreeError> {
        let at = if doc.path.is_empty() { "root".to_string() } else { format!("node {}", doc.path) };
        if doc.path != expected_path {
            return Err(invariant(format!("{at}: expected path `{expected_path}`")));
        }
        if doc.n != doc.leaf_stats.n {
            return Err(invariant(format!("{at}: n disagrees with leaf_stats")));
        }
        if let Some(cv) = &doc.cv_score {
            self.cv(cv, &at)?;
        }
        let split = match (doc.criterion, doc.children.len()) {
            (None, 0) => {
                if doc.stop.is_none() {
                    return Err(invariant(format!("{at}: leaf without a stop reason")));
                }
                None
            }
            (Some(text), 2) => {
                if doc.stop.is_some() {
                    return Err(invariant(format!("{at}: split node with a stop reason")));
                }
                let criterion: SubgroupCriterion = text.parse().map_err(|e| invariant(format!("{at}: {e}")))?;
                self.criterion(&criterion, &at)?;
                if let LearnerConfig::Ztree(cfg) = self.config {
                    match &doc.cv_score {
                        Some(cv) if cv.mean_score >= cfg.threshold => {}
                        _ => {
                            return Err(invariant(format!(
                                "{at}: split without a CV score at or above the threshold {}",
                                cfg.threshold
                            )))
                        }
                    }
                }
                let score = doc
                    .split_score
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| invariant(format!("{at}: split without a finite split_score")))?;
                let mut children = doc.children.into_iter();
                let left = self.node(children.next().unwrap(), &format!("{expected_path}L"))?;
                let right = self.node(children.next().unwrap(), &format!("{expected_path}R"))?;
                if left.stats.n + right.stats.n != doc.n {
                    return Err(invariant(format!("{at}: children do not partition its {} rows", doc.n)));
                }
                Some(Split { criterion, score, left: Box::new(left), right: Box::new(right) })
            }
            _ => return Err(invariant(format!("{at}: criterion and children must both be present or absent"))),
        };
        Ok(TreeNode { path: doc.path, cv_score: doc.cv_score, split, stats: doc.leaf_stats, stop: doc.stop })
    }

    fn cv(&self, cv: &CvScore, at: &str) -> Result<(), TreeError> {
        if let LearnerConfig::Ztree(cfg) = self.config {
            if cv.per_repeat.len() != cfg.cv.repeats {
                return Err(invariant(format!(
                    "{at}: {} per-repeat scores for {} repeats",
                    cv.per_repeat.len(),
                    cfg.cv.repeats
                )));
            }
        }
        if cv.per_repeat.is_empty() || cv.per_repeat.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(invariant(format!("{at}: per-repeat scores must be finite and non-negative")));
        }
        let mean = CvScore::from_repeats(cv.per_repeat.clone()).mean_score;
        if (mean - cv.mean_score).abs() > 1e-12 * mean.abs().max(1.0) {
            return Err(invariant(format!("{at}: CV mean {} is not the mean of its repeats", cv.mean_score)));
        }
        Ok(())
    }

    fn criterion(&self, criterion: &SubgroupCriterion, at: &str) -> Result<(), TreeError> {
        for atom in criterion.atoms() {
            let spec = self
                .schema
                .feature(&atom.feature)
                .ok_or_else(|| invariant(format!("{at}: unknown feature `{}`", atom.feature)))?;
            let ok = match &atom.form {
                AtomForm::GreaterThan(_) => spec.kind.is_numeric(),
                AtomForm::Equals(level) => spec.kind == FeatureKind::Nominal && spec.level_index(level).is_some(),
            };
            if !ok {
                return Err(invariant(format!("{at}: atom `{atom}` does not fit feature `{}`", spec.name)));
            }
        }
        Ok(())
    }
}

impl TreeModel {
    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            header: self.header.clone(),
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            schema_fingerprint: Some(self.schema.fingerprint()),
            schema: self.schema.clone(),
            root: NodeDoc::from_node(&self.root),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a model file: format version, schema
    /// fingerprint, the threshold gate at every split, and row counts.
    pub fn from_json(text: &str) -> Result<TreeModel, TreeError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| TreeError::Format(e.to_string()))?;
        match value.get("format_version") {
            None => return Err(TreeError::Format("missing format_version".into())),
            Some(v) => match v.as_u64() {
                Some(FORMAT_VERSION) => {}
                Some(found) => return Err(TreeError::Version { found }),
                None => return Err(TreeError::Format("format_version is not an integer".into())),
            },
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| TreeError::Format(e.to_string()))?;
        let fingerprint = doc.schema_fingerprint.ok_or(TreeError::MissingFingerprint)?;
        if fingerprint != doc.schema.fingerprint() {
            return Err(invariant("schema fingerprint does not match the schema".into()));
        }
        for spec in &doc.schema.features {
            spec.validate()?;
        }
        if let LearnerConfig::Ztree(cfg) = &doc.config {
            cfg.validate()?;
        }
        let checker = Checker { schema: &doc.schema, config: &doc.config };
        let root = checker.node(doc.root, "")?;
        Ok(TreeModel { header: doc.header, config: doc.config, schema: doc.schema, root })
    }
}
