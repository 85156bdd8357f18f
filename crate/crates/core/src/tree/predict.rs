use std::collections::BTreeMap;

use super::{TreeError, TreeModel, TreeNode};
use crate::data::{read_feature_table_from, FeatureTable};
use crate::search::CompiledCriterion;

/// One instance as raw cells keyed by column name. Absent columns are
/// treated as missing.
pub type Instance = BTreeMap<String, String>;

enum Route<'m, 't> {
    Leaf(&'m TreeNode),
    Split(CompiledCriterion<'t>, usize, usize),
}

/// A tree flattened against one table.
struct Router<'m, 't> {
    nodes: Vec<Route<'m, 't>>,
}

impl<'m, 't> Router<'m, 't> {
    fn new(root: &'m TreeNode, table: &'t FeatureTable) -> Self {
        fn add<'m, 't>(node: &'m TreeNode, table: &'t FeatureTable, out: &mut Vec<Route<'m, 't>>) -> usize {
            let at = out.len();
            match &node.split {
                None => out.push(Route::Leaf(node)),
                Some(split) => {
                    out.push(Route::Leaf(node));
                    let l = add(&split.left, table, out);
                    let r = add(&split.right, table, out);
                    out[at] = Route::Split(split.criterion.compile(table), l, r);
                }
            }
            at
        }
        let mut nodes = Vec::new();
        add(root, table, &mut nodes);
        Self { nodes }
    }

    fn leaf(&self, row: usize) -> &'m TreeNode {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Route::Leaf(node) => return node,
                Route::Split(c, l, r) => at = if c.matches(row) { *l } else { *r },
            }
        }
    }
}

/// Leaf value for an instance. With a known arm and arm summaries, this is
/// the arm's mean outcome in the leaf.
pub fn leaf_prediction(leaf: &TreeNode, arm: Option<u8>) -> f64 {
    let arm_mean = match (arm, &leaf.stats.arms) {
        (Some(1), Some(a)) => a.treated_mean,
        (Some(0), Some(a)) => a.control_mean,
        _ => None,
    };
    arm_mean.unwrap_or_else(|| leaf.stats.value())
}

impl TreeModel {
    /// Leaf reached by every row of `table`.
    pub fn leaves<'m>(&'m self, table: &FeatureTable) -> Vec<&'m TreeNode> {
        let router = Router::new(&self.root, table);
        (0..table.n()).map(|r| router.leaf(r)).collect()
    }

    pub fn predict(&self, table: &FeatureTable, treatment: Option<&[u8]>) -> Vec<f64> {
        self.leaves(table)
            .into_iter()
            .enumerate()
            .map(|(r, leaf)| leaf_prediction(leaf, treatment.map(|t| t[r])))
            .collect()
    }

    pub fn predict_instance(&self, instance: &Instance) -> Result<f64, TreeError> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(instance.keys())
                .and_then(|_| w.write_record(instance.values()))
                .map_err(|e| TreeError::Format(e.to_string()))?;
            w.flush().map_err(|e| TreeError::Format(e.to_string()))?;
        }
        let input = read_feature_table_from(buf.as_slice(), &self.schema)?;
        Ok(self.predict(&input.table, input.treatment.as_deref())[0])
    }
}
