use serde::{Deserialize, Serialize};

pub const TOOL: &str = concat!("ztree ", env!("CARGO_PKG_VERSION"));

/// Provenance written at the top of every file the tool produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub tool: String,
    pub command: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        Self { tool: TOOL.to_string(), command: command.into(), seed }
    }

    /// `#`-prefixed lines for CSV and text outputs.
    pub fn comment_lines(&self) -> String {
        format!("# tool: {}\n# command: {}\n# seed: {}\n", self.tool, self.command, self.seed)
    }
}
