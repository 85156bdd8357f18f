//! Decision trees that split on the best-scoring subgroup of each node and
//! only when its cross-validated z score clears a threshold.

pub mod artifact;
pub mod cart;
pub mod cv;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod search;
pub mod stats;
pub mod synth;
pub mod tree;
pub mod tuning;

pub use artifact::ArtifactHeader;
pub use cart::{learn_cart, truncate_depth, tune_cart, CartParams};
pub use cv::{internal_cv_score, CvConfig, CvError, CvScore};
pub use data::{Dataset, NaPolicy, Schema, SchemaOverrides, TargetKind};
pub use harness::{run_benchmark, BenchmarkReport, BenchmarkSpec, Method};
pub use metrics::{auroc, rmse, MetricKind};
pub use search::{apply_model, enumerate_criteria, train_best_subgroup, SearchDepth, SubgroupCriterion, SubgroupModel};
pub use stats::{select_test, TestKind, ZScore};
pub use synth::{generate, GeneratorMode, GeneratorSpec};
pub use tree::{learn_tree, LearnerConfig, TreeConfig, TreeError, TreeModel, TreeNode};
pub use tuning::{default_grid, tune_threshold, ExternalCv, TuningReport};
