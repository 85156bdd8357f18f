//! Benchmarks for the subgroup search and tree learner; see `benches/`.
