//! Criterion benchmarks of the training hot paths; see `benches/hot_paths.rs`.
