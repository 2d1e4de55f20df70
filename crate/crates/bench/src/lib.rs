//! Criterion benchmarks for dynoclust; see `benches/`.
