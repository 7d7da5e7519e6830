//! Criterion benchmarks for the scheduler; see `benches/`.
