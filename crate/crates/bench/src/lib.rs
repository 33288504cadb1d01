//! Criterion benchmarks for inodefs; see `benches/`.
