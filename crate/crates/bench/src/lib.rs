//! Criterion benchmarks for the drlq solvers live under `benches/`.
