//! Criterion benchmarks for the simulator and forward pass; see `benches/`.
