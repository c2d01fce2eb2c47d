//! Criterion benchmarks for the facerec pipeline live under `benches/`.
