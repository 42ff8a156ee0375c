//! Criterion benchmarks for `ctlearn`; see `benches/`.
