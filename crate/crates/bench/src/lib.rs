//! Criterion benchmarks for the cayley-core hot paths; see `benches/`.
