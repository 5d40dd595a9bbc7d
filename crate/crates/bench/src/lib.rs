//! Criterion benchmarks for the linear-algebra and complex kernels; see `benches/`.
