//! Criterion benchmarks for the atesim kernels; see `benches/`.
