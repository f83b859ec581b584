//! Criterion benchmarks of the cell, interface and evaluation kernels; see `benches/`.
