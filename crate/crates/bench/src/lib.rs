//! Criterion benchmarks for `sparq-core`; run with `cargo bench -p sparq-bench`.
