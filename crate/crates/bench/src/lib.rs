//! Benchmarks for `sampnum-core` live in `benches/`; run them with
//! `cargo bench -p sampnum-bench`.
