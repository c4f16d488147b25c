//! Benchmark-only crate. The measurements live in `benches/trainer.rs`;
//! run them with `cargo bench -p bqstruct-bench`.
