//! Holds the workspace acceptance suite (`cargo test -p spikepack-validation`).
//! The checks live in `tests/acceptance.rs`; this crate has no library code.
