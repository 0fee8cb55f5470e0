//! Placeholder library so the benchmark targets have a crate to live in.
