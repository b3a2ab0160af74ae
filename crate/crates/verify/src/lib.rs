//! Acceptance scenarios for flightlab; see `tests/acceptance.rs`.
//!
//! Run with `cargo test -p flightlab-verify --test acceptance`. Each criterion
//! prints one `PASS` or `FAIL` line; the target fails if any line fails.
