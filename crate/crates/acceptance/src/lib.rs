//! Acceptance gate for `sta-core`; see `tests/acceptance.rs`.
