//! Acceptance checks for kk-core live in tests/acceptance.rs.
