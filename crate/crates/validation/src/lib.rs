//! Holds the `acceptance` integration test; run it with `cargo test --test acceptance`.
