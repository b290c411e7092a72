//! Holds the `acceptance` test target only; run it with `cargo test -p topoprune-suite --test acceptance`.
