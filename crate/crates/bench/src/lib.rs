//! Benchmarks for the environment and the policy network; see `benches/`.
