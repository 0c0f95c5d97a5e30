//! Shared fixtures for the criterion benches.

use fairnorm_core::{generate_synthetic, make_splits, Graph, SyntheticSpec};

/// The 766-node two-block benchmark graph with the standard 50/25/25 split.
pub fn bench_graph() -> Graph {
    let mut g = generate_synthetic(&SyntheticSpec::bench800(11)).expect("bench spec is feasible");
    make_splits(&mut g, (0.5, 0.25, 0.25), 1).expect("bench split is feasible");
    g
}
