//! Workloads shared by the criterion benches.

use oqw_core::random::{self, WalkShape};
use oqw_core::trajectory::rng_for;
use oqw_core::{fixtures, WalkModel};

/// Lattice windows used for the scaling benches.
pub const WINDOWS: [i64; 3] = [10, 20, 40];

/// Named models: the two finite fixtures and a seeded random walk on six
/// vertices with `C²` and `C³` spaces.
pub fn models() -> Vec<(&'static str, WalkModel)> {
    let shape = WalkShape { vertices: 6, max_dim: 3, ..Default::default() };
    vec![
        ("ex2.6", fixtures::ex2_6()),
        ("ex3.4.1", fixtures::ex3_4_1()),
        ("random6", random::walk(&mut rng_for(7, 0), &shape)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_valid() {
        for (name, m) in models() {
            assert!(oqw_core::validate(&m).passed(), "{name}");
        }
    }
}
