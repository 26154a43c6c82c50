//! Per-stage seeds derived from one integer.

use std::collections::BTreeMap;

pub const STAGES: [&str; 5] = ["meanfield", "spectrum", "ode", "dns", "compare"];

/// One splitmix64 output step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds for every stage in [`STAGES`] order.
pub fn stage_seeds(seed: u64) -> BTreeMap<String, u64> {
    let mut state = seed;
    STAGES.iter().map(|s| (s.to_string(), splitmix64(&mut state))).collect()
}

pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    stage_seeds(seed)[stage]
}
