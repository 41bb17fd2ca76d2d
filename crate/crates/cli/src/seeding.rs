//! Sub-seed derivation. All randomness flows from the one config seed;
//! modules draw sub-seeds from fixed stream ids so they stay independent of
//! each other yet reproducible run to run.

/// One splitmix64 step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for bootstrap resampling.
pub const STREAM_BOOTSTRAP: u64 = 1;
/// Stream id for simulation fixtures.
pub const STREAM_SIMULATE: u64 = 2;

/// Derives the sub-seed for a stream: `splitmix64(root ^ splitmix64(stream))`.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream))
}
