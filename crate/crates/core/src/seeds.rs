//! Derivation of independent component seeds from one run seed.

/// Stream offsets mixed into the run seed.
pub const SOLVER_STREAM: u64 = 0;
pub const POLICY_STREAM: u64 = 1;
pub const DEGRADE_STREAM: u64 = 2;
pub const LOG_STREAM: u64 = 3;

/// Deterministically combine a seed with a stream or index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
