//! Seed-splitting helpers.
//!
//! Every randomized component takes a 64-bit seed and derives independent
//! substreams with splitmix64, so results are reproducible for a fixed base
//! seed regardless of thread count.

/// splitmix64 step: a well-mixed bijection on u64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream `k` of `seed`.
pub fn split_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k.wrapping_add(1)))
}

/// Seed for replicate `replicate` at grid point `grid_idx`:
/// `base ^ hash(grid_idx, replicate)`.
pub fn replicate_seed(base: u64, grid_idx: u64, replicate: u64) -> u64 {
    base ^ splitmix64(splitmix64(grid_idx.wrapping_add(0x517C_C1B7_2722_0A95)) ^ replicate)
}
