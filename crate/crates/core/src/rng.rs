//! Stateless counter-based uniform sampling.
//!
//! Every random number is a pure function of its coordinates, so any draw can
//! be reproduced later from the same key. This is what makes path replay and
//! order-independent rendering possible without storing per-sample state.

/// Which random stream a draw belongs to. Separate streams keep the
/// acceptance test and the free-flight distance decorrelated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Accept,
    FreeFlight,
}

/// Coordinates of one uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub pass_seed: u64,
    pub pixel: (u32, u32),
    pub spp_index: u32,
    pub gaussian_id: u32,
    pub stream: Stream,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic uniform in [0, 1) for the given key.
#[inline]
pub fn sample_uniform(key: SampleKey) -> f64 {
    let stream = match key.stream {
        Stream::Accept => 0u64,
        Stream::FreeFlight => 1u64,
    };
    let mut h = splitmix64(key.pass_seed);
    h = splitmix64(h ^ ((key.pixel.0 as u64) << 32 | key.pixel.1 as u64));
    h = splitmix64(h ^ ((key.spp_index as u64) << 32 | key.gaussian_id as u64));
    h = splitmix64(h ^ stream);
    // upper 53 bits -> [0, 1)
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
