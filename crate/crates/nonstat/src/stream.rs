//! Deterministic random streams keyed by (seed, path).
//!
//! Draws, Monte Carlo cells and repetitions each get an independent
//! counter-derived stream so results are reproducible regardless of how
//! work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

// splitmix64 finalizer; good avalanche for key derivation
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for the sub-task identified by `path` under the
/// run-level `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = mix(seed ^ 0x6e6f_6e73_7461_7421);
    for &p in path {
        state = mix(state ^ mix(p));
    }
    let mut key = [0u8; 32];
    let mut s = state;
    for chunk in key.chunks_mut(8) {
        s = mix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Stream labels, kept distinct so different pipeline stages never share
/// a stream even under the same seed.
pub mod label {
    pub const SIMULATE: u64 = 1;
    pub const MC_STUDY: u64 = 2;
    pub const NUGGET: u64 = 3;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a1 = substream(7, &[label::SIMULATE, 0]);
        let mut a2 = substream(7, &[label::SIMULATE, 0]);
        let mut b = substream(7, &[label::SIMULATE, 1]);
        let mut c = substream(8, &[label::SIMULATE, 0]);
        let x1: Vec<u64> = (0..8).map(|_| a1.next_u64()).collect();
        let x2: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        let y: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let z: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(x1, x2);
        assert_ne!(x1, y);
        assert_ne!(x1, z);
    }
}
