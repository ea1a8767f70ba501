//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream_id, t, domain)`, so trials
//! can be evaluated in any order or on any number of threads and still produce
//! bit-identical observations. The generator is SplitMix64 keyed by a mix of
//! the four coordinates; it is not cryptographically secure.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent substreams derived from the same `(seed, stream_id, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The observation itself.
    Observation = 1,
    /// The per-step law parameter of a non-stationary generator.
    Parameter = 2,
    /// Anything a caller wants kept apart from the two above.
    Auxiliary = 3,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tuple of words into a 64-bit key.
#[inline]
pub fn derive_key(words: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909u64;
    for &w in words {
        h = mix(h ^ w.wrapping_add(GOLDEN));
    }
    h
}

/// SplitMix64 stream starting at a derived key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream_id: u64, t: u64, domain: Domain) -> Self {
        Self {
            state: derive_key(&[seed, stream_id, t, domain as u64]),
        }
    }

    pub fn from_key(key: u64) -> Self {
        Self { state: key }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
