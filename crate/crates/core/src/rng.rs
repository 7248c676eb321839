//! Counter-based random substreams.
//!
//! Every draw in the engine is addressed by `(seed, domain, path, step)`.
//! The seed and domain select a ChaCha8 key, the path selects the ChaCha
//! stream id and the step selects a fixed-size window of the keystream.
//! Results therefore never depend on how paths are scheduled across worker
//! threads, and a step that consumes a variable number of words (rejection
//! samplers) cannot shift the draws of later steps.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier written into output sidecars.
pub const SUBSTREAM_SCHEME: &str = "chacha8:key(seed,domain)/stream(path)/window(step,4096w)";

/// Keystream words reserved for one step of one path.
const STEP_WORDS: u128 = 1 << 12;

/// Independent families of substreams. Distinct domains never share a key,
/// so e.g. clock draws are independent of base-process draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Base,
    Clock,
    Lattice,
    Auxiliary,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Base => 0x6261_7365,
            Domain::Clock => 0x636c_6f63,
            Domain::Lattice => 0x6c61_7474,
            Domain::Auxiliary => 0x6175_7869,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, domain: Domain) -> [u8; 32] {
    let mut state = seed ^ domain.tag().rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A positioned random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Stream for `step` of `path` in `domain`.
    pub fn at(seed: u64, domain: Domain, path: u64, step: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(derive_key(seed, domain));
        inner.set_stream(path);
        inner.set_word_pos(step as u128 * STEP_WORDS);
        Self { inner }
    }

    /// Unwindowed stream for bulk draws (tests, Monte Carlo CDF evaluation).
    pub fn sequential(seed: u64, domain: Domain, path: u64) -> Self {
        Self::at(seed, domain, path, 0)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.sample(Open01)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
