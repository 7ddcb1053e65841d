//! Reproducible, counter-derived random number streams.
//!
//! Every stream is identified by a [`StreamLabel`]: a master seed, an optional
//! replication and level, a sample index and a purpose tag. The label is mixed
//! into a 256-bit ChaCha seed, so streams with distinct labels are disjoint by
//! construction and a given label always reproduces the same draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for. Distinct purposes yield disjoint streams
/// even when the rest of the label coincides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Partition,
    Noise,
    Heights,
    Pilot,
    Reference,
    Generic,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Partition => 0x706172,
            Purpose::Noise => 0x6e6f69,
            Purpose::Heights => 0x686569,
            Purpose::Pilot => 0x70696c,
            Purpose::Reference => 0x726566,
            Purpose::Generic => 0x67656e,
        }
    }
}

/// Fully qualified identity of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub master: u64,
    pub replication: u64,
    /// `None` for base-level and bootstrap samples, `Some(l)` for samples
    /// owned by MLMC correction level `l >= 1`.
    pub level: Option<u32>,
    pub index: u64,
    pub purpose: Purpose,
}

impl StreamLabel {
    pub fn new(master: u64, replication: u64, level: Option<u32>, index: u64, purpose: Purpose) -> Self {
        Self { master, replication, level, index, purpose }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A value-semantic random stream. Cloning forks the full state, so callers
/// that need independence must derive fresh labels instead of cloning.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    label: StreamLabel,
}

impl RngStream {
    pub fn from_label(label: StreamLabel) -> Self {
        let mut state = label.master ^ 0x6a75_6d70_6469_6666; // domain separator
        let mut absorb = |v: u64| {
            state ^= v.wrapping_mul(0x2545_f491_4f6c_dd1d);
            splitmix64(&mut state)
        };
        let mut seed = [0u8; 32];
        let words = [
            absorb(label.master),
            absorb(label.replication),
            absorb(match label.level {
                None => u64::MAX,
                Some(l) => l as u64,
            }),
            absorb(label.index ^ label.purpose.tag().rotate_left(17)),
        ];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self { rng: ChaCha8Rng::from_seed(seed), label }
    }

    pub fn label(&self) -> &StreamLabel {
        &self.label
    }
}

impl rand::RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        rand_chacha::rand_core::RngCore::next_u32(&mut self.rng)
    }
    fn next_u64(&mut self) -> u64 {
        rand_chacha::rand_core::RngCore::next_u64(&mut self.rng)
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand_chacha::rand_core::RngCore::fill_bytes(&mut self.rng, dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
