//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, word position)`, so a
//! worker can seek straight to its slice of a draw sequence without sharing
//! mutable state with other workers. The keystream is ChaCha8.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids. Task-specific streams add an offset derived from
/// the task index (see [`StreamId::for_task`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Init,
    Dropout,
    Data,
    Permutation,
    Reconfig,
    Support,
    Eval,
    Fisher,
    Encoder,
}

impl StreamId {
    pub fn id(self) -> u64 {
        match self {
            StreamId::Init => 0,
            StreamId::Dropout => 1,
            StreamId::Data => 2,
            StreamId::Permutation => 3,
            StreamId::Reconfig => 4,
            StreamId::Support => 5,
            StreamId::Eval => 6,
            StreamId::Fisher => 7,
            StreamId::Encoder => 8,
        }
    }

    /// Stream id for the `task`-th instance of this purpose.
    pub fn for_task(self, task: usize) -> u64 {
        ((task as u64 + 1) << 8) | self.id()
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;
const TWO_POW_M32: f64 = 1.0 / (1u64 << 32) as f64;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_stream(stream);
        Self { seed, stream, core }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Current position in 32-bit words.
    pub fn position(&self) -> u128 {
        self.core.get_word_pos()
    }

    pub fn seek(&mut self, word_pos: u128) {
        self.core.set_word_pos(word_pos);
    }

    pub fn skip(&mut self, words: u128) {
        let pos = self.position();
        self.seek(pos + words);
    }

    /// Independent cursor on the same stream, positioned at `word_pos`.
    pub fn fork_at(&self, word_pos: u128) -> RngStream {
        let mut other = self.clone();
        other.seek(word_pos);
        other
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.core.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform in `[0, 1)` from a single 32-bit word.
    pub fn next_unit_u32(&mut self) -> f64 {
        self.core.next_u32() as f64 * TWO_POW_M32
    }

    pub fn uniform(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        debug_assert!(lo < hi, "uniform requires lo < hi");
        let width = hi - lo;
        (0..n)
            .map(|_| {
                let v = lo + width * self.next_f64();
                // lo + width * u can round up to hi for u close to 1
                if v < hi {
                    v
                } else {
                    lo
                }
            })
            .collect()
    }

    /// Uniform integer in `0..n` via a 64x64 widening multiply.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.core.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.core.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.core.fill_bytes(dst)
    }
}
