//! Seeded, splittable random streams.
//!
//! Every run derives all of its randomness from a single 64-bit seed. Each
//! component (actor sampling, replay sampling, environment noise, ...) gets
//! its own named stream so that adding a consumer in one place never shifts
//! the random sequence seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// FNV-1a, used to derive per-stream ids from labels.
fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct SplitRng {
    inner: ChaCha12Rng,
    seed: u64,
}

impl SplitRng {
    pub fn from_seed(seed: u64) -> Self {
        SplitRng {
            inner: ChaCha12Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Derive an independent stream. Splitting is a pure function of the
    /// parent's identity and the label, not of how much the parent has
    /// consumed. All streams share the root key; only the stream id differs.
    pub fn split(&self, label: &str) -> SplitRng {
        let stream = self
            .inner
            .get_stream()
            .rotate_left(17)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ hash_label(label);
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        SplitRng {
            inner: rng,
            seed: self.seed,
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn gen_range(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Sample `k` distinct indices from 0..n (k <= n).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} distinct indices from 0..{n}");
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    /// Serializable state: (seed, stream, word position).
    pub fn state(&self) -> (u64, u64, u128) {
        (
            self.seed,
            self.inner.get_stream(),
            self.inner.get_word_pos(),
        )
    }

    pub fn restore(seed: u64, stream: u64, word_pos: u128) -> Self {
        // The ChaCha key is always derived from the logical seed; only the
        // stream id and position vary between splits.
        let mut parent = ChaCha12Rng::seed_from_u64(seed);
        parent.set_stream(stream);
        parent.set_word_pos(word_pos);
        SplitRng {
            inner: parent,
            seed,
        }
    }
}
