//! Deterministic RNG helpers.
//!
//! Every random draw in the crate goes through a seeded `ChaCha8Rng`, and
//! any RNG whose stream outlives a process (environment state, trainer
//! state) is checkpointed via [`RngState`] so a resumed run continues the
//! exact same stream.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Serializable snapshot of a `ChaCha8Rng`: seed, stream, and word
/// position. Restoring reproduces the generator bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos_hi: u64,
    word_pos_lo: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let pos: u128 = rng.get_word_pos();
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// Draw from N(0, 1) via Box-Muller; exactly two uniform draws per sample
/// keeps the stream layout platform-stable.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draw from N(mean, std).
pub fn normal(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    mean + std * standard_normal(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip_continues_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..17 {
            let _: f64 = rng.gen();
        }
        let snap = RngState::capture(&rng);
        let a: Vec<f64> = (0..8).map(|_| rng.gen()).collect();
        let mut restored = snap.restore();
        let b: Vec<f64> = (0..8).map(|_| restored.gen()).collect();
        assert_eq!(a, b);
    }
}
