//! Keyed random streams.
//!
//! A stream is identified by `(seed, stream_id)`; together with the position
//! inside the stream this fixes every variate. Monte Carlo loops assign one
//! stream per replicate, so results do not depend on how replicates are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Offset between the stream-id ranges of consecutive protocol stages.
pub const STAGE_STRIDE: u64 = 1 << 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream `offset` positions further along the stream-id axis.
    ///
    /// Replicate `k` of a Monte Carlo loop rooted at `self` uses `self.offset(k)`.
    pub fn offset(self, offset: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_add(offset),
        }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `seed`, e.g. one calibration replicate.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_sequence() {
        let s = RngStream::new(42, 7);
        let a: Vec<u64> = (0..16)
            .map({
                let mut r = s.rng();
                move |_| r.random()
            })
            .collect();
        let mut r = s.rng();
        let b: Vec<u64> = (0..16).map(|_| r.random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn different_stream_ids_differ() {
        let a: u64 = RngStream::new(1, 0).rng().random();
        let b: u64 = RngStream::new(1, 1).rng().random();
        let c: u64 = RngStream::new(2, 0).rng().random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stage_strides_do_not_overlap() {
        let base = RngStream::new(0, STAGE_STRIDE);
        assert_eq!(base.offset(5).stream_id, STAGE_STRIDE + 5);
        assert!(base.offset(STAGE_STRIDE - 1).stream_id < 2 * STAGE_STRIDE);
    }

    #[test]
    fn child_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| child_seed(9, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
