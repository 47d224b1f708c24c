//! Seeded random substreams.
//!
//! Every logical random stream (pair emission, noise, channel losses, each
//! detector) draws from its own ChaCha8 stream keyed by `(seed, stream id)`.
//! ChaCha is counter based, so adding a stream never shifts the numbers seen
//! by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed out for every substream.
pub type SimRng = ChaCha8Rng;

/// Stream identifiers. Sweep point `p` offsets these by `p << 8`, so point 0
/// uses the base streams.
pub mod stream {
    pub const PAIRS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const SIGNAL_DETECTOR: u64 = 4;
    pub const REFERENCE_DETECTOR: u64 = 5;
    pub const SATURATION: u64 = 6;
}

/// Returns the substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for logical stream `base` of sweep point `point`.
pub fn point_stream(point: usize, base: u64) -> u64 {
    ((point as u64) << 8) | base
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_independent_and_repeatable() {
        let a: Vec<u64> = substream(7, 1).random_iter().take(4).collect();
        let b: Vec<u64> = substream(7, 1).random_iter().take(4).collect();
        let c: Vec<u64> = substream(7, 2).random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn point_zero_is_the_base_stream() {
        assert_eq!(point_stream(0, stream::PAIRS), stream::PAIRS);
        assert_ne!(point_stream(0, stream::PAIRS), point_stream(1, stream::PAIRS));
        assert_ne!(point_stream(1, stream::PAIRS), point_stream(1, stream::NOISE));
    }
}
