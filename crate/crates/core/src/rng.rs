//! Counter-based random substreams.
//!
//! Replicate `i` of an experiment seeded with `master_seed` always draws from
//! the ChaCha8 stream `(key = expand(master_seed), stream = i)`, so the full
//! replicate set is a pure function of the seed and the replicate count,
//! whatever order the replicates are executed in.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream for replicate `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1) with 53 random bits.
#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Exponential(rate) draw by inversion. `rate == 0` yields `+inf`.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -open_unit(rng).ln() / rate
}

/// Convenience: a seeded generator for non-replicated sampling.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
