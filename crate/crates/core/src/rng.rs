//! Counter-based seeding.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, stream)`. Sampling point `i` of a dataset, shard `s` of a Monte
//! Carlo run or layer `l` of a network reads its own stream, so results do
//! not depend on how work is split across threads.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive sub-seeds for `(cell, trial)` pairs.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for a labelled unit of work.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(seed ^ mix64(a)) ^ mix64(b.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng)).collect()
}

/// Fill `out` with a uniform draw from the unit sphere (normalized Gaussian).
pub fn fill_uniform_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = gaussian(rng);
        }
        let norm = libm::sqrt(out.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-150 {
            out.iter_mut().for_each(|x| *x /= norm);
            return;
        }
    }
}
