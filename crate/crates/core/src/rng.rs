//! Seeded, splittable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream tags. Each tag owns a disjoint range of ChaCha stream ids.
pub const FBM_STREAM: u64 = 0;
pub const BM_STREAM: u64 = 1;
pub const MEASURE_STREAM: u64 = 2;
pub const PROBE_STREAM: u64 = 3;

/// Independent generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 32) | (index & 0xffff_ffff));
    rng
}

pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
