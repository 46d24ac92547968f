//! Seeded random streams. A stream is `(seed, stream id)`; chunked Monte Carlo
//! work uses the chunk index as stream id so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Number of samples drawn per stream in chunked generators.
pub const CHUNK: usize = 1024;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` standard normals, generated chunk by chunk from independent streams.
pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    crate::par::for_each_chunk(&mut out, CHUNK, |i, c| {
        let mut r = stream(seed, i as u64);
        for v in c.iter_mut() {
            *v = normal(&mut r);
        }
    });
    out
}
