//! Counter-based randomness.
//!
//! Every random quantity is addressed by `(master seed, purpose, index)` and
//! drawn from a ChaCha8 stream whose key is derived from the first two and
//! whose stream id selects a fixed-size block. The value at a given address
//! therefore never depends on thread count or on which other values were
//! drawn first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Entries per stream block.
pub const BLOCK: usize = 4096;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Gaussian disorder tensor of the given degree.
    Disorder(u32),
    /// Brownian increments of the sampler.
    Brownian,
    /// Independent rounding uniforms.
    Rounding,
    /// Glauber dynamics: site choices and acceptance uniforms.
    Glauber,
    /// Planted spin vector.
    Planted,
    /// Initial configurations and other auxiliary draws.
    Auxiliary(u64),
}

impl Purpose {
    fn code(self) -> (u64, u64) {
        match self {
            Purpose::Disorder(p) => (1, u64::from(p)),
            Purpose::Brownian => (2, 0),
            Purpose::Rounding => (3, 0),
            Purpose::Glauber => (4, 0),
            Purpose::Planted => (5, 0),
            Purpose::Auxiliary(k) => (6, k),
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// 256-bit key for `(seed, purpose)`.
pub fn derive_key(seed: u64, purpose: Purpose) -> [u8; 32] {
    let (tag, sub) = purpose.code();
    let mut state = splitmix(seed ^ splitmix(tag.wrapping_mul(0xA24B_AED4_963E_E407) ^ sub));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Independent seed number `index` derived from `master`, used for replicas
/// and for the second disorder of a coupled pair.
pub fn child_seed(master: u64, index: u64) -> u64 {
    splitmix(master ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator positioned at the start of block `block` for `(seed, purpose)`.
pub fn block_rng(seed: u64, purpose: Purpose, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(derive_key(seed, purpose));
    rng.set_stream(block);
    rng
}

/// Generator for a whole sub-stream, e.g. one Euler step or one sample.
pub fn stream_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    block_rng(seed, purpose, index)
}

/// Fills `out` with standard normals at flat positions `offset..offset+len`.
///
/// The output is identical to filling a single long vector from position 0,
/// whichever way the caller splits the range.
pub fn fill_normals(seed: u64, purpose: Purpose, offset: usize, out: &mut [f64]) {
    let mut pos = offset;
    let mut written = 0;
    while written < out.len() {
        let block = pos / BLOCK;
        let within = pos % BLOCK;
        let mut rng = block_rng(seed, purpose, block as u64);
        for _ in 0..within {
            let _: f64 = rng.sample(StandardNormal);
        }
        let take = (BLOCK - within).min(out.len() - written);
        for slot in &mut out[written..written + take] {
            *slot = rng.sample(StandardNormal);
        }
        written += take;
        pos += take;
    }
}

/// `len` standard normals from sub-stream `index`.
pub fn normals(seed: u64, purpose: Purpose, index: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, purpose, index);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `len` uniforms on `[0, 1)` from sub-stream `index`.
pub fn uniforms(seed: u64, purpose: Purpose, index: u64, len: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, purpose, index);
    (0..len).map(|_| rng.random::<f64>()).collect()
}
