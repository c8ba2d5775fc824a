//! Seeded random streams.
//!
//! A stream is addressed by `(master_seed, stream_id)`: the master seed keys a
//! ChaCha12 generator and the stream id selects its 64-bit stream counter, so
//! deriving a stream never depends on how many other streams were derived
//! before it or on which thread derives it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

/// A reproducible random stream owned by a single task.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha12Rng,
}

/// Returns the stream `stream_id` of the generator keyed by `master_seed`.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha12Rng::seed_from_u64(master_seed);
    inner.set_stream(stream_id);
    RngStream {
        master_seed,
        stream_id,
        inner,
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal<T: Scalar>(&mut self) -> T {
        let z: f64 = self.inner.sample(StandardNormal);
        T::lit(z)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform<T: Scalar>(&mut self) -> T {
        let u: f64 = self.inner.random();
        T::lit(u)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer; used to turn `(seed, tag, index)` triples into
/// well-separated child seeds.
pub fn mix_seed(seed: u64, tag: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ tag) ^ index)
}
