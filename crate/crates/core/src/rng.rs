//! Reproducible random streams.
//!
//! Every unit of simulation work draws from its own ChaCha8 stream. The
//! 256-bit key is expanded from the master seed with SplitMix64, and the
//! 64-bit stream id is the SplitMix64 chain over the path of indices that
//! identifies the unit (cell, replicate, cluster, ...). ChaCha is counter
//! based, so a stream's output depends only on `(key, stream id)` and is
//! identical on every platform and for every worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Address of one random stream: a master seed plus a path of indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    master: u64,
    path: u64,
}

impl StreamSeed {
    pub fn root(master_seed: u64) -> Self {
        Self {
            master: master_seed,
            path: splitmix64(0),
        }
    }

    /// Derives the stream for sub-unit `index`.
    pub fn child(self, index: u64) -> Self {
        Self {
            master: self.master,
            path: splitmix64(self.path ^ splitmix64(index.wrapping_add(GOLDEN))),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    pub fn rng(self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.master;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }
}
