//! Stable seed derivation. Every random stream in a run is derived from the
//! master seed through these functions, never from ambient entropy.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash accumulator over `u64` words.
#[derive(Clone, Copy, Debug)]
pub struct Mix(u64);

impl Mix {
    pub fn new(domain: u64) -> Self {
        Mix(splitmix(domain))
    }

    pub fn push(self, word: u64) -> Self {
        Mix(splitmix(self.0 ^ splitmix(word)))
    }

    pub fn finish(self) -> u64 {
        splitmix(self.0)
    }

    /// Uniform draw in [0, 1) from the top 53 bits.
    pub fn unit(self) -> f64 {
        (self.finish() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Child seed for the stream identified by `path` under `master`.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(Mix::new(master), |m, &w| m.push(w)).finish()
}
