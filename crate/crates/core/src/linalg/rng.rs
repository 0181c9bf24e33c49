//! Seedable random streams.
//!
//! Every random decision in a run (node partitioning, per-node permutations,
//! privacy noise, controller exploration, network initialization) draws from
//! its own [`RngStream`]. Streams are derived from a single 64-bit root seed
//! by [`RngStream::derive`], so adding draws to one stream never shifts
//! another, and two runs that share a root seed share every stream.
//!
//! The generator is PCG-XSL-RR 128/64 (`rand_pcg::Pcg64`). Uniform and
//! Gaussian variates are produced here rather than through `rand`'s
//! distribution code so the exact bit pattern of every draw is pinned by this
//! crate, not by a dependency version.

use rand_core::Rng;
use rand_pcg::Pcg64;

/// Identifies the generator family in exported metadata.
pub const ALGORITHM: &str = "pcg64-xsl-rr-128/64";

const PCG_STREAM: u128 = 0x2360_ed05_1fc6_5da4_4385_df64_9fcc_f645;

/// SplitMix64 finalizer; used for seed splitting only.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, so stream names map to stable integers.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: Pcg64,
    draws: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let hi = splitmix64(seed);
        let lo = splitmix64(hi ^ seed.rotate_left(17));
        let state = (u128::from(hi) << 64) | u128::from(lo);
        RngStream {
            seed,
            inner: Pcg64::new(state, PCG_STREAM),
            draws: 0,
            spare_normal: None,
        }
    }

    /// Child stream keyed by `(root seed, label, index)`.
    ///
    /// The child seed is `splitmix64(seed ^ splitmix64(hash(label) + index))`;
    /// it does not depend on how many draws the parent has made.
    pub fn derive(seed: u64, label: &str, index: u64) -> Self {
        let key = splitmix64(label_hash(label).wrapping_add(index));
        RngStream::new(splitmix64(seed ^ key))
    }

    /// Child of this stream's seed, see [`RngStream::derive`].
    pub fn child(&self, label: &str, index: u64) -> Self {
        RngStream::derive(self.seed, label, index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` (Lemire's nearly-divisionless method).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as usize
    }

    /// Standard normal variate via Box–Muller; the second variate of each
    /// pair is cached and returned by the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
