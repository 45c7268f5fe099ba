//! Deterministic, splittable random-number streams.
//!
//! Every stochastic operation in this crate draws from an [`RngStream`]. A
//! stream is identified by the master seed and the path of split labels that
//! produced it, so a full experiment rerun with the same master seed yields
//! bit-identical output no matter how work is scheduled across threads.
//!
//! The construction is counter-based: the stream key is a hash chain over
//! `(master_seed, label, label, ...)` and the i-th output is a mix of
//! `(key, i)`. Splitting never consumes draws, so splitting a parent in any
//! order yields the same children.

use rand::RngCore;

const SEED_TAG: u64 = 0x9e6c_63d0_876a_3f6b;
const SPLIT_TAG: u64 = 0x53c5_ca59_b428_c35f;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer (Stafford mix 13). Bijective on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic stream of pseudo-random numbers, splittable into
/// statistically independent child streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream for a master seed.
    pub fn new(master_seed: u64) -> Self {
        RngStream {
            key: mix(master_seed ^ SEED_TAG),
            counter: 0,
        }
    }

    /// Child stream keyed by the parent's path extended with `label`.
    ///
    /// Depends only on the parent's identity, never on how many draws the
    /// parent has produced.
    pub fn split(&self, label: u64) -> Self {
        RngStream {
            key: mix(self.key ^ mix(label ^ SPLIT_TAG)),
            counter: 0,
        }
    }

    /// Child stream keyed by the parent's current draw position, consuming
    /// one draw. Successive forks of the same stream are independent.
    pub fn fork(&mut self) -> Self {
        let label = self.next_raw();
        self.split(label)
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key ^ self.counter.wrapping_mul(GOLDEN))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_paths_identical_draws() {
        let mut a = RngStream::new(7).split(0);
        let mut b = RngStream::new(7).split(0);
        for _ in 0..1000 {
            assert_eq!(a.next_raw(), b.next_raw());
        }
    }

    #[test]
    fn split_is_order_insensitive() {
        let parent = RngStream::new(42);
        let mut burned = parent.clone();
        for _ in 0..17 {
            burned.next_raw();
        }
        // Splitting after draws yields the same child as splitting fresh.
        assert_eq!(parent.split(3), burned.split(3));
        // Sibling order does not matter either.
        let c1 = parent.split(1);
        let c2 = parent.split(2);
        let c2_first = parent.split(2);
        let c1_second = parent.split(1);
        assert_eq!(c1, c1_second);
        assert_eq!(c2, c2_first);
    }

    #[test]
    fn distinct_labels_decorrelate() {
        let parent = RngStream::new(0);
        let mut a = parent.split(0);
        let mut b = parent.split(1);
        let differing = (0..1000)
            .filter(|_| {
                let ua = a.uniform();
                let ub = b.uniform();
                (ua - ub).abs() > 1e-12
            })
            .count();
        assert!(differing > 900, "only {differing}/1000 positions differ");
    }

    #[test]
    fn nested_path_is_pure() {
        let a = RngStream::new(123).split(1).split(2);
        let b = RngStream::new(123).split(1).split(2);
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_reference_draws() {
        // Pins the stream construction: any change here breaks byte-identical
        // reruns of persisted experiments.
        let mut s = RngStream::new(2024).split(5);
        let observed: Vec<u64> = (0..3).map(|_| s.next_raw()).collect();
        assert_eq!(observed, frozen_first_three());
    }

    fn frozen_first_three() -> Vec<u64> {
        // Recompute the construction independently of the RngStream methods.
        fn mix(mut z: u64) -> u64 {
            z ^= z >> 30;
            z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z ^= z >> 27;
            z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        }
        let root = mix(2024 ^ SEED_TAG);
        let key = mix(root ^ mix(5 ^ SPLIT_TAG));
        (1..=3u64).map(|c| mix(key ^ c.wrapping_mul(GOLDEN))).collect()
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = RngStream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
