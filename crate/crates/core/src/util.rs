//! Small shared helpers: deterministic hashing, seed derivation, statistics.

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Multiply-xor hasher with a fixed key.
///
/// `std` hash maps seed SipHash per process, which makes iteration order differ
/// between runs. Every map in the simulator uses this hasher instead so that a
/// rerun of the same scenario walks identical memory layouts, and because the
/// hot maps are keyed by small integers it is also much cheaper than SipHash.
#[derive(Default)]
pub struct FixedHasher(u64);

impl Hasher for FixedHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix(self.0 ^ b as u64);
        }
    }

    fn write_u16(&mut self, n: u16) {
        self.0 = mix(self.0 ^ n as u64);
    }

    fn write_u32(&mut self, n: u32) {
        self.0 = mix(self.0 ^ n as u64);
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = mix(self.0 ^ n);
    }

    fn write_usize(&mut self, n: usize) {
        self.0 = mix(self.0 ^ n as u64);
    }
}

fn mix(x: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub type DetHashMap<K, V> = HashMap<K, V, BuildHasherDefault<FixedHasher>>;
pub type DetHashSet<K> = HashSet<K, BuildHasherDefault<FixedHasher>>;

/// Derive an independent ChaCha stream from a root seed and a stream key.
///
/// Streams are keyed, not split sequentially, so adding a node (or drawing
/// more values on one stream) never perturbs any other stream.
pub fn derive_rng(root_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = mix(root_seed ^ mix(stream));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Mean of a sample, `None` when empty.
pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Median of a sample (average of middle pair for even sizes), `None` when empty.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        Some((v[n / 2 - 1] + v[n / 2]) / 2.0)
    }
}

/// Half-width of the two-sided 95% confidence interval for the sample mean,
/// using the Student t distribution. Zero for samples smaller than two.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    t_quantile_975(n - 1) * (var / n as f64).sqrt()
}

/// Two-sided 97.5% Student t quantile for small degrees of freedom.
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::INFINITY
    } else if df <= TABLE.len() {
        TABLE[df - 1]
    } else {
        1.96
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn derived_streams_are_stable_and_independent() {
        let mut a1 = derive_rng(42, 7);
        let mut a2 = derive_rng(42, 7);
        let mut b = derive_rng(42, 8);
        let xs1: Vec<u64> = (0..4).map(|_| a1.next_u64()).collect();
        let xs2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(xs1, xs2);
        assert_ne!(xs1, ys);
    }

    #[test]
    fn fixed_hasher_is_process_independent() {
        let mut m: DetHashMap<u32, u32> = DetHashMap::default();
        for i in 0..100 {
            m.insert(i, i * 2);
        }
        let keys: Vec<u32> = m.keys().copied().collect();
        let mut m2: DetHashMap<u32, u32> = DetHashMap::default();
        for i in 0..100 {
            m2.insert(i, i * 2);
        }
        let keys2: Vec<u32> = m2.keys().copied().collect();
        assert_eq!(keys, keys2);
    }

    #[test]
    fn mean_median_basics() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[2.0, 4.0]), Some(3.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn ci95_matches_hand_computation_for_five_samples() {
        // sample 1..5: mean 3, sd sqrt(2.5), t(4) = 2.776
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let hw = ci95_half_width(&xs);
        let expect = 2.776 * (2.5f64 / 5.0).sqrt();
        assert!((hw - expect).abs() < 1e-9, "{hw} vs {expect}");
        assert_eq!(ci95_half_width(&[1.0]), 0.0);
    }
}
