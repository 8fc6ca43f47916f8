//! Seeded randomness. Every random decision in the crate flows from a
//! `u64` seed through `ChaCha8`; parallel work derives independent
//! substreams with `derive_seed` so results do not depend on scheduling.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Root stream for a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes an ordered list of stream coordinates (site id, query index,
/// focus, repeat, ...) into one substream seed. Order-sensitive.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x51_7c_c1b7_2722_0a95u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Substream at the given coordinates.
pub fn derive_rng(parts: &[u64]) -> Rng {
    rng_from_seed(derive_seed(parts))
}

/// One standard-normal draw.
pub fn standard_normal(rng: &mut Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(7);
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn derive_seed_is_order_sensitive() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_ne!(derive_seed(&[0]), derive_seed(&[0, 0]));
    }

    #[test]
    fn substreams_decorrelate() {
        // Crude check: first draws of neighbouring substreams spread out.
        let firsts: Vec<u64> = (0..64)
            .map(|i| derive_rng(&[42, i]).gen::<u64>())
            .collect();
        let mut sorted = firsts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), firsts.len());
    }

    #[test]
    fn normal_draws_have_unit_scale() {
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = standard_normal(&mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
