//! Counter-based stream splitting.
//!
//! Every random stream in the crate is a `ChaCha8Rng` whose seed is a
//! SplitMix64 fold of `(master seed, domain tag, counters...)`. A trial's fault
//! draw depends only on `(master, TRIAL, trial id)` and its measurement noise
//! only on `(master, NOISE, trial id, epoch index)`; within a noise stream the
//! k-th normal variate belongs to the k-th satellite pair in row-major `i < j`
//! order. Changing any other experiment parameter leaves these draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_TRIAL: u64 = 0x7472_6961_6c00_0001;
pub const DOMAIN_NOISE: u64 = 0x6e6f_6973_6500_0002;
pub const DOMAIN_CALIBRATION: u64 = 0x6361_6c69_6200_0003;
pub const DOMAIN_GEOMETRY: u64 = 0x6765_6f6d_0000_0004;
pub const DOMAIN_TRAINING: u64 = 0x7472_6169_6e00_0005;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, domain: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(domain));
    for &c in counters {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0xA5A5_A5A5_A5A5_A5A5)));
    }
    h
}

pub fn stream(master: u64, domain: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, domain, counters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = stream(7, DOMAIN_NOISE, &[1, 2]);
        let mut b = stream(7, DOMAIN_NOISE, &[1, 2]);
        for _ in 0..4 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
        assert_ne!(derive_seed(7, DOMAIN_NOISE, &[1, 2]), derive_seed(7, DOMAIN_NOISE, &[2, 1]));
        assert_ne!(derive_seed(7, DOMAIN_NOISE, &[1]), derive_seed(7, DOMAIN_TRIAL, &[1]));
        assert_ne!(derive_seed(7, DOMAIN_NOISE, &[1]), derive_seed(8, DOMAIN_NOISE, &[1]));
    }
}
