//! Seed derivation for independent random streams.
//!
//! Every random draw in a simulation comes from a generator keyed by the
//! master seed plus a purpose tag and coordinates (slot, center, ...), so
//! results never depend on evaluation order or thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    Task = 1,
    Probe = 2,
    Train = 3,
    Trace = 4,
    Solver = 5,
    Instance = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: Purpose, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(purpose as u64));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, purpose: Purpose, coords: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, purpose, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, Purpose::Probe, &[1, 2]).random();
        let b: u64 = stream(7, Purpose::Probe, &[1, 2]).random();
        let c: u64 = stream(7, Purpose::Probe, &[2, 1]).random();
        let d: u64 = stream(7, Purpose::Train, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
