//! Splittable seeding.
//!
//! Every stochastic routine takes a [`Seed`] rather than a live generator
//! when its work can be split across threads. Child seeds are derived from
//! the parent by index, so a Monte Carlo trial or a client in a given round
//! always sees the same stream no matter how the work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives the seed of child `index`.
    pub fn child(self, index: u64) -> Seed {
        // two rounds of splitmix64 over (parent, index)
        let mixed = splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)));
        Seed(splitmix64(mixed))
    }

    /// Follows a path of child indices, e.g. `(trial, round)`.
    pub fn derive(self, path: &[u64]) -> Seed {
        path.iter().fold(self, |seed, &i| seed.child(i))
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed(value)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = Seed(7);
        assert_eq!(root.child(3), Seed(7).child(3));
        assert_ne!(root.child(3), root.child(4));
        assert_ne!(root.derive(&[1, 2]), root.derive(&[2, 1]));
        let a: u64 = root.child(0).rng().random();
        let b: u64 = root.child(0).rng().random();
        assert_eq!(a, b);
    }
}
