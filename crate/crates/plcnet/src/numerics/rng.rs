//! Seeded RNG with a bit-portable definition.
//!
//! Initialization and training draw from xoshiro256** whose 256-bit state is
//! expanded from the user seed with splitmix64. Both algorithms are fixed
//! integer arithmetic, so a seed produces the same stream on every platform
//! and toolchain; crate upgrades can never silently change a model init.

/// splitmix64 step: advances the state and returns the mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a salt.
///
/// Used to give every (sweep point, file) pair and every loss pattern its
/// own decorrelated stream while staying reproducible from one user seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut s = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    let a = splitmix64(&mut s);
    let b = splitmix64(&mut s);
    a ^ b.rotate_left(32)
}

/// xoshiro256** generator, splitmix64-seeded.
#[derive(Clone, Debug)]
pub struct SeededRng {
    s: [u64; 4],
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // The all-zero state is the one fixed point of xoshiro; unreachable
        // from splitmix64 expansion in practice, guarded anyway.
        if s == [0, 0, 0, 0] {
            s[0] = 0x9E3779B97F4A7C15;
        }
        SeededRng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Uses rejection so small moduli are unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Bernoulli draw with probability `p` of true.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_stream_for_seed_zero() {
        // Frozen outputs; splitmix64(0..) expands to the xoshiro state
        // [e220a8397b1dcdaf, 6e789e6aa1b965f4, 06c45d188009454f, f88bb8a8724c81ec]
        // and these are the first three xoshiro256** outputs from it.
        let mut rng = SeededRng::new(0);
        assert_eq!(rng.next_u64(), 0x99EC5F36CB75F2B4);
        assert_eq!(rng.next_u64(), 0xBF6E1F784956452A);
        assert_eq!(rng.next_u64(), 0x1A5F849D4933E6E0);
    }

    #[test]
    fn distinct_seeds_decorrelate() {
        let a: Vec<u64> = {
            let mut r = SeededRng::new(1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededRng::new(2);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_stays_in_range_and_covers_it() {
        let mut rng = SeededRng::new(123);
        let mut lo_seen = false;
        let mut hi_seen = false;
        for _ in 0..10_000 {
            let x = rng.uniform(-0.5, 0.5);
            assert!((-0.5..0.5).contains(&x));
            lo_seen |= x < -0.45;
            hi_seen |= x > 0.45;
        }
        assert!(lo_seen && hi_seen, "draws should reach both tails");
    }

    #[test]
    fn next_below_is_exhaustive_over_small_range() {
        let mut rng = SeededRng::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.next_below(7) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn shuffle_is_a_permutation_and_seed_stable() {
        let mut rng = SeededRng::new(9);
        let mut v: Vec<u32> = (0..20).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());

        let mut rng2 = SeededRng::new(9);
        let mut v2: Vec<u32> = (0..20).collect();
        rng2.shuffle(&mut v2);
        assert_eq!(v, v2);
    }

    #[test]
    fn mix_seed_changes_with_either_input() {
        assert_ne!(mix_seed(1, 1), mix_seed(1, 2));
        assert_ne!(mix_seed(1, 1), mix_seed(2, 1));
        assert_eq!(mix_seed(7, 9), mix_seed(7, 9));
    }
}
