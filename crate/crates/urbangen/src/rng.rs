//! Deterministic random streams.
//!
//! A fixed PCG-XSH-RR 64/32 generator with hard-coded constants, so that
//! seeded choices reproduce bit-for-bit across runs, platforms, and ports to
//! other languages. Every seeded decision in the crate flows through this
//! type; nothing uses platform or thread-local randomness.

use std::f64::consts::PI;

/// PCG-XSH-RR 64/32.
///
/// state' = state * 6364136223846793005 + inc, output = rotate-right of the
/// xorshifted high bits. `inc` is fixed to the reference stream constant.
#[derive(Debug, Clone)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
    spare_gaussian: Option<f64>,
}

impl Pcg32 {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const DEFAULT_STREAM: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, Self::DEFAULT_STREAM)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let inc = (stream << 1) | 1;
        let mut rng = Pcg32 {
            state: 0,
            inc,
            spare_gaussian: None,
        };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    fn step(&mut self) {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(self.inc);
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        ((self.next_u32() as u64) << 32) | self.next_u32() as u64
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
    pub fn gen_range(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "gen_range bound must be positive");
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller; the second value of each pair is
    /// cached so draws come in a fixed order.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.gen_range(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices drawn without replacement from `0..n`,
    /// in draw order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct values from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let j = self.gen_range(pool.len());
            picked.push(pool.swap_remove(j));
        }
        picked
    }
}

/// FNV-1a over bytes; used to fold labels into seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Purpose-specific seed derived from a master seed, a label, and an extra
/// discriminator (tile hash, sample index, ...). Distinct labels give
/// independent streams from one configured seed.
pub fn derive_seed(master: u64, label: &str, extra: u64) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()).rotate_left(17) ^ splitmix64(extra))
}
