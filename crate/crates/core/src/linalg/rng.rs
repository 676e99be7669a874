//! Deterministic random numbers.
//!
//! The generator is xoshiro256++ seeded through splitmix64, a fixed,
//! documented scheme: the same seed and the same call sequence produce the
//! same stream within one build of this crate. Bit-compatibility across
//! implementations or future algorithm changes is not promised.

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; also used as the seed-splitting mix.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a stream `tag`.
///
/// The scheme is `mix64(base + GOLDEN * (tag + 1))` with wrapping
/// arithmetic. Distinct tags give statistically independent streams; the
/// mapping is fixed so that experiment seeds are reproducible from a single
/// master seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix64(base.wrapping_add(GOLDEN.wrapping_mul(tag.wrapping_add(1))))
}

/// Seeded xoshiro256++ stream. Single-owner: hand each parallel worker its
/// own instance derived via [`derive_seed`].
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        // splitmix64 expansion of the seed into the 256-bit state.
        let mut s = seed;
        let mut state = [0u64; 4];
        for slot in &mut state {
            s = s.wrapping_add(GOLDEN);
            *slot = mix64(s);
        }
        SeededRng {
            state,
            seed,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe under `ln`.
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            p.swap(i, j);
        }
        p
    }
}

/// Draws `n` values from N(mean, std^2). A zero std yields `mean` repeated
/// without consuming the stream.
pub fn gaussian(rng: &mut SeededRng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if std < 0.0 {
        return Err(Error::contract(format!(
            "gaussian std must be >= 0, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(vec![mean; n]);
    }
    Ok((0..n).map(|_| mean + std * rng.normal()).collect())
}
