//! Deterministic pseudo-random numbers.
//!
//! Every randomized step in the pipeline (weight init, shuffling, dropout
//! masks, subsampling, synthetic data) draws from [`SplitMix64`], so a run is
//! fully reproducible from one `u64` seed, and fixtures can be regenerated
//! bit-identically by any implementation language.
//!
//! The generator is the splitmix64 sequence: state advances by the constant
//! `0x9E37_79B9_7F4A_7C15` and each output is the mixed post-increment state,
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z  = state
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! all in wrapping 64-bit arithmetic. Derived values are defined exactly as:
//!
//! * `next_f64`: `((next_u64() >> 11) as f64) * 2^-53`, uniform in `[0, 1)`.
//! * `next_normal`: Box-Muller, `sqrt(-2 ln u1) * cos(2 pi u2)` with
//!   `u1 = ((next_u64() >> 11) + 1) * 2^-53` in `(0, 1]` drawn first and
//!   `u2 = next_f64()` second; the sine partner is discarded, so every
//!   normal consumes exactly two raw draws.
//! * `next_range(n)`: `next_u64() % n` (the modulo bias is irrelevant at the
//!   range sizes used here).
//!
//! Sub-streams are split off with [`derive`]: `derive(seed, tag)` feeds
//! `seed + (tag + 1) * 0x9E3779B97F4A7C15` through the mixing function above.
//! Nested derivations (`derive(derive(seed, a), b)`) give independent streams
//! per epoch, per sample, and so on.

/// Splitmix64 finalizer: the mixing function applied to every output.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derive the seed of an independent sub-stream from `seed` and a `tag`.
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix64(seed.wrapping_add(tag.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// The splitmix64 generator. `Clone` + `Copy` are deliberate: forking the
/// state is how callers freeze a stream for replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller; consumes two raw draws.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform in `0..n`. Panics if `n == 0`.
    pub fn next_range(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_range(0)");
        self.next_u64() % n
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_range(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
