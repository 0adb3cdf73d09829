//! PCG32 (XSH-RR, 64-bit state, 32-bit output).
//!
//! Every stochastic step in the pipeline (synthetic scenes, shuffles, dropout
//! masks, weight initialization) draws from this generator so that runs with
//! equal seeds are bit-reproducible.

const MULTIPLIER: u64 = 6_364_136_223_846_793_005;

/// Stream selector used by [`Pcg32::seeded`].
pub const DEFAULT_STREAM: u64 = 0xda3e_39cb_94b9_5bdb;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    /// Seeds the generator exactly like the reference `pcg32_srandom_r(initstate, initseq)`.
    pub fn new(init_state: u64, init_seq: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (init_seq << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(init_state);
        rng.next_u32();
        rng
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(seed, DEFAULT_STREAM)
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(MULTIPLIER).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Uniform in `[0, 1)` with 32 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        f64::from(self.next_u32()) / 4_294_967_296.0
    }

    /// Uniform in `(-a, a)`; the lower endpoint is excluded by construction.
    pub fn symmetric(&mut self, a: f64) -> f64 {
        let u = self.next_f64();
        let v = (2.0 * u - 1.0) * a;
        if v <= -a {
            0.0
        } else {
            v
        }
    }

    /// Unbiased integer in `[0, bound)` (reference `pcg32_boundedrand_r`).
    pub fn bounded(&mut self, bound: u32) -> u32 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates, walking from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.bounded((i + 1) as u32) as usize;
            items.swap(i, j);
        }
    }
}
