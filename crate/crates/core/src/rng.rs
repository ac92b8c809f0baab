//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, index)`, so work can be split across
//! any number of workers without changing which numbers each sample sees.
//! The mixer is SplitMix64; not suitable for anything cryptographic.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed family of independent streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ 0x005E_ED0F_C0FF_EE00),
        }
    }

    /// Derived family for a labelled sub-task (iteration, bin, validation pass...).
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN))),
        }
    }

    /// Generator for the `index`-th sample of this family.
    pub fn draw(&self, index: u64) -> Draw {
        Draw {
            state: mix64(self.key.wrapping_add(index.wrapping_mul(GOLDEN))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

/// Short sequential generator owned by a single sample.
#[derive(Clone, Debug)]
pub struct Draw {
    state: u64,
}

impl Draw {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform point in the box `[lower, upper)`.
    pub fn point_in_box(&mut self, lower: &[f64], upper: &[f64], out: &mut [f64]) {
        for ((o, &lo), &hi) in out.iter_mut().zip(lower).zip(upper) {
            *o = self.uniform(lo, hi);
        }
    }
}
