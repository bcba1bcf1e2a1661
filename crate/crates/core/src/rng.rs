//! Seeded random streams.
//!
//! All randomness comes from ChaCha20 keyed by the user seed. Every logical
//! consumer (a design column, a latent factor, the coefficient draw, the
//! noise vector, a partition, CV folds) reads its own ChaCha stream, so the
//! draws for column `j` never depend on how many other columns exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Stream families. The family occupies the top byte of the 64-bit stream
/// id and the index within the family the remaining bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Stage {
    Column = 1,
    Latent = 2,
    Coefficients = 3,
    Noise = 4,
    Partition = 5,
    Folds = 6,
    Misc = 7,
}

pub fn stream_id(stage: Stage, index: u64) -> u64 {
    debug_assert!(index < 1 << 56);
    ((stage as u64) << 56) | index
}

/// Deterministic seed mixing (SplitMix64 finalizer).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One substream with Box–Muller normals and Marsaglia–Tsang gammas.
pub struct Stream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stage: Stage, index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(stage, index));
        Stream { rng, spare: None }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take logs of.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn bernoulli(&mut self, prob: f64) -> bool {
        self.uniform() < prob
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// `ln G` for `G ~ Gamma(shape, 1)`. Shapes below one use the boost
    /// `G = G' U^(1/shape)` with `G' ~ Gamma(shape + 1)`, carried in log
    /// space because `U^(1/shape)` underflows for tiny shapes.
    pub fn ln_gamma_variate(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.uniform_open0().ln() / shape;
            return self.ln_gamma_variate(shape + 1.0) + boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let (x, v) = loop {
                let x = self.normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = self.uniform_open0();
            if u < 1.0 - 0.0331 * x * x * x * x || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d.ln() + v.ln();
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
