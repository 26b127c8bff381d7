use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{PllError, Result};

/// Named sub-streams split off a single root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Corruption = 1,
    Init = 2,
    Shuffle = 3,
    Sampling = 4,
    Folds = 5,
    CleanModel = 6,
}

/// Seedable generator; identical seed and stream give identical draws.
#[derive(Debug, Clone)]
pub struct RngState {
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(seed: u64, stream: Stream) -> Self {
        Self::with_stream(seed, stream as u64)
    }

    /// Generator on an arbitrary numbered stream of `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState { inner }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take the log of.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}

/// One Gamma(shape, 1) draw.
pub fn sample_gamma(shape: f64, rng: &mut RngState) -> Result<f64> {
    Ok(sample_gamma_ln(shape, rng)?.exp())
}

/// `ln` of a Gamma(shape, 1) draw.
///
/// Marsaglia–Tsang for `shape ≥ 1`; below that, the boost `z·U^(1/shape)` with
/// `z ~ Gamma(shape + 1)`, carried out in log space so tiny shapes never
/// underflow.
pub fn sample_gamma_ln(shape: f64, rng: &mut RngState) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(PllError::Domain {
            func: "sample_gamma",
            value: shape,
        });
    }
    if shape < 1.0 {
        let z = marsaglia_tsang(shape + 1.0, rng);
        let u = rng.uniform_open0();
        return Ok(z.ln() + u.ln() / shape);
    }
    Ok(marsaglia_tsang(shape, rng).ln())
}

fn marsaglia_tsang(shape: f64, rng: &mut RngState) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.uniform_open0();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}
