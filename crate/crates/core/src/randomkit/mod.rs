//! Seeded random variates.
//!
//! [`RngStream`] is a ChaCha8 generator addressed by `(seed, stream_id)`:
//! every chain, threshold and replication gets its own stream so runs are
//! reproducible regardless of scheduling.

mod polya_gamma;

pub use polya_gamma::{draw_pg, draw_pg_with, pg_mean, pg_variance, PgConfig, PgOne};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream for a tuple of indices (threshold, replication, ...) under `seed`.
    pub fn derived(seed: u64, parts: &[u64]) -> Self {
        Self::new(seed, derive_stream_id(parts))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a tuple of indices into one stream id.
pub fn derive_stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5253_5444_525f_5354u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn draw_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on the open interval (0, 1).
pub fn draw_open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gamma draw in the shape–rate parameterization (mean `shape / rate`).
///
/// Marsaglia–Tsang squeeze for `shape >= 1`; smaller shapes use
/// `G(a) = G(a + 1) U^{1/a}`.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidShape(format!("gamma shape must be positive, got {shape}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidShape(format!("gamma rate must be positive, got {rate}")));
    }
    let g = if shape < 1.0 {
        let boost = draw_open_unit(rng).powf(1.0 / shape);
        marsaglia_tsang(shape + 1.0, rng) * boost
    } else {
        marsaglia_tsang(shape, rng)
    };
    Ok(g / rate)
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = draw_normal(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = draw_open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Index drawn with probability proportional to `probs` (renormalized).
pub fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::InvalidSimplex("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidSimplex(format!("invalid probability {p}")));
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidSimplex("probabilities sum to zero".into()));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Binomial count in `[0, n]`.
pub fn draw_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    let p = p.clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(u64::from(n), p)
        .expect("p in (0, 1)")
        .sample(rng) as u32
}
