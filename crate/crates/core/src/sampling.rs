//! Samplers for covariate laws.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::{self, SimRng};

/// A law on `R^d` that can be sampled from.
pub trait PointSampler: Sync {
    fn dim(&self) -> usize;

    /// Writes one draw into `out` (length `dim()`).
    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]);

    fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    /// `n` draws from one generator.
    fn sample_n(&self, rng: &mut SimRng, n: usize) -> PointSet {
        let d = self.dim();
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            self.sample_into(rng, row);
        }
        PointSet::from_flat(d, data).expect("sampler dimension is positive")
    }
}

/// Uniform law on an axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("box bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("box lower bounds must be below upper bounds"));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }
}

impl PointSampler for UniformBox {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        for ((o, l), u) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = l + (u - l) * rng.random::<f64>();
        }
    }
}

/// Uniform draw from the ball `B(center, radius)`.
pub fn sample_in_ball(rng: &mut SimRng, center: &[f64], radius: f64, out: &mut [f64]) {
    let d = center.len();
    let mut sq = 0.0;
    for o in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *o = g;
        sq += g * g;
    }
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64) / sq.sqrt();
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + r * *o;
    }
}

/// Draws `n` points with per-chunk substreams of `seed`, so the sample does
/// not depend on how the work is split across threads.
pub fn sample_chunked<S: PointSampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> PointSet {
    let d = sampler.dim();
    let mut data = vec![0.0; n * d];
    for (c, len) in rng::chunks(n) {
        let mut r = rng::stream(seed, &[c]);
        let start = c as usize * rng::CHUNK * d;
        for row in data[start..start + len * d].chunks_exact_mut(d) {
            sampler.sample_into(&mut r, row);
        }
    }
    PointSet::from_flat(d, data).expect("sampler dimension is positive")
}
